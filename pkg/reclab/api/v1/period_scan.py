"""period-scan: tau(B_{eps,n}(x)) / n over mu-random centers and an n-grid."""
import logging
from typing import Annotated, Optional

import typer
from tqdm import tqdm

from reclab.api.v1.common import ConfigOpt, OutOpt, SeedOpt, SystemOpt, resolved_system, start_run
from reclab.core.config import config
from reclab.core.deps import require_metric
from reclab.core.errors import InvalidInputError
from reclab.models.schemas import PeriodRow, PeriodScanSummary
from reclab.services.bowen import BowenBall, ball_period
from reclab.services.utils import CENTER_STREAM, median, parse_int_grid, trial_rng

logger = logging.getLogger(__name__)

COMMAND = "period-scan"

DEFAULTS = {
    "system": "doubling",
    "eps": 0.05,
    "n": "8,16,24",
    "centers": 100,
    "method": None,
    "samples": 1000,
    "seed": config.DEFAULT_SEED,
    "out": None,
}


def period_scan(
    ctx: typer.Context,
    system: SystemOpt = None,
    eps: Annotated[Optional[float], typer.Option(help="ball radius")] = None,
    n: Annotated[Optional[str], typer.Option("--n", help="grid of ball lengths")] = None,
    centers: Annotated[Optional[int], typer.Option(help="number of mu-random centers")] = None,
    method: Annotated[Optional[str], typer.Option(help="exact or sampled; exact where the arc backend applies")] = None,
    samples: Annotated[Optional[int], typer.Option(help="sampled mode: points drawn inside each ball")] = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """Exact periods of Bowen balls; sampled mode reports uncertified upper bounds."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    _, built = resolved_system(values)
    metric = require_metric(built)
    grid = parse_int_grid(values["n"])
    if values["centers"] < 1:
        raise InvalidInputError("centers must be at least 1")

    points = [float(metric.sample(trial_rng(values["seed"], CENTER_STREAM, c), 1)[0]) for c in range(values["centers"])]
    rows: list[PeriodRow] = []
    for n in grid:
        for c, x in enumerate(tqdm(points, desc=f"n={n}", disable=not run.progress)):
            ball = BowenBall(metric, x, values["eps"], n)
            method = values["method"] or ("exact" if ball.has_exact_backend else "sampled")
            bracket = ball_period(ball, method, samples=values["samples"], seed=values["seed"] + c)
            tau = bracket.upper
            rows.append(
                PeriodRow(
                    n=n,
                    center=x,
                    tau=tau,
                    tau_over_n=tau / n if tau is not None else None,
                    certified=bracket.certified,
                )
            )

    medians = {}
    for n in grid:
        ratios = [r.tau_over_n for r in rows if r.n == n and r.tau_over_n is not None]
        if ratios:
            medians[str(n)] = median(ratios)
            logger.info("n=%d: median tau/n = %.4f over %d centers", n, medians[str(n)], len(ratios))

    summary = PeriodScanSummary(command=COMMAND, parameters=run.parameters, rows=rows, median_tau_over_n=medians)
    run.finish(
        ["n", "center", "tau", "tau_over_n"],
        [[r.n, r.center, r.tau, r.tau_over_n] for r in rows],
        summary,
    )
