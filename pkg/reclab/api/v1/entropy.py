"""entropy: Brin-Katok and recurrence-time entropy estimates over an n-grid."""
import logging
from typing import Annotated, Optional

import typer
from tqdm import tqdm

from reclab.api.v1.common import ConfigOpt, OutOpt, SeedOpt, SystemOpt, resolved_system, start_run
from reclab.core.config import config
from reclab.core.deps import require_metric
from reclab.core.errors import InvalidInputError
from reclab.models.schemas import EntropyRow, EntropySummary
from reclab.services.bowen import entropy_estimates
from reclab.services.systems import BinaryExpansion, SystemKind
from reclab.services.utils import CENTER_STREAM, median, parse_int_grid, trial_rng

logger = logging.getLogger(__name__)

COMMAND = "entropy"

DEFAULTS = {
    "system": "doubling",
    "eps": 0.1,
    "n": "8,16,24,32",
    "centers": 50,
    "method": None,
    "samples": None,
    "cap": 1 << 20,
    "seed": config.DEFAULT_SEED,
    "out": None,
}


def entropy(
    ctx: typer.Context,
    system: SystemOpt = None,
    eps: Annotated[Optional[float], typer.Option(help="ball radius")] = None,
    n: Annotated[Optional[str], typer.Option("--n", help="grid of ball lengths")] = None,
    centers: Annotated[Optional[int], typer.Option(help="number of mu-random centers")] = None,
    method: Annotated[Optional[str], typer.Option(help="ball measure: exact or monte_carlo")] = None,
    samples: Annotated[Optional[int], typer.Option(help="Monte Carlo samples per ball")] = None,
    cap: Annotated[Optional[int], typer.Option(help="longest recurrence time scanned")] = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """(1/n)|log mu(B_{eps,n}(x))| and (1/n) log R_{eps,n}(x) against the entropy."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    _, built = resolved_system(values)
    metric = require_metric(built)
    grid = parse_int_grid(values["n"])
    if values["centers"] < 1:
        raise InvalidInputError("centers must be at least 1")
    exact_backend = metric.kind is SystemKind.doubling and values["eps"] < 0.5 and max(grid) <= config.MAX_DYADIC_DEPTH
    method = values["method"] or ("exact" if exact_backend else "monte_carlo")
    horizon = values["cap"] + max(grid)

    rows: list[EntropyRow] = []
    for c in tqdm(range(values["centers"]), desc="centers", disable=not run.progress):
        x = metric.sample_point(trial_rng(values["seed"], CENTER_STREAM, c), horizon)
        center = x.value() if isinstance(x, BinaryExpansion) else float(x)
        for n in grid:
            est = entropy_estimates(
                metric,
                x,
                values["eps"],
                n,
                measure_method=method,
                cap=values["cap"],
                samples=values["samples"],
                seed=values["seed"] + c,
            )
            rows.append(
                EntropyRow(n=n, center=center, brin_katok=est.brin_katok, varandas=est.varandas, recurrence=est.recurrence)
            )

    for n in grid:
        bk = [r.brin_katok for r in rows if r.n == n]
        va = [r.varandas for r in rows if r.n == n and r.varandas is not None]
        logger.info(
            "n=%d: median brin-katok %.4f, median recurrence %s (entropy %.4f)",
            n,
            median(bk),
            f"{median(va):.4f}" if va else "n/a",
            metric.entropy,
        )

    summary = EntropySummary(command=COMMAND, parameters=run.parameters, entropy=metric.entropy, rows=rows)
    run.finish(
        ["n", "center", "brin_katok", "varandas", "recurrence"],
        [[r.n, r.center, r.brin_katok, r.varandas, r.recurrence] for r in rows],
        summary,
    )
