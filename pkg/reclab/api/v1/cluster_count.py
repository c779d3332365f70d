"""cluster-count: dyadic cylinders meeting a doubling-map ball, next to Hamming-cluster bounds."""
import logging
import math
from typing import Annotated, Optional

import typer

from reclab.api.v1.common import ConfigOpt, OutOpt, SeedOpt, start_run
from reclab.core.config import config
from reclab.core.errors import BudgetExceededError, InvalidInputError
from reclab.models.schemas import ClusterCountSummary, ClusterRow
from reclab.services.bowen import BowenBall, count_intersecting_cylinders
from reclab.services.symbolic import hamming_cluster, lambda_bound, lambda_growth_rate
from reclab.services.systems import doubling_map, fair_coin
from reclab.services.utils import CENTER_STREAM, parse_int_grid, trial_rng

logger = logging.getLogger(__name__)

COMMAND = "cluster-count"

DEFAULTS = {
    "eps": 0.1,
    "n": "10..40:5",
    "center": None,
    "beta": 0.1,
    "delta": 0.1,
    "seed": config.DEFAULT_SEED,
    "out": None,
}


def _cylinder_word(x: float, n: int) -> str:
    """Binary digits of the depth-n dyadic cylinder holding x."""
    return format(min(math.floor(x * 2**n), 2**n - 1), f"0{n}b")


def cluster_count(
    ctx: typer.Context,
    eps: Annotated[Optional[float], typer.Option(help="ball radius, below 1/2")] = None,
    n: Annotated[Optional[str], typer.Option("--n", help="grid of ball lengths (also the cylinder depth)")] = None,
    center: Annotated[Optional[float], typer.Option(help="ball center; default drawn from the seed")] = None,
    beta: Annotated[Optional[float], typer.Option(help="Hamming radius of the cylinder cluster")] = None,
    delta: Annotated[Optional[float], typer.Option(help="exponent of the envelope exp(delta n)")] = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """Counts of depth-n cylinders meeting B_{eps,n}(x) against exp(delta n) and lambda_n."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    system = doubling_map()
    x = values["center"]
    if x is None:
        x = float(system.sample(trial_rng(values["seed"], CENTER_STREAM, 0), 1)[0])
        values["center"] = x
    if values["delta"] < 0:
        raise InvalidInputError("delta must be non-negative")
    coin = fair_coin()
    beta = values["beta"]

    rows: list[ClusterRow] = []
    for n in parse_int_grid(values["n"]):
        ball = BowenBall(system, x, values["eps"], n)
        if not ball.has_exact_backend:
            raise InvalidInputError(f"cluster-count needs eps < 1/2 and n <= {config.MAX_DYADIC_DEPTH} for exact arcs")
        intersecting = count_intersecting_cylinders(ball, n)
        try:
            cluster_size: Optional[int] = len(hamming_cluster(coin, _cylinder_word(x, n), beta).words)
        except BudgetExceededError as e:
            logger.warning("n=%d: cluster not enumerated (%s)", n, e)
            cluster_size = None
        rows.append(
            ClusterRow(
                n=n,
                intersecting=intersecting,
                entropy_envelope=math.exp(values["delta"] * n),
                cluster_size=cluster_size,
                lambda_bound=float(lambda_bound(n, coin.size, beta)),
                lambda_growth_rate=lambda_growth_rate(coin.size, beta),
            )
        )
        logger.info("n=%d: %d intersecting cylinders", n, intersecting)

    summary = ClusterCountSummary(command=COMMAND, parameters=run.parameters, rows=rows)
    header = ["n", "intersecting", "entropy_envelope", "cluster_size", "lambda_bound", "lambda_growth_rate"]
    run.finish(header, [[getattr(r, h) for h in header] for r in rows], summary)
