"""approx-gap: inner/boundary cylinder approximations of a doubling-map ball over an N-grid."""
import logging
from typing import Annotated, Optional

import typer

from reclab.api.v1.common import ConfigOpt, OutOpt, SeedOpt, start_run
from reclab.core.config import config
from reclab.core.errors import InvalidInputError
from reclab.models.schemas import ApproxGapSummary, ApproxRow
from reclab.services.bowen import BowenBall, annulus_ratio, cylinder_approximation
from reclab.services.systems import doubling_map
from reclab.services.utils import CENTER_STREAM, parse_int_grid, trial_rng

logger = logging.getLogger(__name__)

COMMAND = "approx-gap"

DEFAULTS = {
    "eps": 0.1,
    "n": 6,
    "depth": "8..20",
    "center": None,
    "t": 1.0,
    "seed": config.DEFAULT_SEED,
    "out": None,
}


def approx_gap(
    ctx: typer.Context,
    eps: Annotated[Optional[float], typer.Option(help="ball radius, below 1/2")] = None,
    n: Annotated[Optional[int], typer.Option("--n", help="ball length")] = None,
    depth: Annotated[Optional[str], typer.Option("--N", help="grid of cylinder depths N >= n")] = None,
    center: Annotated[Optional[float], typer.Option(help="ball center; default drawn from the seed")] = None,
    t: Annotated[Optional[float], typer.Option("--t", help="Kac-scaled time in 2 t theta")] = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """theta = mu(boundary cylinders) / mu(ball) and the hit-law gap bound 2 t theta."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    if not values["t"] > 0:
        raise InvalidInputError("t must be positive")
    system = doubling_map()
    x = values["center"]
    if x is None:
        x = float(system.sample(trial_rng(values["seed"], CENTER_STREAM, 0), 1)[0])
        values["center"] = x
    ball = BowenBall(system, x, values["eps"], int(values["n"]))
    if not ball.has_exact_backend:
        raise InvalidInputError(f"approx-gap needs eps < 1/2 and n <= {config.MAX_DYADIC_DEPTH} for exact arcs")

    rows: list[ApproxRow] = []
    psi: dict[str, float] = {}
    for N in parse_int_grid(values["depth"]):
        approx = cylinder_approximation(ball, N)
        rows.append(
            ApproxRow(
                n=ball.n,
                N=N,
                mu_ball=float(approx.mu_ball),
                mu_inner=float(approx.mu_inner),
                mu_boundary=float(approx.mu_boundary),
                theta_hat=float(approx.theta_hat),
                hit_gap_bound=approx.hit_gap_bound(float(values["t"])),
            )
        )
        # annulus of half-width one depth-N cylinder around the radius
        psi[str(N)] = annulus_ratio(system, x, values["eps"], 2.0**-N)
        logger.info("N=%d: theta=%.4g (%d boundary cylinders)", N, rows[-1].theta_hat, approx.boundary_count)

    summary = ApproxGapSummary(command=COMMAND, parameters=run.parameters, rows=rows, psi=psi)
    header = ["n", "N", "mu_ball", "mu_inner", "mu_boundary", "theta_hat", "hit_gap_bound"]
    run.finish(header, [[getattr(r, h) for h in header] for r in rows], summary)
