"""stein-bound: Chen-Stein bound against the exact distance to Poisson for cylinder targets."""
import logging
import math
from typing import Annotated, Optional

import typer

from reclab.api.v1.common import (
    SYSTEM_DEFAULTS,
    AlphabetOpt,
    ConfigOpt,
    OutOpt,
    POpt,
    ProbsOpt,
    RowsOpt,
    SizeOpt,
    SystemOpt,
    resolved_system,
    start_run,
)
from reclab.core.deps import require_shift
from reclab.core.errors import InvalidInputError
from reclab.models.schemas import SteinBoundRow, SteinBoundSummary
from reclab.services.harness import cylinder_chen_stein, exact_oracle
from reclab.services.stein import poisson_law, tv_distance
from reclab.services.symbolic import CylinderSet, cylinder_measure, default_count_cap, period
from reclab.services.utils import non_overlapping_word, parse_int_grid, parse_words

logger = logging.getLogger(__name__)

COMMAND = "stein-bound"

DEFAULTS = {
    **SYSTEM_DEFAULTS,
    "system": "fair-coin",
    "word": None,
    "n": "4..12",
    "t": 1.0,
    "K": None,
    "out": None,
}


def stein_bound(
    ctx: typer.Context,
    system: SystemOpt = None,
    p: POpt = None,
    probs: ProbsOpt = None,
    rows: RowsOpt = None,
    alphabet: AlphabetOpt = None,
    size: SizeOpt = None,
    word: Annotated[Optional[str], typer.Option(help="words, one cylinder each; default 0...01 per n")] = None,
    n: Annotated[Optional[str], typer.Option("--n", help="grid of word lengths")] = None,
    t: Annotated[Optional[float], typer.Option("--t", help="Kac-scaled time")] = None,
    K: Annotated[Optional[int], typer.Option("--K", help="count cap of the exact law")] = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """Chen-Stein value (C1 = 1) next to the exact total variation to Poisson(t)."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    if not values["t"] > 0:
        raise InvalidInputError("t must be positive")
    _, built = resolved_system(values)
    shift = require_shift(built)
    if values["word"]:
        words = parse_words(values["word"])
    else:
        words = [non_overlapping_word(n, shift.alphabet) for n in parse_int_grid(values["n"])]
    t = float(values["t"])
    K = values["K"] if values["K"] is not None else default_count_cap(t)

    rows, bounds = [], []
    for word in words:
        cyl = CylinderSet.of(shift, [word])
        mu = float(cylinder_measure(shift, cyl, exact=False))
        m = round(t / mu)
        if m < 1:
            raise InvalidInputError(f"t={t} is too small for word {word!r} (m rounds to 0)")
        tau = period(shift, cyl)
        bound = cylinder_chen_stein(shift, cyl, mu, tau, m)
        if bound is None:
            logger.warning("word %s: no Chen-Stein bound (m=%d, tau=%d)", word, m, tau)
            continue
        tv = float(tv_distance(exact_oracle(shift, cyl, m, K).as_floats(), poisson_law(t, K)))
        ratio = tv / bound.value if bound.value > 0 else math.inf
        logger.info("word %s: tv=%.4g bound=%.4g delta*=%d", word, tv, bound.value, bound.delta_star)
        rows.append(
            SteinBoundRow(
                n=cyl.n,
                word=word,
                m=m,
                mu_a=mu,
                tau_a=tau,
                tv_exact_poisson=tv,
                bound=bound.value,
                delta_star=bound.delta_star,
                ratio=ratio,
            )
        )
        bounds.append(bound)

    summary = SteinBoundSummary(command=COMMAND, parameters=run.parameters, rows=rows, bounds=bounds)
    header = ["n", "word", "m", "mu_a", "tau_a", "tv_exact_poisson", "bound", "delta_star", "ratio"]
    run.finish(header, [[getattr(r, h) for h in header] for r in rows], summary)
