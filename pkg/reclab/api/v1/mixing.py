"""mixing: alpha and phi mixing coefficients of a Markov shift over a k-grid."""
import logging
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
from reclab.models.schemas import MixingRow, MixingSummary
from reclab.services.symbolic import mixing_coefficient
from reclab.services.utils import parse_int_grid

logger = logging.getLogger(__name__)

COMMAND = "mixing"

DEFAULTS = {
    **SYSTEM_DEFAULTS,
    "system": "golden-mean",
    "k": "0..10",
    "kind": "alpha,phi",
    "word_length": 1,
    "block_length": 1,
    "out": None,
}


def mixing(
    ctx: typer.Context,
    system: SystemOpt = None,
    p: POpt = None,
    probs: ProbsOpt = None,
    rows: RowsOpt = None,
    alphabet: AlphabetOpt = None,
    size: SizeOpt = None,
    k: Annotated[Optional[str], typer.Option("--k", help="grid of gaps")] = None,
    kind: Annotated[Optional[str], typer.Option(help="alpha, phi or both, comma separated")] = None,
    word_length: Annotated[Optional[int], typer.Option(help="length n of the past cylinders")] = None,
    block_length: Annotated[Optional[int], typer.Option(help="length L of the future cylinders")] = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """Exact alpha and phi where enumeration allows, [lower, upper] brackets otherwise."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    _, built = resolved_system(values)
    shift = require_shift(built)
    kinds = [s.strip() for s in str(values["kind"]).split(",") if s.strip()]
    if not kinds:
        raise InvalidInputError("--kind needs alpha, phi or both")

    rows: list[MixingRow] = []
    for gap in parse_int_grid(values["k"]):
        for name in kinds:
            bracket = mixing_coefficient(shift, values["word_length"], values["block_length"], gap, name)
            rows.append(
                MixingRow(k=gap, kind=name, lower=float(bracket.lower), upper=float(bracket.upper), exact=bracket.exact)
            )
            logger.debug("%s(%d) in [%.6g, %.6g]", name, gap, bracket.lower, bracket.upper)

    summary = MixingSummary(command=COMMAND, parameters=run.parameters, rows=rows)
    header = ["k", "kind", "lower", "upper", "exact"]
    run.finish(header, [[getattr(r, h) for h in header] for r in rows], summary)
