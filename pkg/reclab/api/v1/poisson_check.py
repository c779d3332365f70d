"""poisson-check: empirical and exact hit-count laws against Poisson(t) over an n-grid."""
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
    SeedOpt,
    SizeOpt,
    SystemOpt,
    WorkersOpt,
    resolved_system,
    start_run,
)
from reclab.core.config import config
from reclab.core.deps import require_shift
from reclab.core.errors import InvalidInputError
from reclab.models.schemas import ExperimentConfig, PoissonCheckSummary, TargetDescriptor
from reclab.services.harness import compare_to_poisson, run_experiment
from reclab.services.utils import non_overlapping_word, parse_int_grid, parse_words

logger = logging.getLogger(__name__)

COMMAND = "poisson-check"

DEFAULTS = {
    **SYSTEM_DEFAULTS,
    "system": "fair-coin",
    "target": None,
    "word": None,
    "n": "4",
    "eps": 0.1,
    "center": None,
    "centers": 1,
    "depth": None,
    "t": 1.0,
    "trials": 10_000,
    "seed": config.DEFAULT_SEED,
    "K": None,
    "workers": 1,
    "out": None,
}


def _targets(values: dict, desc, system) -> list[TargetDescriptor]:
    kind = values["target"] or ("ball" if desc.is_metric else "cylinder")
    if kind == "cylinder":
        shift = require_shift(system)
        if values["word"]:
            return [TargetDescriptor(kind="cylinder", words=parse_words(values["word"]))]
        return [
            TargetDescriptor(kind="cylinder", words=[non_overlapping_word(n, shift.alphabet)])
            for n in parse_int_grid(values["n"])
        ]
    if kind == "ball":
        return [
            TargetDescriptor(
                kind="ball",
                eps=values["eps"],
                n=n,
                center=values["center"],
                approximation_depth=values["depth"],
            )
            for n in parse_int_grid(values["n"])
        ]
    raise InvalidInputError(f"unknown target {kind!r} (choose cylinder or ball)")


def poisson_check(
    ctx: typer.Context,
    system: SystemOpt = None,
    p: POpt = None,
    probs: ProbsOpt = None,
    rows: RowsOpt = None,
    alphabet: AlphabetOpt = None,
    size: SizeOpt = None,
    target: Annotated[Optional[str], typer.Option(help="cylinder or ball; defaults by system")] = None,
    word: Annotated[Optional[str], typer.Option(help="words of the cylinder set; default 0...01 per n")] = None,
    n: Annotated[Optional[str], typer.Option("--n", help="grid of word or ball lengths, e.g. 4,8 or 4..12:4")] = None,
    eps: Annotated[Optional[float], typer.Option(help="ball radius")] = None,
    center: Annotated[Optional[float], typer.Option(help="fixed ball center; omit for mu-random centers")] = None,
    centers: Annotated[Optional[int], typer.Option(help="number of random centers")] = None,
    depth: Annotated[Optional[int], typer.Option("--N", help="also count visits to the depth-N inner cylinder union")] = None,
    t: Annotated[Optional[float], typer.Option("--t", help="Kac-scaled time, m = round(t / mu)")] = None,
    trials: Annotated[Optional[int], typer.Option(help="Monte Carlo trials")] = None,
    seed: SeedOpt = None,
    K: Annotated[Optional[int], typer.Option("--K", help="count cap; larger counts share one cell")] = None,
    workers: WorkersOpt = None,
    out: OutOpt = None,
    config_file: ConfigOpt = None,
) -> None:
    """Empirical law of W_{A,m} next to the exact oracle and Poisson(t)."""
    run = start_run(ctx, COMMAND, DEFAULTS)
    values = run.values
    desc, built = resolved_system(values)
    experiments = [
        ExperimentConfig(
            system=desc,
            target=target_desc,
            t=values["t"],
            trials=values["trials"],
            seed=values["seed"],
            K=values["K"],
            workers=values["workers"],
            centers=values["centers"],
        )
        for target_desc in _targets(values, desc, built)
    ]

    header = ["k", "emp", "exact", "poisson", "z"]
    grid = len(experiments) > 1
    if grid:
        header = ["n"] + header
    csv_rows, summary_rows, reports = [], [], []
    for experiment in experiments:
        report = run_experiment(experiment, progress=run.progress)
        row = compare_to_poisson(report)
        logger.info("n=%s m=%d tv_emp_poisson=%.4g tv_exact_poisson=%s", row.n, row.m, row.tv_emp_poisson, row.tv_exact_poisson)
        for d in report.deviations:
            cells = [d.k, d.emp, d.exact, d.poisson, d.z]
            csv_rows.append([row.n] + cells if grid else cells)
        summary_rows.append(row)
        reports.append(report)

    summary = PoissonCheckSummary(command=COMMAND, parameters=run.parameters, rows=summary_rows, reports=reports)
    run.finish(header, csv_rows, summary)
