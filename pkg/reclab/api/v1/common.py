"""
Shared plumbing for the subcommands: option resolution and run bookkeeping.

Resolution order for every value: explicit flag > --config YAML file >
RECLAB_SEED (seed only) > command defaults.
"""
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Iterable, Optional, Sequence

import typer
import yaml
from pydantic import BaseModel

from reclab.core.config import config
from reclab.core.deps import build_system
from reclab.core.errors import InvalidInputError
from reclab.db.artifact_repo import artifact_paths, write_csv, write_json, write_manifest
from reclab.models.schemas import RunManifest, SystemDescriptor, SystemName
from reclab.services.systems import System

logger = logging.getLogger(__name__)

SystemOpt = Annotated[
    Optional[str],
    typer.Option(help="fair-coin, bernoulli, markov, golden-mean, full-shift, doubling, tent or gauss"),
]
POpt = Annotated[Optional[str], typer.Option(help="bernoulli: probability of the second symbol")]
ProbsOpt = Annotated[Optional[str], typer.Option(help="bernoulli: comma-separated symbol probabilities")]
RowsOpt = Annotated[Optional[str], typer.Option(help="markov: matrix rows, e.g. '1/2,1/2;1,0'")]
AlphabetOpt = Annotated[Optional[str], typer.Option(help="symbol alphabet, one character per symbol")]
SizeOpt = Annotated[Optional[int], typer.Option(help="full-shift: number of symbols")]
SeedOpt = Annotated[Optional[int], typer.Option(help="master seed (falls back to RECLAB_SEED)")]
WorkersOpt = Annotated[Optional[int], typer.Option(help="worker processes; outputs do not depend on it")]
OutOpt = Annotated[Optional[Path], typer.Option(help="output directory")]
ConfigOpt = Annotated[Optional[Path], typer.Option("--config", help="flat YAML file of option values")]

SYSTEM_KEYS = ("system", "p", "probs", "rows", "alphabet", "size")
SYSTEM_DEFAULTS: dict[str, Any] = {key: None for key in SYSTEM_KEYS}

# run plumbing that must not change the scientific outputs
RUN_ONLY_KEYS = {"out", "workers", "config_file"}


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------
def load_config_file(path: Optional[Path]) -> dict[str, Any]:
    """Flat key/value YAML; keys may use dashes or underscores."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise InvalidInputError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise InvalidInputError(f"config file {path} is not valid YAML: {e}")
    if not isinstance(data, dict):
        raise InvalidInputError(f"config file {path} must hold a flat mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _grid_text(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return value


def resolve(ctx: typer.Context, defaults: dict[str, Any]) -> dict[str, Any]:
    values = dict(defaults)
    seed_env = os.getenv(config.SEED_ENV_VAR)
    if "seed" in values and seed_env not in (None, ""):
        try:
            values["seed"] = int(seed_env)
        except ValueError:
            raise InvalidInputError(f"{config.SEED_ENV_VAR}={seed_env!r} is not an integer")

    from_file = load_config_file(ctx.params.get("config_file"))
    unknown = sorted(set(from_file) - set(values))
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in from_file.items():
        values[key] = value if key == "rows" else _grid_text(value)

    for key, value in ctx.params.items():
        if key != "config_file" and value is not None:
            values[key] = value
    return values


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------
def _parse_rows(rows: Any) -> Optional[list[list[str]]]:
    if rows is None:
        return None
    if isinstance(rows, str):
        return [[c.strip() for c in r.split(",")] for r in rows.split(";") if r.strip()]
    return [[str(c) for c in r] for r in rows]


def system_descriptor(values: dict[str, Any]) -> SystemDescriptor:
    params = {k: str(values[k]) for k in ("p", "probs", "size") if values.get(k) is not None}
    try:
        kind = SystemName(values["system"])
    except ValueError:
        choices = ", ".join(s.value for s in SystemName)
        raise InvalidInputError(f"unknown system {values['system']!r} (choose from {choices})")
    return SystemDescriptor(
        kind=kind,
        params=params,
        rows=_parse_rows(values.get("rows")),
        alphabet=values.get("alphabet"),
    )


def resolved_system(values: dict[str, Any]) -> tuple[SystemDescriptor, System]:
    desc = system_descriptor(values)
    return desc, build_system(desc)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------
def _plain(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class Run:
    command: str
    values: dict[str, Any]
    argv: list[str]
    progress: bool = False
    started: float = field(default_factory=time.perf_counter)

    @property
    def out_dir(self) -> Path:
        out = self.values.get("out")
        return Path(out) if out else Path(config.OUTPUT_DIR) / self.command

    @property
    def parameters(self) -> dict[str, Any]:
        """Resolved values echoed into the JSON summary."""
        return {k: _plain(v) for k, v in sorted(self.values.items()) if k not in RUN_ONLY_KEYS}

    def replay_argv(self) -> list[str]:
        argv = list(self.argv)
        # pin a seed that came from the environment or a default
        if "seed" in self.values and not any(a == "--seed" or a.startswith("--seed=") for a in argv):
            argv += ["--seed", str(self.values["seed"])]
        return argv

    def finish(self, header: Sequence[str], rows: Iterable[Sequence[Any]], summary: BaseModel) -> RunManifest:
        paths = artifact_paths(self.out_dir, self.command)
        write_csv(paths["csv"], header, rows)
        write_json(paths["json"], summary)
        manifest = RunManifest(
            command=self.command,
            argv=self.replay_argv(),
            resolved_config={k: _plain(v) for k, v in sorted(self.values.items())},
            outputs=[str(paths["csv"]), str(paths["json"])],
            seed=self.values.get("seed"),
            wall_clock_seconds=time.perf_counter() - self.started,
        )
        write_manifest(self.out_dir, manifest)
        logger.info("%s wrote %s and %s", self.command, paths["csv"], paths["json"])
        return manifest


def start_run(ctx: typer.Context, command: str, defaults: dict[str, Any]) -> Run:
    obj = ctx.ensure_object(dict)
    argv = obj.get("argv")
    if argv is None:
        argv = sys.argv[1:]
    values = resolve(ctx, defaults)
    logger.info("%s resolved config: %s", command, values)
    return Run(command, values, list(argv), progress=bool(obj.get("progress", False)))


def require(values: dict[str, Any], key: str) -> Any:
    value = values.get(key)
    if value is None:
        raise InvalidInputError(f"--{key.replace('_', '-')} is required")
    return value
