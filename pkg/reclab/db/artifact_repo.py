"""
Data-access layer for run artifacts (CSV tables, JSON summaries, manifests).
"""
import csv
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import orjson
from pydantic import BaseModel

from reclab.core.errors import InvalidInputError
from reclab.models.schemas import RunManifest
from reclab.services.utils import format_float

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY

MANIFEST_NAME = "manifest.json"


def artifact_paths(out_dir: Union[str, Path], command: str) -> dict[str, Path]:
    out = Path(out_dir)
    return {
        "csv": out / f"{command}.csv",
        "json": out / f"{command}.json",
        "manifest": out / MANIFEST_NAME,
    }


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------
def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Comma-delimited UTF-8 with LF endings and a header row.
    Floats use their shortest round-trip text; None becomes an empty cell.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise InvalidInputError(f"row {row!r} does not match header {list(header)}")
            writer.writerow([v if isinstance(v, str) else format_float(v) for v in row])
    return path


def read_csv(path: Union[str, Path]) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------
def dump_json(data: Union[BaseModel, dict]) -> bytes:
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return orjson.dumps(data, option=JSON_OPTIONS) + b"\n"


def write_json(path: Union[str, Path], data: Union[BaseModel, dict]) -> Path:
    """Sorted keys and fixed indentation: equal inputs give byte-equal files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_json(data))
    return path


def read_json(path: Union[str, Path]) -> Any:
    try:
        return orjson.loads(Path(path).read_bytes())
    except FileNotFoundError:
        raise InvalidInputError(f"no such file: {path}")
    except orjson.JSONDecodeError as e:
        raise InvalidInputError(f"{path} is not valid JSON: {e}")


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------
def write_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    return write_json(Path(out_dir) / MANIFEST_NAME, manifest)


def load_manifest(path: Union[str, Path]) -> RunManifest:
    """Accepts the manifest file itself or the run directory holding it."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return RunManifest.model_validate(read_json(path))
