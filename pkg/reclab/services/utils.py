import re
from typing import Sequence

import numpy as np

from reclab.core.errors import InvalidInputError

# spawn-key streams of the master seed
TRIAL_STREAM = 0
CENTER_STREAM = 1


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Generator for one (stream, ..., index) cell of the master seed.

    SeedSequence hashes (seed, spawn_key) into an independent PCG64 state, so a
    cell's stream depends only on its key, never on which worker runs it.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def split_range(total: int, parts: int) -> list[range]:
    """Split range(total) into at most `parts` contiguous, near-equal ranges."""
    parts = max(1, min(parts, total))
    size, extra = divmod(total, parts)
    out, start = [], 0
    for i in range(parts):
        stop = start + size + (1 if i < extra else 0)
        out.append(range(start, stop))
        start = stop
    return out


_RANGE = re.compile(r"^(-?\d+)\.\.(-?\d+)(?::(\d+))?$")


def parse_int_grid(text: str) -> list[int]:
    """
    "8,16,24" -> [8, 16, 24]; "4..12" -> [4, ..., 12]; "4..12:4" -> [4, 8, 12].
    """
    values: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        match = _RANGE.match(part)
        try:
            if match:
                lo, hi, step = int(match[1]), int(match[2]), int(match[3] or 1)
                if step < 1 or hi < lo:
                    raise ValueError(part)
                values.extend(range(lo, hi + 1, step))
            else:
                values.append(int(part))
        except ValueError:
            raise InvalidInputError(f"invalid integer grid {text!r}")
    if not values:
        raise InvalidInputError(f"empty grid {text!r}")
    return values


def parse_float_grid(text: str) -> list[float]:
    try:
        values = [float(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise InvalidInputError(f"invalid number list {text!r}")
    if not values:
        raise InvalidInputError(f"empty list {text!r}")
    return values


def parse_words(text: str) -> list[str]:
    return [w.strip() for w in re.split(r"[,\s]+", str(text)) if w.strip()]


def non_overlapping_word(n: int, alphabet: str = "01") -> str:
    """0^{n-1}1: no proper suffix equals a prefix."""
    if n < 1:
        raise InvalidInputError("word length must be at least 1")
    return alphabet[0] * (n - 1) + alphabet[1]


def format_float(value) -> str:
    """Shortest round-trip text for CSV cells; None becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))
