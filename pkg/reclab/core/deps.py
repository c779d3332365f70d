from fractions import Fraction
from functools import lru_cache
from typing import Optional

from reclab.core.errors import InvalidInputError
from reclab.models.schemas import SystemDescriptor, SystemName
from reclab.services.systems import (
    MarkovShift,
    MetricSystem,
    System,
    bernoulli_shift,
    doubling_map,
    fair_coin,
    full_shift,
    gauss_map,
    golden_mean_shift,
    tent_map,
)

RowsKey = Optional[tuple[tuple[str, ...], ...]]
ParamsKey = tuple[tuple[str, str], ...]


def build_system(desc: SystemDescriptor) -> System:
    """Resolve a descriptor to a (cached) system instance."""
    rows: RowsKey = tuple(tuple(r) for r in desc.rows) if desc.rows else None
    params: ParamsKey = tuple(sorted(desc.params.items()))
    return get_system(desc.kind.value, rows, desc.alphabet, params)


@lru_cache
def get_system(kind: str, rows: RowsKey, alphabet: Optional[str], params: ParamsKey) -> System:
    options = dict(params)
    try:
        name = SystemName(kind)
    except ValueError:
        raise InvalidInputError(f"unknown system {kind!r}")

    if name is SystemName.doubling:
        return doubling_map()
    if name is SystemName.tent:
        return tent_map()
    if name is SystemName.gauss:
        return gauss_map()
    if name is SystemName.fair_coin:
        return fair_coin()
    if name is SystemName.golden_mean:
        return golden_mean_shift()
    if name is SystemName.full_shift:
        return full_shift(int(options.get("size", "2")), alphabet)
    if name is SystemName.bernoulli:
        return bernoulli_shift(_bernoulli_probs(options), alphabet)
    if rows is None:
        raise InvalidInputError("markov system needs matrix rows")
    return MarkovShift.from_matrix([list(r) for r in rows], alphabet=alphabet)


def _bernoulli_probs(options: dict[str, str]) -> list[Fraction]:
    try:
        if "probs" in options:
            return [Fraction(v.strip()) for v in options["probs"].split(",")]
        p = Fraction(options.get("p", "1/2"))
    except (ValueError, ZeroDivisionError):
        raise InvalidInputError(f"invalid bernoulli parameters {options}")
    if not 0 < p < 1:
        raise InvalidInputError("bernoulli p must lie in (0, 1)")
    return [1 - p, p]


def require_shift(system: System) -> MarkovShift:
    if not isinstance(system, MarkovShift):
        raise InvalidInputError(f"{system.name} is not a symbolic system")
    return system


def require_metric(system: System) -> MetricSystem:
    if not isinstance(system, MetricSystem):
        raise InvalidInputError(f"{system.name} is not a metric system")
    return system
