"""Band locations, spectral index sets and sampling-rate bookkeeping.

A multiband signal occupies ``F = U [a_i, b_i]`` inside ``[0, f_max]``. Slicing
``[0, f_max]`` into ``L`` equal slots, the slots touched by ``F`` form the
spectral index set ``k``; its size ``q`` is the minimum number of cosets ``p``
that a periodic nonuniform sampler with period ``L`` needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import InfeasibleError

# relative tolerance used when flooring slot coordinates that land on integers
SLOT_EPS = 1e-12


@dataclass(frozen=True)
class BandSet:
    """Known spectral support of a complex multiband signal.

    Overlapping or touching bands are merged on construction, so ``bands`` is
    always sorted and pairwise disjoint.
    """

    bands: tuple[tuple[float, float], ...]
    f_max: float

    def __post_init__(self):
        f_max = float(self.f_max)
        if not math.isfinite(f_max) or f_max <= 0:
            raise ValueError(f"f_max must be positive and finite, got {self.f_max!r}")
        if len(self.bands) == 0:
            raise ValueError("band list is empty")
        cleaned = []
        for band in self.bands:
            if len(band) != 2:
                raise ValueError(f"band {band!r} is not an (a, b) pair")
            a, b = float(band[0]), float(band[1])
            if not (0.0 <= a < b <= f_max):
                raise ValueError(f"band [{a}, {b}] must satisfy 0 <= a < b <= f_max={f_max}")
            cleaned.append((a, b))
        cleaned.sort()
        merged = [cleaned[0]]
        for a, b in cleaned[1:]:
            last_a, last_b = merged[-1]
            if a <= last_b:
                merged[-1] = (last_a, max(last_b, b))
            else:
                merged.append((a, b))
        object.__setattr__(self, "bands", tuple(merged))
        object.__setattr__(self, "f_max", f_max)

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def total_width(self) -> float:
        """Landau rate: the measure of F."""
        return sum(b - a for a, b in self.bands)

    def contains(self, f: float) -> bool:
        return any(a <= f <= b for a, b in self.bands)

    # text form "a1:b1,a2:b2@fmax"
    def to_text(self) -> str:
        body = ",".join(f"{a!r}:{b!r}" for a, b in self.bands)
        return f"{body}@{self.f_max!r}"

    @classmethod
    def from_text(cls, text: str, f_max: float | None = None) -> "BandSet":
        """Parse ``"a1:b1,a2:b2,...@fmax"``.

        The ``@fmax`` suffix may be omitted when ``f_max`` is passed
        separately; giving both with different values is an error.
        """
        text = text.strip()
        if "@" in text:
            body, _, fm = text.rpartition("@")
            parsed_fmax = _parse_float(fm)
            if f_max is not None and float(f_max) != parsed_fmax:
                raise ValueError(f"conflicting f_max: {parsed_fmax} in text vs {f_max}")
            f_max = parsed_fmax
        else:
            body = text
        if f_max is None:
            raise ValueError("f_max missing: use 'a:b,...@fmax' or pass f_max")
        bands = []
        for chunk in body.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            lo, sep, hi = chunk.partition(":")
            if not sep:
                raise ValueError(f"band {chunk!r} is not of the form a:b")
            bands.append((_parse_float(lo), _parse_float(hi)))
        return cls(tuple(bands), f_max)

    def to_dict(self) -> dict:
        return {"bands": [[a, b] for a, b in self.bands], "fmax": self.f_max}

    @classmethod
    def from_dict(cls, doc: dict) -> "BandSet":
        try:
            return cls(tuple(tuple(b) for b in doc["bands"]), doc["fmax"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed band document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BandSet":
        return cls.from_dict(json.loads(text))


def _parse_float(s: str) -> float:
    try:
        value = float(s)
    except ValueError:
        raise ValueError(f"not a number: {s!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {s!r}")
    return value


@dataclass(frozen=True)
class SpectralIndexSet:
    """Active slot indices ``k`` at resolution ``L``."""

    L: int
    indices: tuple[int, ...]

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate indices in {idx}")
        idx = tuple(sorted(idx))
        if not idx:
            raise ValueError("spectral index set is empty")
        if idx[0] < 0 or idx[-1] > self.L - 1:
            raise ValueError(f"indices {idx} outside 0..{self.L - 1}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "indices", idx)

    @property
    def q(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class RatePlan:
    L: int
    p: int
    q: int
    f_max: float
    landau_rate: float
    index_set: SpectralIndexSet = field(repr=False, compare=False)

    @property
    def average_rate(self) -> float:
        return self.p / self.L * self.f_max

    @property
    def nyquist_rate(self) -> float:
        return self.f_max

    @property
    def ratio(self) -> float:
        return self.p / self.L

    @property
    def landau_ratio(self) -> float:
        return self.landau_rate / self.f_max

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "p": self.p,
            "q": self.q,
            "k": list(self.index_set.indices),
            "average_rate": self.average_rate,
            "landau_rate": self.landau_rate,
            "nyquist_rate": self.nyquist_rate,
            "ratio": self.ratio,
            "landau_ratio": self.landau_ratio,
        }


def slot_of(f: float, L: int, f_max: float) -> int:
    """Index of the slot holding frequency ``f``, with ``f = f_max`` in the last slot."""
    return min(_guarded_floor(f * L / f_max), L - 1)


def _guarded_floor(x: float) -> int:
    # 1.8 * 10 / 5 evaluates to 3.6000000000000005; values within SLOT_EPS of an
    # integer snap to it so floor() does not flip across a slot boundary.
    nearest = round(x)
    if abs(x - nearest) <= SLOT_EPS * max(1.0, abs(x)):
        return int(nearest)
    return math.floor(x)


def compute_spectral_index_set(bands: BandSet, L: int) -> SpectralIndexSet:
    """Slots ``floor(a_i L / f_max) .. floor(b_i L / f_max)`` of every band, united."""
    if int(L) != L or L < 1:
        raise ValueError(f"L must be a positive integer, got {L!r}")
    if not bands.bands:
        raise ValueError("band list is empty")
    active = set()
    for a, b in bands.bands:
        lo = slot_of(a, L, bands.f_max)
        hi = slot_of(b, L, bands.f_max)
        active.update(range(lo, hi + 1))
    return SpectralIndexSet(int(L), tuple(sorted(active)))


def make_rate_plan(bands: BandSet, L: int, p: int) -> RatePlan:
    k = compute_spectral_index_set(bands, L)
    if p > L:
        raise ValueError(f"p={p} exceeds L={L}")
    if p < k.q:
        raise InfeasibleError(
            f"p={p} is below q={k.q} active slots; the system y = A z is underdetermined"
        )
    return RatePlan(L=k.L, p=int(p), q=k.q, f_max=bands.f_max,
                    landau_rate=bands.total_width, index_set=k)


def sweep_rates(bands: BandSet, L_min: int, L_max: int) -> list[RatePlan]:
    """Minimal-rate plan (``p = q``) for every ``L`` in ``[L_min, L_max]``."""
    if not (1 <= L_min <= L_max):
        raise ValueError(f"need 1 <= L_min <= L_max, got {L_min}, {L_max}")
    plans = []
    for L in range(L_min, L_max + 1):
        q = compute_spectral_index_set(bands, L).q
        plans.append(make_rate_plan(bands, L, q))
    return plans
