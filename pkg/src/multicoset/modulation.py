"""Modulation matrix ``A(i, l) = exp(j 2 pi c_i k_l / L) / (L T)`` and its conditioning."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass

import numpy as np

from .spectrum_model import SpectralIndexSet

# sigma_min <= RANK_TOL * sigma_max counts as singular
RANK_TOL = 1e-10


@dataclass(frozen=True)
class SamplePattern:
    """Coset offsets ``C``, a sorted subset of ``0..L-1``."""

    L: int
    offsets: tuple[int, ...]

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        offs = tuple(int(c) for c in self.offsets)
        if len(set(offs)) != len(offs):
            raise ValueError(f"duplicate offsets in {offs}")
        offs = tuple(sorted(offs))
        if not offs:
            raise ValueError("sample pattern is empty")
        if offs[0] < 0 or offs[-1] > self.L - 1:
            raise ValueError(f"offsets {offs} outside 0..{self.L - 1}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "offsets", offs)

    @property
    def p(self) -> int:
        return len(self.offsets)

    def __iter__(self):
        return iter(self.offsets)

    def __len__(self):
        return len(self.offsets)


@dataclass(frozen=True)
class ConditionReport:
    cond: float
    sigma_max: float
    sigma_min: float
    rank_deficient: bool
    raw_ratio: float

    def sort_key(self) -> tuple:
        return condition_key(self.raw_ratio, self.rank_deficient)


def condition_key(raw_ratio: float, rank_deficient: bool) -> tuple:
    """Total-order key: full-rank first, then the ratio rounded to 10 significant digits.

    The rounding makes mathematically equal conds (e.g. cyclic shifts of one
    pattern) compare equal, so the caller's own tie-break decides.
    """
    return (bool(rank_deficient), float(round_sig(raw_ratio)))


def round_sig(x):
    """Round to 10 significant digits; non-finite values pass through."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    ok = np.isfinite(x) & (x > 0)
    if ok.any():
        scale = 10.0 ** (9 - np.floor(np.log10(x[ok])))
        out[ok] = np.round(x[ok] * scale) / scale
    return out


class ModulationMatrix:
    """Immutable ``p x q`` modulation matrix with lazily cached singular values."""

    def __init__(self, pattern: SamplePattern, index_set: SpectralIndexSet, T: float = 1.0):
        if pattern.L != index_set.L:
            raise ValueError(f"pattern L={pattern.L} does not match index set L={index_set.L}")
        if not (T > 0 and math.isfinite(T)):
            raise ValueError(f"T must be positive, got {T!r}")
        self.pattern = pattern
        self.index_set = index_set
        self.base_period_T = float(T)
        entries = modulation_rows(np.asarray(pattern.offsets), index_set, T)
        entries.setflags(write=False)
        self.entries = entries
        self._sv = None
        self._lock = threading.Lock()

    @property
    def L(self) -> int:
        return self.pattern.L

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def singular_values(self) -> np.ndarray:
        if self._sv is None:
            with self._lock:
                if self._sv is None:
                    sv = np.linalg.svd(self.entries, compute_uv=False)
                    sv.setflags(write=False)
                    self._sv = sv
        return self._sv

    def pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.entries)

    def to_dict(self) -> dict:
        p, q = self.shape
        return {
            "p": p,
            "q": q,
            "L": self.L,
            "T": self.base_period_T,
            "entries": [[float(z.real), float(z.imag)] for z in self.entries.ravel()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __repr__(self):
        return (f"ModulationMatrix(C={list(self.pattern.offsets)}, "
                f"k={list(self.index_set.indices)}, L={self.L}, T={self.base_period_T})")


def modulation_rows(offsets, index_set: SpectralIndexSet, T: float = 1.0) -> np.ndarray:
    """Rows of the modulation matrix for the given offsets (any order, any count)."""
    L = index_set.L
    c = np.asarray(offsets, dtype=np.int64)
    k = np.asarray(index_set.indices, dtype=np.int64)
    # reduce the phase index mod L before scaling so large c*k keep full precision
    phase = np.outer(c, k) % L
    return np.exp(2j * np.pi * phase / L) / (L * T)


def build_modulation_matrix(pattern: SamplePattern, index_set: SpectralIndexSet,
                            T: float = 1.0) -> ModulationMatrix:
    return ModulationMatrix(pattern, index_set, T)


def report_from_singular_values(sv) -> ConditionReport:
    sv = np.asarray(sv)
    s_max = float(sv[0])
    s_min = float(sv[-1])
    raw = s_max / s_min if s_min > 0 else math.inf
    deficient = s_max == 0 or s_min <= RANK_TOL * s_max
    return ConditionReport(
        cond=math.inf if deficient else raw,
        sigma_max=s_max,
        sigma_min=s_min,
        rank_deficient=deficient,
        raw_ratio=raw,
    )


def condition_number(A: ModulationMatrix) -> ConditionReport:
    """``sigma_max / sigma_min`` over the ``min(p, q)`` singular values.

    For ``p > q`` this equals ``||A||_2 ||A^+||_2``; with fewer rows than
    columns it measures the conditioning of the rows that are present.
    """
    return report_from_singular_values(A.singular_values)
