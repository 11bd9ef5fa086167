"""Sample-pattern selection by condition-number minimization.

Three strategies are provided: exhaustive enumeration of all ``binomial(L, p)``
patterns, seeded random draws (for distribution statistics), and sequential
forward selection (SFS), which grows the pattern one offset at a time and costs
``p L - p (p - 1) / 2`` evaluations.

Every strategy funnels its condition-number evaluations through
:class:`CondEvaluator`, which batches the SVDs and counts how many matrices it
actually decomposed. Candidates are ranked by the total order of
:func:`rank_keys`: full-rank before rank-deficient, then by the condition
number rounded to 10 significant digits, then by the strategy's own
tie-break (lexicographic pattern or smallest offset).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import CapExceededError, InfeasibleError
from .modulation import RANK_TOL, SamplePattern, modulation_rows, round_sig
from .spectrum_model import SpectralIndexSet

DEFAULT_EXHAUSTIVE_CAP = 10**6
CHUNK = 4096
DEFAULT_QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0)
DEFAULT_THRESHOLDS = (2.0, 5.5, 10.0, 100.0)
DEFAULT_BINS = 30

Method = Literal["exhaustive", "random", "sfs"]


@dataclass(frozen=True)
class SearchResult:
    pattern: SamplePattern
    cond: float
    evaluations: int
    method: Method
    index_set: SpectralIndexSet
    raw_ratio: float
    rank_deficient: bool

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "method": self.method,
            "L": self.pattern.L,
            "p": self.pattern.p,
            "k": list(self.index_set.indices),
            "pattern": list(self.pattern.offsets),
            "cond": _json_real(self.cond),
            "raw_ratio": _json_real(self.raw_ratio),
            "evaluations": self.evaluations,
            "rank_deficient": self.rank_deficient,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _json_real(x: float):
    return x if math.isfinite(x) else None


class CondEvaluator:
    """Batched, instrumented condition numbers of row subsets of one modulation matrix.

    ``calls`` counts individual matrices decomposed, across all threads.
    """

    def __init__(self, index_set: SpectralIndexSet, T: float = 1.0):
        self.index_set = index_set
        self.rows = modulation_rows(np.arange(index_set.L), index_set, T)
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, subsets) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(raw_ratio, rank_deficient)`` arrays for a ``(B, r)`` array of offsets."""
        subsets = np.asarray(subsets, dtype=np.int64)
        if subsets.ndim != 2 or subsets.shape[0] == 0:
            raise ValueError("expected a non-empty (batch, rows) offset array")
        sv = np.linalg.svd(self.rows[subsets], compute_uv=False)
        with self._lock:
            self.calls += subsets.shape[0]
        s_max = sv[:, 0]
        s_min = sv[:, -1]
        with np.errstate(divide="ignore"):
            raw = np.where(s_min > 0, s_max / np.where(s_min > 0, s_min, 1.0), np.inf)
        deficient = (s_max == 0) | (s_min <= RANK_TOL * s_max)
        return raw, deficient


def rank_keys(raw, deficient) -> tuple[np.ndarray, np.ndarray]:
    """Primary and secondary sort keys; lower is better."""
    return np.asarray(deficient, dtype=np.int8), round_sig(raw)


def _best_index(raw, deficient) -> int:
    """Position of the best candidate; earliest position wins ties."""
    primary, secondary = rank_keys(raw, deficient)
    order = np.lexsort((np.arange(len(primary)), secondary, primary))
    return int(order[0])


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_sizes(L: int, p: int, k: SpectralIndexSet):
    if k.L != L:
        raise ValueError(f"index set resolution {k.L} differs from L={L}")
    if p > L:
        raise ValueError(f"p={p} exceeds L={L}")
    if p < k.q:
        raise InfeasibleError(f"p={p} is below q={k.q}; no pattern can make A full column rank")


def exhaustive_search(L: int, p: int, k: SpectralIndexSet, T: float = 1.0,
                      cap: int = DEFAULT_EXHAUSTIVE_CAP, workers: int = 1) -> SearchResult:
    """Best pattern over every ``p``-subset of ``0..L-1``.

    Ties go to the lexicographically smallest offset list.
    """
    _check_sizes(L, p, k)
    total = math.comb(L, p)
    if total > cap:
        raise CapExceededError(
            f"exhaustive search needs C({L},{p}) = {total} evaluations, above the cap of "
            f"{cap}; use the sfs method instead"
        )
    evaluator = CondEvaluator(k, T)
    combos = itertools.combinations(range(L), p)
    chunks = []
    while True:
        block = list(itertools.islice(combos, CHUNK))
        if not block:
            break
        chunks.append(np.array(block, dtype=np.int64))

    def best_of(chunk):
        raw, deficient = evaluator(chunk)
        i = _best_index(raw, deficient)
        return raw[i], bool(deficient[i]), tuple(int(c) for c in chunk[i])

    winners = _pmap(best_of, chunks, workers)
    raw_all = np.array([w[0] for w in winners])
    def_all = np.array([w[1] for w in winners])
    # chunks are in lexicographic order, so the earliest winner is the lex-smallest tie
    raw, deficient, offsets = winners[_best_index(raw_all, def_all)]
    return _result(offsets, L, raw, deficient, evaluator.calls, "exhaustive", k)


def sfs_search(L: int, p: int, k: SpectralIndexSet, T: float = 1.0,
               workers: int = 1) -> SearchResult:
    """Sequential forward selection.

    Starting from the empty pattern, each step adds the offset whose inclusion
    gives the smallest condition number, smallest offset on ties. The result is
    flagged ``rank_deficient`` when even the best final candidate is singular.
    """
    _check_sizes(L, p, k)
    evaluator = CondEvaluator(k, T)
    chosen: list[int] = []
    raw = 1.0
    deficient = False
    for _ in range(p):
        candidates = [c for c in range(L) if c not in chosen]
        subsets = np.array([sorted(chosen + [c]) for c in candidates], dtype=np.int64)
        parts = [subsets[i:i + CHUNK] for i in range(0, len(subsets), CHUNK)]
        results = _pmap(evaluator, parts, workers)
        raws = np.concatenate([r for r, _ in results])
        defs = np.concatenate([d for _, d in results])
        i = _best_index(raws, defs)
        chosen.append(candidates[i])
        raw, deficient = float(raws[i]), bool(defs[i])
    return _result(chosen, L, raw, deficient, evaluator.calls, "sfs", k)


def sfs_cost(L: int, p: int) -> int:
    """Number of condition-number evaluations SFS performs."""
    return p * L - p * (p - 1) // 2


def _result(offsets, L, raw, deficient, calls, method, k) -> SearchResult:
    raw = float(raw)
    return SearchResult(
        pattern=SamplePattern(L, tuple(offsets)),
        cond=math.inf if deficient else raw,
        evaluations=int(calls),
        method=method,
        index_set=k,
        raw_ratio=raw,
        rank_deficient=bool(deficient),
    )


# -- seeded randomness --------------------------------------------------------

def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """PCG64 generator keyed on ``(seed, trial)`` so trials are order-independent."""
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial index must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial])))


def random_subset(rng: np.random.Generator, L: int, p: int) -> tuple[int, ...]:
    """Uniform ``p``-subset of ``0..L-1``: first ``p`` slots of a partial Fisher-Yates shuffle."""
    pool = list(range(L))
    for i in range(p):
        j = int(rng.integers(i, L))
        pool[i], pool[j] = pool[j], pool[i]
    return tuple(sorted(pool[:p]))


# -- histograms ---------------------------------------------------------------

@dataclass(frozen=True)
class CondHistogram:
    trials: int
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    infinite_count: int
    quantiles: dict = field(default_factory=dict)
    fraction_below: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), n])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "format_version": 1,
            "trials": self.trials,
            "infinite_count": self.infinite_count,
            "quantiles": [{"probability": pr, "cond": _json_real(v)}
                          for pr, v in self.quantiles.items()],
            "fraction_below": [{"threshold": t, "fraction": f}
                               for t, f in self.fraction_below.items()],
        }


def build_histogram(values: Sequence[float], thresholds=DEFAULT_THRESHOLDS,
                    probabilities=DEFAULT_QUANTILES, bins: int = DEFAULT_BINS) -> CondHistogram:
    """Equal-width bins from 1 up to the 99th percentile, one overflow bin, infinities apart."""
    vals = np.sort(np.asarray(values, dtype=float))
    n = len(vals)
    if n == 0:
        raise ValueError("no values to histogram")
    finite = vals[np.isfinite(vals)]
    upper = _order_stat(vals, 0.99)
    if not math.isfinite(upper):
        upper = float(finite[-1]) if len(finite) else 1.0
    if upper <= 1.0:
        # all-ones data (e.g. p = 1) still gets a usable axis
        upper = 2.0
    edges = np.linspace(1.0, upper, bins + 1)
    regular, _ = np.histogram(finite[finite <= upper], bins=edges)
    overflow = int(np.count_nonzero(finite > upper))
    return CondHistogram(
        trials=n,
        edges=tuple(float(e) for e in edges) + (math.inf,),
        counts=tuple(int(c) for c in regular) + (overflow,),
        infinite_count=int(n - len(finite)),
        quantiles={float(pr): _order_stat(vals, pr) for pr in probabilities},
        fraction_below={float(t): float(np.count_nonzero(vals < t)) / n for t in thresholds},
    )


def _order_stat(sorted_vals: np.ndarray, prob: float) -> float:
    # inverse empirical CDF; safe with +inf entries
    n = len(sorted_vals)
    idx = min(max(math.ceil(prob * n) - 1, 0), n - 1)
    return float(sorted_vals[idx])


def _random_eval(L, p, k, trials, seed, T, workers):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_sizes(L, p, k)
    patterns = [random_subset(trial_rng(seed, t), L, p) for t in range(trials)]
    evaluator = CondEvaluator(k, T)
    arr = np.array(patterns, dtype=np.int64)
    parts = [arr[i:i + CHUNK] for i in range(0, len(arr), CHUNK)]
    results = _pmap(evaluator, parts, workers)
    raw = np.concatenate([r for r, _ in results])
    deficient = np.concatenate([d for _, d in results])
    return patterns, raw, deficient, evaluator.calls


def random_pattern_conds(L: int, p: int, k: SpectralIndexSet, trials: int, seed: int,
                         T: float = 1.0, workers: int = 1):
    """Draw ``trials`` random patterns; return them with their conds (``inf`` if singular)."""
    patterns, raw, deficient, _ = _random_eval(L, p, k, trials, seed, T, workers)
    return patterns, np.where(deficient, np.inf, raw)


def random_search(L: int, p: int, k: SpectralIndexSet, trials: int, seed: int,
                  T: float = 1.0, workers: int = 1) -> SearchResult:
    """Best of ``trials`` random patterns; ties go to the earliest trial."""
    patterns, raw, deficient, calls = _random_eval(L, p, k, trials, seed, T, workers)
    i = _best_index(raw, deficient)
    return _result(patterns[i], L, raw[i], deficient[i], calls, "random", k)


def random_pattern_trials(L: int, p: int, k: SpectralIndexSet, trials: int, seed: int,
                          thresholds=DEFAULT_THRESHOLDS, T: float = 1.0,
                          workers: int = 1) -> CondHistogram:
    _, conds = random_pattern_conds(L, p, k, trials, seed, T, workers)
    return build_histogram(conds, thresholds=thresholds)


def random_support(rng: np.random.Generator, L: int, q_max: int) -> SpectralIndexSet:
    """Uniform ``q`` in ``1..q_max``, then a uniform ``q``-subset of the slots."""
    q = int(rng.integers(1, q_max + 1))
    return SpectralIndexSet(L, random_subset(rng, L, q))


def sfs_over_random_supports(L: int, p_rule: Literal["p_equals_q", "fixed"], trials: int,
                             seed: int, p: int | None = None, T: float = 1.0,
                             workers: int = 1, thresholds=DEFAULT_THRESHOLDS):
    """Run SFS on ``trials`` random spectral supports.

    Returns the histogram of the resulting conds and the per-trial
    ``(index_set, SearchResult)`` records.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if p_rule == "fixed":
        if p is None or not (1 <= p <= L):
            raise ValueError("p_rule='fixed' needs 1 <= p <= L")
        q_max = p
    elif p_rule == "p_equals_q":
        q_max = L
    else:
        raise ValueError(f"unknown p_rule {p_rule!r}")

    def one(trial):
        k = random_support(trial_rng(seed, trial), L, q_max)
        p_eff = k.q if p_rule == "p_equals_q" else p
        return k, sfs_search(L, p_eff, k, T)

    records = _pmap(one, range(trials), workers)
    hist = build_histogram([r.cond for _, r in records], thresholds=thresholds)
    return hist, records
