"""Synthetic multiband signals on a finite grid, coset sampling and noise.

Transform convention: the forward DFT is ``X[b] = sum_n x[n] exp(-2j pi b n / N)``
with no scaling (``numpy.fft.fft``); the inverse carries the ``1/N``. Bin ``b``
represents frequency ``b f_max / N``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .modulation import SamplePattern
from .spectrum_model import BandSet

SIGNAL_MAGIC = b"MCSG"
SIGNAL_FORMAT_VERSION = 1
# magic, version, N, L, T
_HEADER = struct.Struct("<4sIQQd")


@dataclass(frozen=True)
class GridSpec:
    N: int
    T: float
    L: int

    def __post_init__(self):
        if self.L < 1 or self.N < 1 or self.N % self.L:
            raise ValueError(f"N={self.N} must be a positive multiple of L={self.L}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive, got {self.T!r}")

    @property
    def bins_per_slot(self) -> int:
        return self.N // self.L

    @property
    def f_max(self) -> float:
        return 1.0 / self.T

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.N) * (self.f_max / self.N)


def make_grid(bands: BandSet, L: int, N: int | None = None) -> GridSpec:
    """Grid at the Nyquist period ``T = 1/f_max``; ``N`` defaults to ``64 L``."""
    return GridSpec(N=64 * L if N is None else int(N), T=1.0 / bands.f_max, L=int(L))


@dataclass(frozen=True, eq=False)
class BasebandSignal:
    grid: GridSpec
    samples: np.ndarray
    spectrum: np.ndarray
    support_mask: np.ndarray

    @classmethod
    def from_spectrum(cls, grid: GridSpec, spectrum, support_mask=None) -> "BasebandSignal":
        spectrum = np.asarray(spectrum, dtype=np.complex128)
        if spectrum.shape != (grid.N,):
            raise ValueError(f"spectrum must have length {grid.N}")
        if support_mask is None:
            support_mask = spectrum != 0
        return cls(grid, np.fft.ifft(spectrum), spectrum, np.asarray(support_mask, dtype=bool))

    @classmethod
    def from_samples(cls, grid: GridSpec, samples, support_mask=None) -> "BasebandSignal":
        samples = np.asarray(samples, dtype=np.complex128)
        if samples.shape != (grid.N,):
            raise ValueError(f"samples must have length {grid.N}")
        spectrum = np.fft.fft(samples)
        if support_mask is None:
            support_mask = np.ones(grid.N, dtype=bool)
        return cls(grid, samples, spectrum, np.asarray(support_mask, dtype=bool))

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)

    def scaled(self, alpha: complex) -> "BasebandSignal":
        return BasebandSignal(self.grid, alpha * self.samples, alpha * self.spectrum,
                              self.support_mask.copy())


def support_mask(bands: BandSet, grid: GridSpec) -> np.ndarray:
    """Bins whose frequency lies in some ``[a_i, b_i)``."""
    f = grid.bin_frequencies()
    mask = np.zeros(grid.N, dtype=bool)
    for a, b in bands.bands:
        mask |= (f >= a) & (f < b)
    return mask


def synthesize_multiband(bands: BandSet, grid: GridSpec, seed: int) -> BasebandSignal:
    """Unit-energy signal with i.i.d. complex Gaussian spectrum on the bins inside ``F``."""
    if not math.isclose(grid.T * bands.f_max, 1.0, rel_tol=1e-12):
        raise ValueError(f"grid T={grid.T} is not 1/f_max for f_max={bands.f_max}")
    f = grid.bin_frequencies()
    mask = np.zeros(grid.N, dtype=bool)
    for a, b in bands.bands:
        in_band = (f >= a) & (f < b)
        if not in_band.any():
            raise ValueError(
                f"band [{a}, {b}] covers no DFT bin at N={grid.N}; increase N"
            )
        mask |= in_band
    rng = np.random.default_rng(seed)
    n = int(mask.sum())
    spectrum = np.zeros(grid.N, dtype=np.complex128)
    spectrum[mask] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    # Parseval: sum |x|^2 = sum |X|^2 / N
    spectrum *= math.sqrt(grid.N / float(np.vdot(spectrum, spectrum).real))
    return BasebandSignal(grid, np.fft.ifft(spectrum), spectrum, mask)


@dataclass(frozen=True, eq=False)
class CosetSampleSet:
    """``p`` zero-padded coset sequences; row ``i`` is nonzero only where ``n % L == c_i``."""

    grid: GridSpec
    pattern: SamplePattern
    sequences: np.ndarray
    snr_db: float = math.inf

    @property
    def kept_count(self) -> int:
        return self.pattern.p * self.grid.bins_per_slot

    def kept_mask(self) -> np.ndarray:
        n = np.arange(self.grid.N)
        return (n[None, :] % self.grid.L) == np.asarray(self.pattern.offsets)[:, None]


def coset_sample(signal: BasebandSignal, pattern: SamplePattern) -> CosetSampleSet:
    if pattern.L != signal.grid.L:
        raise ValueError(f"pattern L={pattern.L} does not match grid L={signal.grid.L}")
    n = np.arange(signal.grid.N)
    keep = (n[None, :] % pattern.L) == np.asarray(pattern.offsets)[:, None]
    sequences = np.where(keep, signal.samples[None, :], 0)
    return CosetSampleSet(signal.grid, pattern, sequences)


def add_noise(samples: CosetSampleSet, snr_db: float, seed: int) -> CosetSampleSet:
    """Complex Gaussian noise at the kept positions only.

    The noise is drawn as one length-``N`` sequence and masked, so two patterns
    sampled with the same seed see the same noise value at any shared instant.
    Its variance makes kept-signal energy over expected noise energy equal
    ``10**(snr_db/10)``.
    """
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    keep = samples.kept_mask()
    signal_energy = float(np.sum(np.abs(samples.sequences[keep]) ** 2))
    variance = signal_energy / 10 ** (snr_db / 10) / samples.kept_count
    rng = np.random.default_rng(seed)
    N = samples.grid.N
    w = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) * math.sqrt(variance / 2)
    noisy = samples.sequences + np.where(keep, w[None, :], 0)
    return CosetSampleSet(samples.grid, samples.pattern, noisy, float(snr_db))


# -- persistence ----------------------------------------------------------------

def write_signal(path, signal: BasebandSignal, bands: BandSet | None = None,
                 seed: int | None = None) -> None:
    """Binary container plus a ``<path>.json`` descriptor sidecar."""
    path = Path(path)
    g = signal.grid
    header = _HEADER.pack(SIGNAL_MAGIC, SIGNAL_FORMAT_VERSION, g.N, g.L, g.T)
    body = np.ascontiguousarray(signal.samples, dtype="<c16").tobytes()
    path.write_bytes(header + body)
    sidecar = {
        "format_version": SIGNAL_FORMAT_VERSION,
        "N": g.N,
        "L": g.L,
        "T": g.T,
        "bands": bands.to_dict() if bands is not None else None,
        "seed": seed,
        "support_bins": np.flatnonzero(signal.support_mask).tolist(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def read_signal(path) -> BasebandSignal:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, N, L, T = _HEADER.unpack_from(raw)
    if magic != SIGNAL_MAGIC:
        raise ValueError(f"{path}: not a signal container")
    if version != SIGNAL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 16 * N:
        raise ValueError(f"{path}: expected {N} complex samples, got {len(body) // 16}")
    samples = np.frombuffer(body, dtype="<c16").astype(np.complex128)
    grid = GridSpec(int(N), float(T), int(L))
    mask = None
    sidecar = Path(str(path) + ".json")
    if sidecar.exists():
        mask = np.zeros(N, dtype=bool)
        mask[json.loads(sidecar.read_text())["support_bins"]] = True
    return BasebandSignal.from_samples(grid, samples, mask)
