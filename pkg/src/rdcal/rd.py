"""Random-demodulator forward model on the oversampled (Nyquist) grid.

The measurement operator factors as ``Phi = B H P``: chipping diagonal ``P``,
causal banded Toeplitz filter ``H`` and the selector ``B`` that keeps grid
indices ``0, R, 2R, ...``.  Everything here is matrix-free except
:func:`dense_phi` and the cached sparse form used by the solvers.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator

from .discretize import ImpulseResponse

__all__ = [
    "ChippingSequence",
    "RdSystem",
    "MultitoneSignal",
    "FourierDictionary",
    "DENSE_LIMIT",
    "FIXED_TONE_HZ",
    "generate_chipping",
    "generate_multitone",
    "apply_phi",
    "apply_phi_adjoint",
    "dense_phi",
    "sparse_phi",
    "apply_dictionary",
    "analyze_dictionary",
    "measurement_operator",
    "save_vector_csv",
    "load_vector_csv",
]

DENSE_LIMIT = 50_000_000
FIXED_TONE_HZ = 1500
TONE_RANGE = (2, 1500)
AMPLITUDE_RANGE = (1, 10)


@dataclass(frozen=True)
class ChippingSequence:
    values: np.ndarray
    seed: "int | np.random.SeedSequence | None" = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("chipping sequence must be a nonempty vector")
        if not np.all(np.abs(v) == 1.0):
            raise ValueError("chipping entries must be exactly +1 or -1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def tiled(self, length: int) -> "ChippingSequence":
        """Periodic extension (or prefix) to ``length`` chips."""
        return ChippingSequence(np.resize(self.values, length), self.seed)

    def extended(self, length: int) -> "ChippingSequence":
        """Prefix, or a continuation of the same random stream when the seed is known.

        Without a seed the sequence is tiled, which makes long records periodic.
        """
        if length <= self.values.size or self.seed is None:
            return self.tiled(length)
        return generate_chipping(length, self.seed)


def generate_chipping(N: int, seed=None) -> ChippingSequence:
    """I.i.d. Rademacher chips, one per grid sample."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    # uniform draws keep equal-seed sequences prefix-consistent across lengths
    values = np.where(rng.random(N) < 0.5, -1.0, 1.0)
    keep = seed if isinstance(seed, (int, np.integer, np.random.SeedSequence)) else None
    return ChippingSequence(values, keep)


@dataclass(frozen=True)
class RdSystem:
    """Chipping sequence, impulse response and grid/measurement sizes."""

    chipping: ChippingSequence
    h: ImpulseResponse
    N: int
    M: int

    def __post_init__(self):
        if not isinstance(self.chipping, ChippingSequence):
            object.__setattr__(self, "chipping", ChippingSequence(self.chipping))
        if not isinstance(self.h, ImpulseResponse):
            object.__setattr__(self, "h", ImpulseResponse(self.h))
        if self.N < 1 or self.M < 1:
            raise ValueError("N and M must be positive")
        if self.N % self.M:
            raise ValueError(f"N={self.N} is not an integer multiple of M={self.M}")
        if len(self.chipping) != self.N:
            raise ValueError(f"chipping length {len(self.chipping)} != N={self.N}")
        if self.h.length > self.N:
            raise ValueError(f"impulse response length {self.h.length} exceeds N={self.N}")

    @property
    def R(self) -> int:
        return self.N // self.M

    @property
    def L(self) -> int:
        return self.h.length

    @property
    def p(self) -> np.ndarray:
        return self.chipping.values

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        return sparse_phi(self)

    def with_h(self, h) -> "RdSystem":
        if not isinstance(h, ImpulseResponse):
            h = ImpulseResponse(h, self.h.sample_rate)
        return replace(self, h=h)

    def descriptor(self) -> dict:
        seed = self.chipping.seed
        if isinstance(seed, np.random.SeedSequence):
            seed = {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
        elif seed is not None:
            seed = int(seed)
        return {"N": self.N, "M": self.M, "R": self.R, "L": self.L, "chipping_seed": seed}


def _check_grid(system: RdSystem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[0] != system.N:
        raise ValueError(f"signal length {x.shape[0]} != N={system.N}")
    return x


def apply_phi(system: RdSystem, x) -> np.ndarray:
    """``y[m] = sum_n x[n] p[n] h[mR - n]`` for ``m = 0..M-1``.

    ``x`` may be ``(N,)`` or a batch ``(N, B)``.
    """
    x = _check_grid(system, x)
    h = system.h.samples
    if x.ndim == 1:
        d = x * system.p
        return np.convolve(d, h)[: system.N : system.R]
    d = x * system.p[:, None]
    return fftconvolve(d, h[:, None], axes=0)[: system.N : system.R]


def apply_phi_adjoint(system: RdSystem, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape[0] != system.M:
        raise ValueError(f"measurement length {y.shape[0]} != M={system.M}")
    u = np.zeros((system.N,) + y.shape[1:], dtype=y.dtype)
    u[:: system.R] = y
    h = system.h.samples
    if y.ndim == 1:
        corr = np.convolve(u[::-1], h)[: system.N][::-1]
        return corr * system.p
    corr = fftconvolve(u[::-1], h[:, None], axes=0)[: system.N][::-1]
    return corr * system.p[:, None]


def sparse_phi(system: RdSystem) -> sp.csr_matrix:
    """Row ``m`` holds ``h[l] p[mR - l]`` at column ``mR - l``."""
    M, R, N = system.M, system.R, system.N
    h = system.h.samples
    m = np.repeat(np.arange(M), h.size)
    l = np.tile(np.arange(h.size), M)
    col = m * R - l
    keep = col >= 0
    m, l, col = m[keep], l[keep], col[keep]
    vals = h[l] * system.p[col]
    return sp.csr_matrix((vals, (m, col)), shape=(M, N))


def dense_phi(system: RdSystem, limit: int = DENSE_LIMIT) -> np.ndarray:
    """Explicit ``B @ H @ P``; refuses problems above ``limit`` entries."""
    if system.M * system.N > limit:
        raise MemoryError(
            f"dense Phi would have {system.M * system.N} entries (limit {limit})"
        )
    col = np.zeros(system.N)
    col[: system.L] = system.h.samples
    H = scipy.linalg.toeplitz(col, np.zeros(system.N))
    return H[:: system.R] * system.p[None, :]


def measurement_operator(system: RdSystem, dictionary: "FourierDictionary | None" = None) -> LinearOperator:
    """``Phi`` (or ``Phi Psi`` when a dictionary is given) as a complex LinearOperator."""
    S = system.sparse
    St = S.T.tocsr()
    if dictionary is None:
        return LinearOperator(
            (system.M, system.N), matvec=lambda v: S @ v, rmatvec=lambda u: St @ u, dtype=complex
        )
    if dictionary.N != system.N:
        raise ValueError("dictionary size does not match system")

    def matvec(a):
        return S @ dictionary.synthesize(np.ravel(a))

    def rmatvec(u):
        return dictionary.analyze(St @ np.ravel(u))

    return LinearOperator((system.M, system.N), matvec=matvec, rmatvec=rmatvec, dtype=complex)


@dataclass(frozen=True)
class FourierDictionary:
    """Orthonormal inverse-DFT dictionary, ``Psi[n, k] = exp(2j pi k n / N) / sqrt(N)``.

    With a 1 s window bin ``k`` is the ``k`` Hz tone.
    """

    N: int

    def synthesize(self, alpha) -> np.ndarray:
        return np.fft.ifft(alpha, axis=0, norm="ortho")

    def analyze(self, x) -> np.ndarray:
        return np.fft.fft(x, axis=0, norm="ortho")

    def matrix(self) -> np.ndarray:
        n = np.arange(self.N)
        return np.exp(2j * np.pi * np.outer(n, n) / self.N) / np.sqrt(self.N)


def apply_dictionary(dictionary: FourierDictionary, alpha, real: bool = False) -> np.ndarray:
    alpha = np.asarray(alpha)
    if alpha.shape[0] != dictionary.N:
        raise ValueError(f"coefficient length {alpha.shape[0]} != N={dictionary.N}")
    x = dictionary.synthesize(alpha)
    return x.real if real else x


def analyze_dictionary(dictionary: FourierDictionary, x) -> np.ndarray:
    return dictionary.analyze(np.asarray(x))


@dataclass(frozen=True)
class MultitoneSignal:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    grid_rate: float
    duration: float
    samples: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.samples.size

    @property
    def K(self) -> int:
        return self.frequencies.size

    def to_dict(self) -> dict:
        return {
            "frequencies_hz": self.frequencies.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "phases_rad": self.phases.tolist(),
            "grid_rate_hz": self.grid_rate,
            "duration_s": self.duration,
        }


def synthesize_tones(frequencies, amplitudes, phases, grid_rate: float, n: int) -> np.ndarray:
    t = np.arange(n) / grid_rate
    x = np.zeros(n)
    for f, a, ph in zip(frequencies, amplitudes, phases):
        x += a * np.cos(2 * np.pi * f * t + ph)
    return x


def generate_multitone(
    K: int,
    seed=None,
    grid_rate: float = 12600.0,
    duration: float = 1.0,
    n_samples: int | None = None,
    random_phase: bool = False,
) -> MultitoneSignal:
    """``K - 1`` random integer-Hz tones plus the fixed 1500 Hz tone.

    Frequencies are distinct, drawn from 2..1499 Hz; amplitudes are integers
    in 1..10.  ``n_samples`` overrides ``round(grid_rate * duration)``.
    """
    lo, hi = TONE_RANGE
    if K < 1:
        raise ValueError("K must be >= 1")
    if K - 1 > hi - lo:
        raise ValueError(f"K={K} exceeds the {hi - lo + 1}-tone dictionary")
    if FIXED_TONE_HZ >= grid_rate / 2:
        raise ValueError("grid rate too low for the 1500 Hz tone")
    rng = np.random.default_rng(seed)
    free = rng.choice(np.arange(lo, hi), size=K - 1, replace=False)
    freqs = np.concatenate([np.sort(free), [FIXED_TONE_HZ]]).astype(int)
    amps = rng.integers(AMPLITUDE_RANGE[0], AMPLITUDE_RANGE[1] + 1, size=K)
    phases = rng.uniform(0, 2 * np.pi, size=K) if random_phase else np.zeros(K)
    n = int(round(grid_rate * duration)) if n_samples is None else int(n_samples)
    x = synthesize_tones(freqs, amps, phases, grid_rate, n)
    return MultitoneSignal(freqs, amps, phases, float(grid_rate), n / grid_rate, x)


def save_vector_csv(path, columns: dict) -> Path:
    """Write equal-length vectors as CSV columns with an ``index`` column first."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("columns must have equal length")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *names])
        for i in range(n):
            w.writerow([i, *(repr(float(a[i])) for a in arrays)])
    return path


def load_vector_csv(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        names = [c for c in reader.fieldnames if c != "index"]
    return {k: np.array([float(r[k]) for r in rows]) for k in names}


def system_to_json(system: RdSystem, **extra) -> str:
    return json.dumps({**system.descriptor(), **extra}, sort_keys=True)
