"""Model-based calibration of the filter impulse response, and the DFT probing baseline.

Sign chain: with ``y_check = y_q - y_hat_q = -B E P x_q = -D e`` the
least-squares estimate satisfies ``e_hat ~ -e``, so ``h - e_hat ~ h_hat``.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .discretize import ImpulseResponse
from .rd import (
    ChippingSequence,
    MultitoneSignal,
    RdSystem,
    apply_phi,
    save_vector_csv,
)
from .solvers import (
    RankDeficientError,
    TikhonovProblem,
    half_regularizer,
    solve_least_squares,
    solve_tikhonov,
)

__all__ = [
    "DMatrix",
    "CalibrationInput",
    "CalibrationResult",
    "DfttiResult",
    "ProbeBudgetError",
    "build_d_matrix",
    "truncated_rows",
    "mbc_calibrate",
    "dftti_calibrate",
    "rebuild_system",
    "calibration_system",
    "system_sampler",
    "impulse_from_phi",
]


class ProbeBudgetError(RuntimeError):
    pass


def truncated_rows(L: int, R: int) -> int:
    """Rows of ``D`` whose support reaches before the first grid sample."""
    return -(-(L - 1) // R)


@dataclass(frozen=True)
class DMatrix:
    entries: np.ndarray
    row_map: np.ndarray
    M_q: int
    R: int

    @property
    def truncated(self) -> int:
        return self.M_q - self.row_map.size

    @property
    def L(self) -> int:
        return self.entries.shape[1]


def build_d_matrix(demodulated, R: int, L: int, M_q: int) -> DMatrix:
    """Matrix ``D`` with ``D @ e == (B E P x_q)[row_map]`` for every ``e``.

    Row ``m`` holds ``d[mR - l]`` for ``l = 0..L-1``.  Rows with ``mR < L - 1``
    would see samples before the start of the record and are dropped; when
    ``L/R`` is an integer this removes exactly ``L/R`` rows.
    """
    d = np.asarray(demodulated, dtype=float)
    if R < 1 or M_q < 1 or L < 1:
        raise ValueError("R, L and M_q must be positive")
    if d.size != M_q * R:
        raise ValueError(f"demodulated length {d.size} != M_q * R = {M_q * R}")
    if L > d.size:
        raise ValueError(f"L={L} exceeds the record length {d.size}")
    t = truncated_rows(L, R)
    rows = np.arange(t, M_q)
    idx = rows[:, None] * R - np.arange(L)[None, :]
    return DMatrix(d[idx], rows, M_q, R)


@dataclass(frozen=True)
class CalibrationInput:
    known_signal: np.ndarray
    system_model: RdSystem
    measured: np.ndarray

    def __post_init__(self):
        x = self.known_signal
        if isinstance(x, MultitoneSignal):
            x = x.samples
        x = np.asarray(x, dtype=float)
        y = np.asarray(self.measured, dtype=float)
        object.__setattr__(self, "known_signal", x)
        object.__setattr__(self, "measured", y)
        if x.size != self.system_model.N:
            raise ValueError(f"known signal length {x.size} != N={self.system_model.N}")
        if y.size != self.system_model.M:
            raise ValueError(f"measured length {y.size} != M_q={self.system_model.M}")

    @property
    def M_q(self) -> int:
        return self.system_model.M


@dataclass
class CalibrationResult:
    e_hat: np.ndarray
    h_ring: ImpulseResponse
    branch: str
    residual_norm: float
    truncated_rows: int
    retained_rows: int
    calibrated_system: RdSystem | None = field(default=None, repr=False)
    mu: float = 0.0

    def to_dict(self) -> dict:
        return {
            "e_hat": self.e_hat.tolist(),
            "h_ring": self.h_ring.samples.tolist(),
            "branch": self.branch,
            "residual_norm": self.residual_norm,
            "truncated_rows": self.truncated_rows,
            "retained_rows": self.retained_rows,
            "mu": self.mu,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_csv(self, path) -> Path:
        return save_vector_csv(path, {"h_ring": self.h_ring.samples, "e_hat": self.e_hat})


def rebuild_system(nominal: RdSystem, h_new) -> RdSystem:
    """Same chipping and dimensions, different filter."""
    return nominal.with_h(h_new)


def calibration_system(system: RdSystem, M_q: int, h=None) -> RdSystem:
    """The acquisition model for a calibration record of ``M_q`` samples.

    The record spans ``M_q * R`` grid samples.  Records longer than ``N``
    continue the chipping stream when its seed is known and repeat it
    otherwise.
    """
    if M_q < 1:
        raise ValueError("M_q must be >= 1")
    R = system.R
    n_q = M_q * R
    h = system.h if h is None else h
    if not isinstance(h, ImpulseResponse):
        h = ImpulseResponse(h, system.h.sample_rate)
    if h.length > n_q:
        h = h.truncated(n_q)
    return RdSystem(system.chipping.extended(n_q), h, n_q, M_q)


def mbc_calibrate(inp: CalibrationInput, g: np.ndarray | None = None) -> CalibrationResult:
    """Estimate the impulse-response error from one known-signal record.

    Least squares when the retained rows of ``D`` are at least ``L``,
    otherwise (or if ``D`` is rank deficient) the half-regularised
    constrained form with ``gamma = lambda_min(D D^T)``.
    """
    system = inp.system_model
    R, L = system.R, system.L
    x_q = inp.known_signal
    y_q = apply_phi(system, x_q)
    y_check = y_q - inp.measured
    D = build_d_matrix(x_q * system.p, R, L, inp.M_q)
    rhs = y_check[D.row_map]
    Dm = D.entries
    mu = 0.0
    branch = "least-squares"
    e_hat = None
    if Dm.shape[0] >= L:
        try:
            e_hat = solve_least_squares(Dm, rhs)
        except RankDeficientError:
            e_hat = None
    if e_hat is None:
        branch = "tikhonov"
        gram = Dm @ Dm.T
        lam_min = float(np.linalg.eigvalsh(gram)[0])
        gdiag = half_regularizer(L) if g is None else np.asarray(g, dtype=float)
        gamma = max(lam_min, np.finfo(float).tiny)
        res = solve_tikhonov(TikhonovProblem(Dm, rhs, gdiag, gamma))
        e_hat, mu = res.e, res.mu
    residual = float(np.linalg.norm(Dm @ e_hat - rhs))
    h_ring = ImpulseResponse(system.h.samples - e_hat, system.h.sample_rate)
    return CalibrationResult(
        e_hat=e_hat,
        h_ring=h_ring,
        branch=branch,
        residual_norm=residual,
        truncated_rows=D.truncated,
        retained_rows=D.row_map.size,
        calibrated_system=rebuild_system(system, h_ring),
        mu=mu,
    )


# ---------------------------------------------------------------- DFT probing


@dataclass
class DfttiResult:
    phi: np.ndarray
    probes: int
    samples: int
    seconds: float


def system_sampler(system: RdSystem) -> Callable[[np.ndarray], np.ndarray]:
    """Black-box view of a system: grid signal(s) in, measurements out."""

    def sample(x):
        return apply_phi(system, x)

    return sample


def _probe_bins(N: int):
    # (bin, kind) pairs spanning R^N: cosines 0..N//2, sines 1..(N-1)//2
    cos_bins = np.arange(N // 2 + 1)
    sin_bins = np.arange(1, (N - 1) // 2 + 1)
    return cos_bins, sin_bins


def dftti_calibrate(
    sampler: Callable[[np.ndarray], np.ndarray],
    N: int,
    M: int,
    batch: int = 256,
    max_probes: int | None = None,
) -> DfttiResult:
    """Measure the whole measurement matrix by probing with Fourier atoms.

    Each real cosine/sine atom is fed through ``sampler``; the responses give
    the columns of ``Phi Psi`` for the orthonormal inverse-DFT dictionary,
    and ``Phi`` follows by applying the inverse of the dictionary to each
    row.  ``N`` probes of ``M`` samples each are consumed.
    """
    cos_bins, sin_bins = _probe_bins(N)
    n_probes = cos_bins.size + sin_bins.size
    if max_probes is not None and n_probes > max_probes:
        raise ProbeBudgetError(f"{n_probes} probes needed, budget {max_probes}")
    t0 = time.perf_counter()
    n = np.arange(N)
    half = N // 2 + 1
    # columns k = 0..N//2 of Phi Psi (the rest are conjugates)
    A_half = np.zeros((M, half), dtype=complex)

    def run(bins, fn):
        out = np.empty((M, bins.size))
        for start in range(0, bins.size, batch):
            k = bins[start : start + batch]
            probes = fn(2 * np.pi * np.outer(n, k) / N)
            resp = np.asarray(sampler(probes))
            if resp.shape != (M, k.size):
                raise ValueError(f"sampler returned shape {resp.shape}, expected {(M, k.size)}")
            out[:, start : start + k.size] = resp
        return out

    A_half[:, cos_bins] += run(cos_bins, np.cos)
    A_half[:, sin_bins] += 1j * run(sin_bins, np.sin)
    A_half /= np.sqrt(N)
    # Phi = (Phi Psi) Psi^H; rows are real, so use the Hermitian inverse FFT
    phi = np.fft.irfft(np.conj(A_half), n=N, axis=1) * np.sqrt(N)
    elapsed = time.perf_counter() - t0
    return DfttiResult(phi, n_probes, n_probes * M, elapsed)


def impulse_from_phi(phi: np.ndarray, chipping, R: int, L: int) -> ImpulseResponse:
    """Read the filter taps off a measured matrix ``Phi[m, mR - l] = h[l] p[mR - l]``."""
    p = chipping.values if isinstance(chipping, ChippingSequence) else np.asarray(chipping)
    M, N = phi.shape
    h = np.zeros(L)
    for l in range(L):
        m = np.arange(M)
        cols = m * R - l
        ok = cols >= 0
        h[l] = np.mean(phi[m[ok], cols[ok]] * p[cols[ok]])
    return ImpulseResponse(h)
