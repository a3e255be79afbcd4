"""Analog-to-discrete conversion: bilinear map, partial fractions, impulse responses."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np

from .filters import RationalTransferFunction

__all__ = [
    "DegenerateMappingError",
    "RepeatedPoleError",
    "ImpulseResponse",
    "PoleResidueForm",
    "companion_roots",
    "bilinear_transform",
    "partial_fractions",
    "impulse_response",
    "accumulate_and_dump_response",
    "energy_truncation_length",
    "discrete_impulse_response",
    "DEFAULT_LENGTHS",
]

# Truncation lengths used for the two ladder approximations.
DEFAULT_LENGTHS = {"butterworth": 108, "chebyshev": 228}


class DegenerateMappingError(ValueError):
    pass


class RepeatedPoleError(ValueError):
    pass


@dataclass(frozen=True)
class ImpulseResponse:
    """Causal FIR approximation ``h[0..L-1]`` on a grid of ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float | None = None

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if h.ndim != 1 or h.size < 1:
            raise ValueError("impulse response must be a nonempty vector")
        if not np.all(np.isfinite(h)):
            raise ValueError("impulse response contains non-finite values")
        h.setflags(write=False)
        object.__setattr__(self, "samples", h)

    @property
    def length(self) -> int:
        return self.samples.size

    def __len__(self):
        return self.samples.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.samples, dtype=dtype)

    def truncated(self, length: int) -> "ImpulseResponse":
        return ImpulseResponse(self.samples[:length], self.sample_rate)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "value"])
            for i, v in enumerate(self.samples):
                w.writerow([i, repr(float(v))])
        return path

    @classmethod
    def from_csv(cls, path, sample_rate: float | None = None) -> "ImpulseResponse":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["index"]))
        return cls(np.array([float(r["value"]) for r in rows]), sample_rate)


@dataclass(frozen=True)
class PoleResidueForm:
    """``H(z) = sum_l U_l / (1 - q_l z^-1) + sum_k c_k z^-k``.

    ``direct`` holds the FIR part ``c_k``; for a bilinear-mapped proper
    filter it has a single entry.
    """

    poles: np.ndarray
    residues: np.ndarray
    direct: np.ndarray
    sample_period: float | None = None

    @property
    def direct_term(self) -> float:
        return float(self.direct[0]) if self.direct.size else 0.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        w = 1.0 / z
        out = np.polyval(self.direct[::-1], w) if self.direct.size else np.zeros_like(z)
        for q, u in zip(self.poles, self.residues):
            out = out + u / (1.0 - q * w)
        return out


def companion_roots(coeffs) -> np.ndarray:
    """Roots of ``c[0] x^n + c[1] x^(n-1) + ... + c[n]`` via companion eigenvalues."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
    if c.size <= 1:
        return np.zeros(0, dtype=complex)
    n = c.size - 1
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:] / c[0]
    comp[np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(comp).astype(complex)


def _binomial_poly(sign: int, power: int) -> np.ndarray:
    # ascending coefficients of (1 + sign*w)**power
    return np.array([comb(power, k) * sign**k for k in range(power + 1)], dtype=float)


def bilinear_transform(
    analog: RationalTransferFunction,
    sample_rate: float,
    prewarp_frequency: float | None = None,
) -> RationalTransferFunction:
    """Map ``H_a(s)`` to ``H_d(z)`` with ``s <- K (1 - z^-1) / (1 + z^-1)``.

    ``K = 2 * sample_rate`` unless ``prewarp_frequency`` (Hz) is given, in
    which case ``K`` matches the analog and digital responses there.
    """
    if analog.domain != "laplace-s":
        raise ValueError("bilinear_transform expects a laplace-s transfer function")
    if not sample_rate > 0:
        raise ValueError("sample_rate must be positive")
    T = 1.0 / sample_rate
    if prewarp_frequency is None:
        K = 2.0 / T
    else:
        wp = 2 * np.pi * prewarp_frequency
        if not 0 < wp * T / 2 < np.pi / 2:
            raise ValueError("prewarp frequency must lie in (0, sample_rate/2)")
        K = wp / np.tan(wp * T / 2)

    order = analog.order
    lam = analog.numerator
    beta = analog.denominator[: order + 1]

    def mapped(coeffs):
        out = np.zeros(order + 1)
        for b, c in enumerate(coeffs):
            if c == 0:
                continue
            term = np.convolve(_binomial_poly(-1, b), _binomial_poly(+1, order - b))
            out += c * K**b * term
        return out

    num = mapped(lam)
    den = mapped(beta)
    if abs(den[0]) <= 1e-14 * np.max(np.abs(den)):
        raise DegenerateMappingError("analog pole maps to z = infinity")
    num, den = num / den[0], den / den[0]
    poles = companion_roots(den)
    if np.any(np.abs(poles + 1.0) < 1e-10):
        raise DegenerateMappingError("pole mapped onto z = -1")
    return RationalTransferFunction(num, den, "discrete-z", T)


def partial_fractions(discrete: RationalTransferFunction, pole_tol: float = 1e-7) -> PoleResidueForm:
    """Expand a discrete transfer function with simple poles into first-order sections."""
    if discrete.domain != "discrete-z":
        raise ValueError("partial_fractions expects a discrete-z transfer function")
    b = np.trim_zeros(discrete.numerator, "b")
    a = np.trim_zeros(discrete.denominator, "b")
    if b.size == 0:
        b = np.zeros(1)
    na = a.size - 1
    # FIR part: polynomial division in w = z^-1 (descending-w coefficient order for polydiv)
    if b.size - 1 >= na:
        quo, rem = np.polydiv(b[::-1], a[::-1])
        direct = quo[::-1]
        rem = rem[::-1]
    else:
        direct = np.zeros(0)
        rem = b
    poles = companion_roots(a)  # a ascending in w == descending in z
    for i in range(poles.size):
        for j in range(i + 1, poles.size):
            if abs(poles[i] - poles[j]) <= pole_tol * max(1.0, abs(poles[i])):
                raise RepeatedPoleError(
                    f"poles {poles[i]:.6g} and {poles[j]:.6g} coincide; only simple poles supported"
                )
    residues = np.empty_like(poles)
    for k, q in enumerate(poles):
        others = np.delete(poles, k)
        residues[k] = np.polyval(rem[::-1], 1.0 / q) / (a[0] * np.prod(1.0 - others / q))
    return PoleResidueForm(poles, residues, np.real_if_close(direct).astype(float), discrete.sample_period)


def impulse_response(form: PoleResidueForm, length: int) -> ImpulseResponse:
    """``h[l] = sum U q**l`` plus the FIR part, real part kept."""
    if length < 1:
        raise ValueError("length must be >= 1")
    if np.any(np.abs(form.poles) >= 1.0):
        warnings.warn("unstable pole: impulse response diverges", RuntimeWarning, stacklevel=2)
    l = np.arange(length)
    h = (form.residues[None, :] * form.poles[None, :] ** l[:, None]).sum(axis=1)
    scale = max(1.0, float(np.max(np.abs(h))))
    if np.max(np.abs(h.imag)) > 1e-9 * scale:
        warnings.warn("impulse response has a non-negligible imaginary part", RuntimeWarning, stacklevel=2)
    h = h.real.copy()
    n = min(length, form.direct.size)
    h[:n] += form.direct[:n]
    rate = None if form.sample_period is None else 1.0 / form.sample_period
    return ImpulseResponse(h, rate)


def accumulate_and_dump_response(R: int, sample_rate: float | None = None) -> ImpulseResponse:
    if R < 1:
        raise ValueError("R must be >= 1")
    return ImpulseResponse(np.ones(int(R)), sample_rate)


def energy_truncation_length(
    form: PoleResidueForm, tol: float = 1e-6, max_length: int = 1 << 16
) -> int:
    """Smallest ``L`` whose first ``L`` taps hold at least ``1 - tol`` of the energy."""
    h = impulse_response(form, max_length).samples
    energy = h**2
    # tail[i] = energy in taps i..end
    tail = np.cumsum(energy[::-1])[::-1]
    total = tail[0]
    if total == 0:
        return 1
    ok = np.flatnonzero(tail <= tol * total)
    return int(ok[0]) if ok.size else max_length


def discrete_impulse_response(
    analog: RationalTransferFunction,
    sample_rate: float,
    length: int | None = None,
    tol: float = 1e-6,
) -> ImpulseResponse:
    """Bilinear map + partial fractions + truncation in one call.

    ``length=None`` applies the energy rule with tolerance ``tol``.
    """
    form = partial_fractions(bilinear_transform(analog, sample_rate))
    if length is None:
        length = energy_truncation_length(form, tol)
    h = impulse_response(form, length)
    return ImpulseResponse(h.samples, sample_rate)
