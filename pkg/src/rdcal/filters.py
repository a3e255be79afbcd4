"""Analog filter synthesis for the doubly terminated 4th-order LC ladder.

Component sets follow the ladder Rs - C1 (shunt) - L2 (series) - C3 (shunt)
- L4 (series) - Rl.  All values are SI base units.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Literal

import numpy as np

__all__ = [
    "InvalidComponentError",
    "LcComponents",
    "RationalTransferFunction",
    "ToleranceModel",
    "REACTIVE",
    "NOMINAL_COMPONENTS",
    "lc_transfer_function",
    "synthesize_nominal",
    "perturb_components",
    "truncated_gaussian",
]

REACTIVE = ("c1", "c3", "l2", "l4")


class InvalidComponentError(ValueError):
    pass


@dataclass(frozen=True)
class LcComponents:
    c1: float
    c3: float
    l2: float
    l4: float
    rs: float
    rl: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidComponentError(f"{f.name} must be positive, got {v!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LcComponents":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise KeyError(f"unknown component fields: {sorted(unknown)}")
        return cls(**{k: float(data[k]) for k in names})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LcComponents":
        return cls.from_dict(json.loads(text))


# Nominal ladder values for a 500 Hz cut-off.
NOMINAL_COMPONENTS = {
    "butterworth": LcComponents(
        c1=4.8725e-6, c3=11.7632e-6, l2=29.408e-3, l4=12.1812e-3, rs=50.0, rl=50.0
    ),
    "chebyshev": LcComponents(
        c1=5.7812e-6, c3=7.9132e-6, l2=36.0591e-3, l4=24.6173e-3, rs=50.0, rl=100.0
    ),
}


@dataclass(frozen=True)
class RationalTransferFunction:
    """Rational transfer function with ascending-power coefficient lists.

    For ``domain="laplace-s"`` the coefficients multiply ``s**k``.  For
    ``domain="discrete-z"`` they multiply ``z**-k`` and ``sample_period`` is
    required.
    """

    numerator: np.ndarray
    denominator: np.ndarray
    domain: Literal["laplace-s", "discrete-z"] = "laplace-s"
    sample_period: float | None = None

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.numerator, dtype=float))
        den = np.atleast_1d(np.asarray(self.denominator, dtype=float))
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)
        if self.domain not in ("laplace-s", "discrete-z"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == "discrete-z":
            if self.sample_period is None or self.sample_period <= 0:
                raise ValueError("discrete-z transfer function needs a positive sample_period")
        elif self.sample_period is not None:
            raise ValueError("sample_period only applies to discrete-z")
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ValueError("coefficients must be finite")
        if self.domain == "laplace-s":
            if den[-1] == 0:
                raise ValueError("denominator leading coefficient is zero")
            if _degree(num) >= _degree(den):
                raise ValueError("analog transfer function must be strictly proper")
        elif den[0] == 0:
            raise ValueError("denominator constant term is zero")

    @property
    def order(self) -> int:
        return _degree(self.denominator)

    def __call__(self, point):
        """Evaluate at ``s`` (analog) or ``z`` (discrete)."""
        point = np.asarray(point, dtype=complex)
        if self.domain == "laplace-s":
            return np.polyval(self.numerator[::-1], point) / np.polyval(
                self.denominator[::-1], point
            )
        w = 1.0 / point
        return np.polyval(self.numerator[::-1], w) / np.polyval(self.denominator[::-1], w)

    def dc_gain(self) -> float:
        return float(np.real(self(0.0 if self.domain == "laplace-s" else 1.0)))

    def to_dict(self) -> dict:
        return {
            "numerator": self.numerator.tolist(),
            "denominator": self.denominator.tolist(),
            "domain": self.domain,
            "sample_period": self.sample_period,
        }


def _degree(coeffs: np.ndarray) -> int:
    nz = np.flatnonzero(coeffs)
    return int(nz[-1]) if nz.size else 0


def lc_transfer_function(
    components: LcComponents, form: Literal["circuit", "printed"] = "circuit"
) -> RationalTransferFunction:
    """Voltage transfer function of the terminated ladder, normalised so the
    pass-band gain is one for matched terminations.

    ``form="circuit"`` is the nodal solution of the ladder with the
    resistances kept in every coefficient.  ``form="printed"`` evaluates the
    impedance-normalised coefficient set literally (resistances appear only
    through ``Rs/Rl``); it is only meaningful for unit-impedance component
    values and is kept for comparison.
    """
    if not isinstance(components, LcComponents):
        raise InvalidComponentError("expected an LcComponents instance")
    c1, c3, l2, l4 = components.c1, components.c3, components.l2, components.l4
    rs, rl = components.rs, components.rl
    ratio = rs / rl
    lam0 = np.sqrt(4.0 * ratio)
    if form == "circuit":
        beta = [
            ratio + 1.0,
            (c1 + c3) * rs + (l2 + l4) / rl,
            (c1 * l2 + c1 * l4 + c3 * l4) * ratio + c3 * l2,
            c1 * c3 * l2 * rs + c3 * l2 * l4 / rl,
            c1 * c3 * l2 * l4 * ratio,
        ]
    elif form == "printed":
        beta = [
            ratio + 1.0,
            l4 + l2 + c1 * ratio + c3 * ratio,
            l4 * c1 + l2 * c1 + l2 * c3 * ratio + l4 * c3,
            l4 * l2 * c3 + l2 * c3 * c1 * ratio,
            l4 * l2 * c3 * c1,
        ]
    else:
        raise ValueError(f"unknown form {form!r}")
    return RationalTransferFunction([lam0], beta, "laplace-s")


def synthesize_nominal(approximation: str) -> LcComponents:
    try:
        return NOMINAL_COMPONENTS[approximation.lower()]
    except (KeyError, AttributeError):
        raise ValueError(
            f"unknown approximation {approximation!r}; "
            f"expected one of {sorted(NOMINAL_COMPONENTS)}"
        ) from None


@dataclass(frozen=True)
class ToleranceModel:
    sigma_fraction: float = 0.02
    truncation: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not self.sigma_fraction > 0:
            raise ValueError("sigma_fraction must be > 0")
        if not self.truncation > 0:
            raise ValueError("truncation must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ToleranceModel":
        return cls(**data)


def truncated_gaussian(mu: float, sigma: float, half_width: float, rng) -> float:
    """Draw from N(mu, sigma**2) restricted to ``|c - mu| <= half_width``.

    Rejection sampling; exact for the truncated density.
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    while True:
        c = rng.normal(mu, sigma)
        if abs(c - mu) <= half_width:
            return float(c)


def perturb_components(
    nominal: LcComponents,
    model: ToleranceModel,
    which: Iterable[str] = REACTIVE,
    rng: np.random.Generator | None = None,
) -> LcComponents:
    """Redraw the selected components from the truncated-Gaussian tolerance model.

    Parameters
    ----------
    nominal : LcComponents
        Means of the distributions.
    model : ToleranceModel
        sigma is ``sigma_fraction * mu``; the band half-width is
        ``truncation * sigma``.
    which : iterable of str
        Component names to redraw.  Defaults to the four reactive parts;
        resistors may be listed explicitly.
    rng : numpy Generator, optional
        Caller-owned state.  When omitted a generator is built from
        ``model.seed``.
    """
    which = tuple(which)
    if not which:
        raise ValueError("component subset must be nonempty")
    valid = {f.name for f in fields(LcComponents)}
    bad = set(which) - valid
    if bad:
        raise ValueError(f"unknown components {sorted(bad)}")
    if rng is None:
        rng = np.random.default_rng(model.seed)
    changes = {}
    # fixed draw order keeps results independent of the order of ``which``
    for name in (f.name for f in fields(LcComponents)):
        if name in which:
            mu = getattr(nominal, name)
            sigma = model.sigma_fraction * mu
            changes[name] = truncated_gaussian(mu, sigma, model.truncation * sigma, rng)
    return replace(nominal, **changes)
