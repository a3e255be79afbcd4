"""Sparse recovery (BPDN) and linear estimators used by reconstruction and calibration."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, aslinearoperator

logger = logging.getLogger(__name__)

__all__ = [
    "BpdnConfig",
    "BpdnResult",
    "RankDeficientError",
    "TikhonovProblem",
    "TikhonovResult",
    "solve_bpdn",
    "solve_least_squares",
    "solve_tikhonov",
    "project_l1_ball",
    "stack_real",
    "half_regularizer",
]


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BpdnConfig:
    """BPDN settings.

    ``zeta`` is the absolute residual bound; when ``None`` it is
    ``relative_zeta * ||y||``.
    """

    zeta: float | None = None
    relative_zeta: float = 1e-6
    max_iterations: int = 2500
    optimality_tolerance: float = 1e-4
    bp_tolerance: float = 1e-6
    ls_tolerance: float = 1e-6

    def __post_init__(self):
        if self.zeta is not None and self.zeta < 0:
            raise ValueError("zeta must be >= 0")
        if self.relative_zeta < 0:
            raise ValueError("relative_zeta must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def bound(self, y) -> float:
        if self.zeta is not None:
            return float(self.zeta)
        return self.relative_zeta * float(np.linalg.norm(y))


@dataclass
class BpdnResult:
    x: np.ndarray
    residual_norm: float
    tau: float
    iterations: int
    converged: bool
    status: str
    trace: list = field(default_factory=list, repr=False)
    outer_trace: list = field(default_factory=list, repr=False)

    def trace_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual_norm", "one_norm"])
            w.writerows(self.trace)
        return path


# ---------------------------------------------------------------- l1 machinery
#
# Elements are complex numbers, or in the stacked real formulation (``pairs``)
# the two halves of a real vector; in both cases the l1 norm sums moduli.


def _modulus(x, pairs: bool):
    if pairs:
        n = x.size // 2
        return np.hypot(x[:n], x[n:])
    return np.abs(x)


def _with_modulus(x, old_mod, new_mod, pairs: bool):
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(old_mod > 0, new_mod / old_mod, 0.0)
    if pairs:
        return x * np.concatenate([scale, scale])
    return x * scale


def _project_nonneg_simplex(b, tau):
    # projection of b >= 0 onto {z >= 0, sum z <= tau}
    if b.sum() <= tau:
        return b.copy()
    if tau <= 0:
        return np.zeros_like(b)
    u = np.sort(b)[::-1]
    css = np.cumsum(u) - tau
    k = np.arange(1, b.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(b - theta, 0.0)


def project_l1_ball(x, tau: float, pairs: bool = False):
    """Euclidean projection onto ``{z : sum |z_i| <= tau}``."""
    mod = _modulus(x, pairs)
    new = _project_nonneg_simplex(mod, tau)
    return _with_modulus(x, mod, new, pairs)


def _dot(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def stack_real(A: LinearOperator) -> LinearOperator:
    """Real stacked form ``[Re; Im]`` of a complex operator acting on ``[Re a; Im a]``."""
    m, n = A.shape

    def mv(v):
        v = np.ravel(v)
        out = A.matvec(v[:n] + 1j * v[n:])
        return np.concatenate([out.real, out.imag])

    def rmv(u):
        u = np.ravel(u)
        out = A.rmatvec(u[:m] + 1j * u[m:])
        return np.concatenate([out.real, out.imag])

    return LinearOperator((2 * m, 2 * n), matvec=mv, rmatvec=rmv, dtype=float)


def solve_bpdn(A, y, cfg: BpdnConfig | None = None, pairs: bool = False) -> BpdnResult:
    """Basis pursuit denoising by Pareto-curve root finding.

    Minimises ``||x||_1`` subject to ``||y - A x||_2 <= zeta``.  The LASSO
    subproblems ``min ||y - Ax|| s.t. ||x||_1 <= tau`` are solved by a
    spectral projected gradient method with a nonmonotone projected line
    search; ``tau`` is updated by Newton steps on the Pareto curve.

    Parameters
    ----------
    A : array_like or LinearOperator
        Forward/adjoint operator, complex by default.
    y : array_like
        Measurements.
    cfg : BpdnConfig
    pairs : bool
        Treat a real ``x`` of length ``2n`` as ``n`` (Re, Im) pairs, for the
        stacked real formulation built by :func:`stack_real`.
    """
    cfg = cfg or BpdnConfig()
    A = aslinearoperator(A)
    m, n = A.shape
    dtype = float if pairs else complex
    b = np.asarray(y, dtype=dtype).ravel()
    if b.size != m:
        raise ValueError(f"measurement length {b.size} != operator rows {m}")
    sigma_abs = cfg.bound(y)
    bnorm = float(np.linalg.norm(b))
    if bnorm <= sigma_abs or bnorm == 0:
        return BpdnResult(np.zeros(n, dtype=dtype), bnorm, 0.0, 0, True, "zero solution")

    # Work on unit-norm data; tolerances are then relative to ||y||.
    b = b / bnorm
    sigma = sigma_abs / bnorm
    tol = cfg.optimality_tolerance
    step_min, step_max = 1e-16, 1e5
    gamma, n_hist = 1e-4, 3

    tau = 0.0
    x = np.zeros(n, dtype=dtype)
    r = b.copy()
    g = -np.asarray(A.rmatvec(r), dtype=dtype).ravel()
    f = 0.5 * _dot(r, r)
    dx = project_l1_ball(x - g, tau, pairs) - x
    dxnorm = np.max(np.abs(dx)) if dx.size else 0.0
    gstep = step_max if dxnorm < 1 / step_max else min(step_max, max(step_min, 1 / dxnorm))
    last_f = [f]
    fold = f
    trace, outer = [], []
    status = None
    iters = 0
    just_updated = False
    line_errors = 0

    while True:
        rnorm = float(np.linalg.norm(r))
        gnorm = float(np.max(_modulus(g, pairs))) if n else 0.0
        xnorm1 = float(np.sum(_modulus(x, pairs)))
        trace.append((iters, rnorm * bnorm, xnorm1 * bnorm))
        gap = _dot(r, r - b) + tau * gnorm
        rgap = abs(gap) / max(f, np.finfo(float).tiny)
        aerror1 = rnorm - sigma

        if sigma > 0 and abs(aerror1) <= tol * sigma:
            status = "root found"
        elif rnorm <= cfg.bp_tolerance:
            status = "basis pursuit solution"
        elif gnorm <= cfg.ls_tolerance * rnorm:
            status = "least-squares solution"

        if status is None:
            fchange = abs(f - fold)
            if rnorm > 2 * sigma:
                stalled = fchange <= tol * f
            else:
                stalled = fchange <= 0.1 * f * abs(rnorm - sigma)
            if (stalled or rgap <= tol) and not just_updated and gnorm > 0:
                tau_old = tau
                tau = max(0.0, tau + rnorm * aerror1 / gnorm)
                outer.append((iters, rnorm * bnorm, tau * bnorm))
                just_updated = True
                if tau < tau_old:
                    x = project_l1_ball(x, tau, pairs)
                    r = b - A.matvec(x)
                    g = -np.asarray(A.rmatvec(r), dtype=dtype).ravel()
                    f = 0.5 * _dot(r, r)
                last_f = [f]
            else:
                just_updated = False

        if status is None and iters >= cfg.max_iterations:
            status = "iteration limit"
        if status is not None:
            break

        iters += 1
        xold, gold, fold = x, g, f
        fmax = max(last_f)

        # projected backtracking along the projection arc
        step = 1.0
        for _ in range(10):
            xn = project_l1_ball(x - step * gstep * g, tau, pairs)
            rn = b - A.matvec(xn)
            fn = 0.5 * _dot(rn, rn)
            if fn <= fmax + gamma * _dot(g, xn - x):
                break
            step /= 2
        else:
            # fall back to a feasible-direction search
            d = project_l1_ball(x - gstep * g, tau, pairs) - x
            gtd = _dot(g, d)
            step = 1.0
            ok = False
            if gtd < 0:
                for _ in range(10):
                    xn = x + step * d
                    rn = b - A.matvec(xn)
                    fn = 0.5 * _dot(rn, rn)
                    if fn <= fmax + gamma * step * gtd:
                        ok = True
                        break
                    step /= 2
            if not ok:
                line_errors += 1
                step_max /= 10
                gstep = min(gstep, step_max)
                if line_errors > 10:
                    status = "line search failure"
                    break
                continue

        x, r, f = xn, rn, fn
        g = -np.asarray(A.rmatvec(r), dtype=dtype).ravel()
        s = x - xold
        yk = g - gold
        sts = _dot(s, s)
        sty = _dot(s, yk)
        gstep = step_max if sty <= 0 else min(step_max, max(step_min, sts / sty))
        last_f.append(f)
        if len(last_f) > n_hist:
            last_f.pop(0)

    rnorm = float(np.linalg.norm(r))
    converged = status in ("root found", "basis pursuit solution", "least-squares solution")
    if not converged:
        logger.debug("BPDN stopped: %s after %d iterations", status, iters)
    return BpdnResult(x * bnorm, rnorm * bnorm, tau * bnorm, iters, converged, status, trace, outer)


# ---------------------------------------------------------------- least squares


def solve_least_squares(D, rhs, cond_limit: float = 1e10) -> np.ndarray:
    """Overdetermined least squares through a QR factorisation.

    Raises
    ------
    RankDeficientError
        Fewer rows than columns, or estimated condition number above
        ``cond_limit``.
    """
    D = np.asarray(D, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    m, n = D.shape
    if rhs.shape[0] != m:
        raise ValueError("rhs length does not match D")
    if m < n:
        raise RankDeficientError(f"{m} rows < {n} columns")
    Q, Rm = np.linalg.qr(D, mode="reduced")
    diag = np.abs(np.diag(Rm))
    if diag.min() == 0 or np.linalg.cond(Rm) > cond_limit:
        raise RankDeficientError("D is numerically rank deficient")
    return scipy.linalg.solve_triangular(Rm, Q.T @ rhs)


@dataclass(frozen=True)
class TikhonovProblem:
    """``min ||D e - rhs||^2  s.t.  ||G e||^2 <= gamma`` with diagonal 0/1 ``G``."""

    operator: np.ndarray
    rhs: np.ndarray
    g: np.ndarray
    gamma: float

    def __post_init__(self):
        D = np.asarray(self.operator, dtype=float)
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "operator", D)
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float))
        object.__setattr__(self, "g", g)
        if g.shape != (D.shape[1],):
            raise ValueError("G diagonal must have one entry per column of D")
        if not np.all((g == 0) | (g == 1)):
            raise ValueError("G diagonal entries must be 0 or 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


@dataclass
class TikhonovResult:
    e: np.ndarray
    mu: float
    constraint_value: float
    bracketed: bool = True


def half_regularizer(L: int) -> np.ndarray:
    """Diagonal of ``G``: ones on the first ``L // 2`` taps, zeros elsewhere."""
    g = np.zeros(L)
    g[: L // 2] = 1.0
    return g


def _penalized(D, rhs, g, mu):
    if mu == 0:
        return np.linalg.lstsq(D, rhs, rcond=None)[0]
    A = np.vstack([D, np.sqrt(mu) * np.diag(g)])
    b = np.concatenate([rhs, np.zeros(D.shape[1])])
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _least_g_norm(D, rhs, g, e0):
    # move e0 within the null space of D to minimise ||G e||
    _, sv, vt = np.linalg.svd(D)
    rank = int(np.sum(sv > sv[0] * max(D.shape) * np.finfo(float).eps)) if sv.size else 0
    Z = vt[rank:].T
    if Z.shape[1] == 0:
        return e0
    z = np.linalg.lstsq(g[:, None] * Z, -(g * e0), rcond=None)[0]
    return e0 + Z @ z


def solve_tikhonov(problem: TikhonovProblem, rtol: float = 1e-8) -> TikhonovResult:
    """Inequality-constrained least squares by a multiplier search.

    The penalised solution ``e(mu)`` minimises ``||De - rhs||^2 + mu ||Ge||^2``
    (minimum norm among ties).  ``mu = 0`` is kept when a least-squares
    solution is already feasible (the minimum-norm one, else the one with the
    smallest ``||Ge||``); otherwise ``mu`` is found by root bracketing on
    ``log mu`` so the constraint is active.
    """
    D, rhs, g, gamma = problem.operator, problem.rhs, problem.g, problem.gamma

    def cval(e):
        return float(np.sum((g * e) ** 2))

    e0 = _penalized(D, rhs, g, 0.0)
    if cval(e0) <= gamma:
        return TikhonovResult(e0, 0.0, cval(e0))
    # mu -> 0+ limit: the least-squares solution with the smallest ||G e||
    e_lim = _least_g_norm(D, rhs, g, e0)
    if cval(e_lim) <= gamma:
        return TikhonovResult(e_lim, 0.0, cval(e_lim))

    scale = max(np.linalg.norm(D, 2) ** 2, 1e-300)
    lo, hi = np.log(scale * 1e-16), np.log(scale)
    while cval(_penalized(D, rhs, g, np.exp(hi))) > gamma:
        hi += np.log(10)
        if hi > np.log(scale) + 80:
            e = _penalized(D, rhs, g, np.exp(hi))
            logger.warning("Tikhonov multiplier search failed to bracket")
            return TikhonovResult(e, float(np.exp(hi)), cval(e), bracketed=False)
    while cval(_penalized(D, rhs, g, np.exp(lo))) <= gamma and lo > -700:
        lo -= np.log(10) * 4

    def fun(t):
        return np.log(cval(_penalized(D, rhs, g, np.exp(t)))) - np.log(gamma)

    t = brentq(fun, lo, hi, xtol=1e-14, rtol=rtol, maxiter=500)
    e = _penalized(D, rhs, g, np.exp(t))
    return TikhonovResult(e, float(np.exp(t)), cval(e))
