"""Chebyshev expansions: real-time propagation and smooth operator functions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.special import jv

from . import kernels
from .errors import AccuracyError, BoundsError, PlanError
from .model import SparseOperator

DEFAULT_TAIL = 1e-12


@dataclass(frozen=True)
class SpectralBounds:
    e_min: float
    e_max: float
    margin: float = 0.02

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise BoundsError(f"need e_min < e_max, got [{self.e_min}, {self.e_max}]")
        if self.margin < 0:
            raise BoundsError("margin must be non-negative")

    @property
    def lo(self) -> float:
        return self.e_min - self.margin * (self.e_max - self.e_min)

    @property
    def hi(self) -> float:
        return self.e_max + self.margin * (self.e_max - self.e_min)

    @property
    def center(self) -> float:
        return 0.5 * (self.hi + self.lo)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains(self, values) -> bool:
        values = np.asarray(values)
        return bool(np.all(values > self.lo) and np.all(values < self.hi))


def _lanczos_extremes(matvec, dim, rng, max_steps, tol):
    """Extremal Ritz values from Lanczos with full reorthogonalization."""
    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    Q = np.empty((max_steps + 1, dim))
    Q[0] = q
    alphas, betas = [], []
    prev = (None, None)
    for j in range(max_steps):
        w = matvec(Q[j])
        a = float(Q[j] @ w)
        w = w - a * Q[j] - (betas[-1] * Q[j - 1] if j else 0.0)
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            w = w - Q[: j + 1].T @ (Q[: j + 1] @ w)
        b = float(np.linalg.norm(w))
        alphas.append(a)
        theta, s = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        if b < 1e-13 * max(1.0, abs(theta).max()):
            return theta[0], theta[-1], True  # invariant subspace: exact
        res_lo = b * abs(s[-1, 0])
        res_hi = b * abs(s[-1, -1])
        width = max(theta[-1] - theta[0], 1e-300)
        if j >= 4 and res_lo < tol * width and res_hi < tol * width:
            return theta[0], theta[-1], True
        prev = (theta[0], theta[-1])
        betas.append(b)
        Q[j + 1] = w / b
    return prev[0], prev[1], False


def estimate_bounds(H: Union[SparseOperator, Callable], dim: Optional[int] = None,
                    margin: float = 0.02, max_steps: int = 300, tol: float = 1e-8,
                    seed: int = 12345) -> SpectralBounds:
    """Padded extremal eigenvalue estimates of a Hermitian action.

    Small operators are diagonalized densely; otherwise Lanczos runs until the
    Ritz residuals of both extremes fall below ``tol`` times the spread.
    """
    if isinstance(H, SparseOperator):
        dim = H.dim
        mv = H.matvec
    else:
        if dim is None:
            raise ValueError("dim is required for a callable action")
        mv = H
    if isinstance(H, SparseOperator) and dim <= 64:
        w = np.linalg.eigvalsh(H.to_dense())
        lo, hi = w[0], w[-1]
    else:
        rng = np.random.default_rng(seed)
        lo, hi, ok = _lanczos_extremes(mv, dim, rng, min(max_steps, dim), tol)
        if not ok:
            raise BoundsError(f"Lanczos failed to converge in {max_steps} steps")
    if hi - lo < 1e-8 * max(1.0, abs(lo), abs(hi)):
        pad = 1e-6 * max(1.0, abs(lo), abs(hi))
        lo, hi = lo - pad, hi + pad
    return SpectralBounds(float(lo), float(hi), margin)


@dataclass(frozen=True, eq=False)
class ChebyshevPlan:
    bounds: SpectralBounds
    order: int
    coefficients: np.ndarray
    target_tail: float
    dt: Optional[float] = None

    def __post_init__(self):
        if self.order < 2 or self.coefficients.size != self.order + 1:
            raise PlanError("a plan needs order >= 2 and order + 1 coefficients")


def propagation_plan(bounds: SpectralBounds, dt: float, tail: float = DEFAULT_TAIL) -> ChebyshevPlan:
    """Coefficients of exp(-i H dt) = sum_k c_k T_k(H~): Bessel values of half_width * dt."""
    a = bounds.half_width * dt
    kmax = int(abs(a)) + 40
    while True:
        k = np.arange(kmax + 1)
        j = jv(k, a)
        small = 2.0 * np.abs(j) < tail
        # first K >= 2 such that J_{K-1} and J_K are both below tail
        both = small[1:] & small[:-1]
        idx = np.nonzero(both[1:])[0]
        if idx.size:
            order = int(idx[0]) + 2
            break
        kmax *= 2
    k = np.arange(order + 1)
    c = 2.0 * (-1j) ** k * jv(k, a)
    c[0] *= 0.5
    c = c * np.exp(-1j * bounds.center * dt)
    return ChebyshevPlan(bounds, order, c, tail, dt)


def _check_plan(H: SparseOperator, plan: ChebyshevPlan, dt: Optional[float]):
    if dt is not None and (plan.dt is None or not np.isclose(plan.dt, dt, rtol=0, atol=1e-15)):
        raise PlanError(f"plan was built for dt={plan.dt}, asked for dt={dt}")
    # diagonal entries are Rayleigh quotients, so they must lie inside the bounds
    dmin, dmax = H.diagonal_range
    if dmin < plan.bounds.lo or dmax > plan.bounds.hi:
        raise PlanError(f"operator {H.label!r} does not fit the plan's spectral bounds")
    # ||(H - c) v|| <= half_width for a unit probe v is necessary for the bounds
    m1, m2 = H.probe_moments
    c = plan.bounds.center
    if m2 - 2 * c * m1 + c * c > plan.bounds.half_width ** 2 * (1 + 1e-12):
        raise PlanError(f"operator {H.label!r} reaches outside the plan's spectral bounds")


def chebyshev_series(A: Union[SparseOperator, Callable], bounds: SpectralBounds,
                     coefficients: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Evaluate sum_k c_k T_k(A~) psi by the three-term recurrence."""
    alpha = 1.0 / bounds.half_width
    beta = bounds.center / bounds.half_width
    out_dtype = np.result_type(psi.dtype, coefficients.dtype, np.float64)
    t0 = np.ascontiguousarray(psi, dtype=out_dtype)
    acc = coefficients[0] * t0
    if coefficients.size == 1:
        return acc
    mv = A.matvec if isinstance(A, SparseOperator) else A
    t1 = alpha * mv(t0) - beta * t0
    acc = acc + coefficients[1] * t1
    if isinstance(A, SparseOperator):
        acc = np.ascontiguousarray(acc, dtype=out_dtype)
        t1 = np.ascontiguousarray(t1, dtype=out_dtype)
        for c in coefficients[2:]:
            t0, t1 = t1, kernels.cheb_step(A.indptr, A.indices, A.data, alpha, beta,
                                           t1, t0, out_dtype.type(c), acc)
    else:
        for c in coefficients[2:]:
            t2 = 2.0 * (alpha * mv(t1) - beta * t1) - t0
            acc += c * t2
            t0, t1 = t1, t2
    return acc


def propagate(H: SparseOperator, psi: np.ndarray, dt: float, plan: ChebyshevPlan) -> np.ndarray:
    _check_plan(H, plan, dt)
    if psi.shape[0] != H.dim:
        raise PlanError(f"state length {psi.shape[0]} != operator dimension {H.dim}")
    return chebyshev_series(H, plan.bounds, plan.coefficients, np.asarray(psi, dtype=complex))


def _cheb_coefficients(f, bounds: SpectralBounds, m: int) -> np.ndarray:
    theta = np.pi * (np.arange(m) + 0.5) / m
    fx = np.asarray(f(bounds.center + bounds.half_width * np.cos(theta)))
    if np.iscomplexobj(fx):
        c = (scipy.fft.dct(fx.real, type=2) + 1j * scipy.fft.dct(fx.imag, type=2)) / m
    else:
        c = scipy.fft.dct(fx.astype(float), type=2) / m
    c[0] *= 0.5
    return c


def function_plan(f: Callable, bounds: SpectralBounds, tail: float = DEFAULT_TAIL,
                  stability: float = 1e-13, max_order: int = 1 << 16,
                  start: int = 32) -> ChebyshevPlan:
    """Chebyshev coefficients of a smooth scalar ``f`` on the padded interval.

    The cosine rule is refined by doubling until the coefficients agree to
    ``stability`` between successive resolutions and the series tail is below
    ``tail``; both thresholds are relative to the largest coefficient.
    """
    m = start
    c = _cheb_coefficients(f, bounds, m)
    while True:
        c2 = _cheb_coefficients(f, bounds, 2 * m)
        scale = max(np.abs(c2).max(), 1e-300)
        stable = np.abs(c2[:m] - c).max() < stability * scale
        above = np.nonzero(np.abs(c2) >= tail * scale)[0]
        order = max(int(above[-1]) + 2, 2) if above.size else 2
        if stable and order < 2 * m - 1:
            return ChebyshevPlan(bounds, order, c2[:order + 1].copy(), tail)
        if 2 * m >= max_order:
            achieved = float(np.abs(c2[-2:]).max() / scale)
            raise AccuracyError(
                f"Chebyshev order cap {max_order} hit; tail reached {achieved:.2e}",
                achieved_tail=achieved,
            )
        m *= 2
        c = c2


def apply_function(f: Callable, A: Union[SparseOperator, Callable], bounds: SpectralBounds,
                   psi: np.ndarray, tail: float = DEFAULT_TAIL,
                   plan: Optional[ChebyshevPlan] = None) -> np.ndarray:
    """f(A) psi for a Hermitian action ``A`` whose spectrum lies in ``bounds``."""
    if plan is None:
        plan = function_plan(f, bounds, tail)
    return chebyshev_series(A, bounds, plan.coefficients, np.asarray(psi))
