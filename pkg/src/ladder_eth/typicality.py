"""Pure-state (typicality) estimators, MOD-state preparation and relaxation runs."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (AccuracyError, AveragingWindowError, BoundsError, EmptyShellError,
                     InfeasibleSpecError, TuningError)
from .evolve import (SpectralBounds, apply_function, estimate_bounds, propagate,
                     propagation_plan)
from .model import SparseOperator
from .spectral import EthStats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModSpec:
    h0: float
    d0: float
    beta: float
    sigma: float
    seed: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


@dataclass(frozen=True, eq=False)
class PreparedState:
    vector: np.ndarray
    e_mean: float
    e_width: float
    d_init: float
    spec: Optional[ModSpec] = None


@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    d_values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def d_init(self) -> float:
        return float(self.d_values[0])


@dataclass(frozen=True)
class LambdaResult:
    lam: float
    window: tuple
    plateau_std: float
    converged: bool


def sample_haar_state(dim: int, seed) -> np.ndarray:
    """Normalized vector of i.i.d. standard complex Gaussians (Haar-distributed)."""
    if dim < 1:
        raise ValueError("dim must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def _expect(op: SparseOperator, psi: np.ndarray) -> float:
    return float(np.vdot(psi, op.matvec(psi)).real)


def _energy_moments(H: SparseOperator, psi: np.ndarray):
    hpsi = H.matvec(psi)
    e1 = float(np.vdot(psi, hpsi).real)
    e2 = float(np.vdot(hpsi, hpsi).real)
    return e1, math.sqrt(max(e2 - e1 * e1, 0.0))


def _finish(H, D, phi, spec=None) -> PreparedState:
    e_mean, e_width = _energy_moments(H, phi)
    d_init = _expect(D, phi) if D is not None else float("nan")
    phi.setflags(write=False)
    return PreparedState(phi, e_mean, e_width, d_init, spec)


def energy_filter(H: SparseOperator, psi: np.ndarray, e_bar: float, sigma_e: float,
                  bounds: Optional[SpectralBounds] = None) -> np.ndarray:
    """exp(-(H - e_bar)^2 / (4 sigma_e^2)) psi, unnormalized."""
    if bounds is None:
        bounds = estimate_bounds(H)
    g = lambda e: np.exp(-((e - e_bar) ** 2) / (4.0 * sigma_e ** 2))
    return apply_function(g, H, bounds, psi)


def prepare_filtered_state(H: SparseOperator, e_bar: float, sigma_e: float, seed,
                           bounds: Optional[SpectralBounds] = None,
                           D: Optional[SparseOperator] = None) -> PreparedState:
    """Random state whose eigenbasis weights follow the Gaussian shell p_n."""
    r = sample_haar_state(H.dim, seed)
    phi = energy_filter(H, r, e_bar, sigma_e, bounds)
    norm = np.linalg.norm(phi)
    if norm < 1e-12:
        raise EmptyShellError(f"energy filter at {e_bar} +- {sigma_e} removed the whole state")
    return _finish(H, D, phi / norm)


def mod_exponent(H: SparseOperator, D: SparseOperator, spec: ModSpec,
                 h_bounds: SpectralBounds, d_bounds: SpectralBounds):
    """Action of -((H - H0)^2 + beta^2 (D - D0)^2) / (4 sigma^2) and its bounds."""
    scale = -1.0 / (4.0 * spec.sigma ** 2)
    b2 = spec.beta ** 2

    def action(x):
        hx = H.matvec(x) - spec.h0 * x
        out = H.matvec(hx) - spec.h0 * hx
        if b2:
            dx = D.matvec(x) - spec.d0 * x
            out = out + b2 * (D.matvec(dx) - spec.d0 * dx)
        return scale * out

    hmax = max((h_bounds.e_min - spec.h0) ** 2, (h_bounds.e_max - spec.h0) ** 2)
    dmax = max((d_bounds.e_min - spec.d0) ** 2, (d_bounds.e_max - spec.d0) ** 2)
    lower = scale * (hmax + b2 * dmax)
    return action, SpectralBounds(lower, 0.0, margin=0.05)


_LOG_TINY = math.log(np.finfo(float).tiny)


def _exponent_top(action, dim, bounds) -> float:
    if dim == 1:
        return float(action(np.ones(1))[0])
    try:
        est = estimate_bounds(action, dim=dim, margin=0.0)
    except BoundsError:
        return 0.0
    return min(est.e_max, 0.0) if est.e_max > bounds.e_min else 0.0


def prepare_mod_state(H: SparseOperator, D: SparseOperator, spec: ModSpec,
                      h_bounds: Optional[SpectralBounds] = None,
                      d_bounds: Optional[SpectralBounds] = None) -> PreparedState:
    """rho_MOD^(1/2) |r> normalized, with |r> Haar-random from ``spec.seed``."""
    h_bounds = h_bounds or estimate_bounds(H)
    d_bounds = d_bounds or estimate_bounds(D)
    action, bounds = mod_exponent(H, D, spec, h_bounds, d_bounds)
    # exp(A - a_top) instead of exp(A): the constant drops out on
    # normalization, but without it a far-away (H0, D0) leaves a vector of
    # size e^{a_top} buried under the absolute truncation error
    top = _exponent_top(action, H.dim, bounds)
    # a wide pad above the top would let exp grow there and inflate the
    # coefficients; the Lanczos top is converged, so pad it only slightly
    width = top - bounds.e_min
    bounds = SpectralBounds(bounds.lo, top + 1e-6 * width, margin=0.0)
    r = sample_haar_state(H.dim, spec.seed)
    phi = apply_function(lambda x: np.exp(x - top), action, bounds, r)
    norm = np.linalg.norm(phi)
    if not norm > 1e-12 or top < _LOG_TINY:
        raise InfeasibleSpecError(
            f"MOD filter (H0={spec.h0}, D0={spec.d0}, beta={spec.beta}, sigma={spec.sigma}) "
            "annihilates the state; H0 and D0 are incompatible"
        )
    return _finish(H, D, phi / norm, spec)


@dataclass(frozen=True)
class ModTargets:
    e_bar: float = 0.0
    sigma_e: float = 0.6
    width_band: tuple = (0.45, 0.75)
    center_tol: float = 0.1
    # fraction of (d_extreme - D_bar) the initial displacement must reach
    displacement: float = 0.4


def tune_mod_parameters(H: SparseOperator, D: SparseOperator, d0_sign: int = 1,
                        targets: ModTargets = ModTargets(), d0: Optional[float] = None,
                        n_left: Optional[int] = None, seed: int = 0,
                        betas: Sequence[float] = (0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0),
                        sigmas: Sequence[float] = (0.6, 0.5, 0.4, 0.7, 0.3, 0.8),
                        recenter_steps: int = 6,
                        h_bounds: Optional[SpectralBounds] = None,
                        d_bounds: Optional[SpectralBounds] = None) -> ModSpec:
    """Grid search over (beta, sigma) with H0 re-centred on the target energy.

    ``d0`` defaults to ``d0_sign * (n_left - 2)``.  The first grid point whose
    realized state satisfies every band in ``targets`` is returned.
    """
    if d0 is None:
        if n_left is None:
            raise ValueError("give either d0 or n_left")
        d0 = d0_sign * (n_left - 2)
    h_bounds = h_bounds or estimate_bounds(H)
    d_bounds = d_bounds or estimate_bounds(D)
    # D0 = +-(N_L - 2) usually sits past the edge of D's spectrum; the Gaussian
    # then pulls toward that edge.  Only targets further out than one full
    # spectral width are rejected as unreachable.
    width = d_bounds.e_max - d_bounds.e_min
    if not d_bounds.e_min - width <= d0 <= d_bounds.e_max + width:
        raise TuningError(
            f"D0 = {d0} is unreachable for the spectral range of D "
            f"[{d_bounds.e_min:.4g}, {d_bounds.e_max:.4g}]"
        )
    shell = prepare_filtered_state(H, targets.e_bar, targets.sigma_e, seed, h_bounds, D)
    d_bar = shell.d_init
    d_ext = d_bounds.e_max if d0 >= d_bar else d_bounds.e_min
    need = targets.displacement * abs(d_ext - d_bar)

    best, best_score = None, -np.inf
    for beta in betas:
        for sigma in sigmas:
            h0 = targets.e_bar
            state = None
            prev = None
            for _ in range(recenter_steps):
                try:
                    state = prepare_mod_state(H, D, ModSpec(h0, d0, beta, sigma, seed),
                                              h_bounds, d_bounds)
                except EmptyShellError:
                    state = None
                    break
                miss = state.e_mean - targets.e_bar
                if abs(miss) < 0.2 * targets.center_tol:
                    break
                # secant on e_mean(h0), which is increasing but can be much
                # flatter than slope 1 once the D pull dominates
                slope = 1.0
                if prev is not None and prev[0] != h0:
                    slope = min(max((miss - prev[1]) / (h0 - prev[0]), 0.05), 1.0)
                prev = (h0, miss)
                h0 -= float(np.clip(miss / slope, -2.0, 2.0))
            if state is None:
                continue
            disp = abs(state.d_init - d_bar)
            ok = (abs(state.e_mean - targets.e_bar) < targets.center_tol
                  and targets.width_band[0] <= state.e_width <= targets.width_band[1]
                  and disp >= need)
            diag = dict(beta=beta, sigma=sigma, h0=h0, e_mean=state.e_mean,
                        e_width=state.e_width, d_init=state.d_init, d_bar=d_bar, need=need)
            logger.debug("MOD grid point %s ok=%s", diag, ok)
            if ok:
                return state.spec
            width_pen = max(0.0, targets.width_band[0] - state.e_width,
                            state.e_width - targets.width_band[1])
            score = disp / max(need, 1e-300) - 10 * width_pen
            if score > best_score:
                best, best_score = diag, score
    raise TuningError("no (beta, sigma) grid point met the MOD targets", best=best)


def relaxation_run(state: PreparedState, H: SparseOperator, D: SparseOperator,
                   t_max: float, dt: float = 0.5, bounds: Optional[SpectralBounds] = None,
                   metadata: Optional[dict] = None) -> TimeSeries:
    """Sample <D(t)> on t = 0, dt, ..., t_max."""
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    steps = int(round(t_max / dt))
    plan = propagation_plan(bounds or estimate_bounds(H), dt)
    psi = np.array(state.vector, dtype=complex)
    n0 = np.linalg.norm(psi)
    d_values = np.empty(steps + 1)
    d_values[0] = _expect(D, psi)
    for k in range(1, steps + 1):
        psi = propagate(H, psi, dt, plan)
        d_values[k] = _expect(D, psi)
    drift = abs(np.linalg.norm(psi) - n0)
    if drift > 1e-8:
        raise AccuracyError(f"norm drifted by {drift:.2e} over {steps} steps", achieved_tail=drift)
    meta = dict(metadata or {})
    meta.setdefault("d_init", float(d_values[0]))
    return TimeSeries(np.arange(steps + 1) * dt, d_values, meta)


def lambda_estimate(ts: TimeSeries, window_fraction: float = 0.25,
                    plateau_tol: float = 0.05) -> LambdaResult:
    """Plateau mean of <D(t)> over the trailing window divided by <D(0)>."""
    t_max = ts.times[-1]
    t1 = (1.0 - window_fraction) * t_max
    sel = ts.times >= t1
    tail = ts.d_values[sel]
    d_init = ts.d_init
    if d_init == 0:
        raise ValueError("Lambda is undefined for a vanishing initial value")
    lam = float(np.mean(tail) / d_init)
    plateau_std = float(np.std(tail))
    converged = plateau_std < plateau_tol * abs(d_init)
    if not converged:
        logger.warning("no plateau: std %.3g exceeds %.0f%% of |D(0)|", plateau_std, 100 * plateau_tol)
    return LambdaResult(lam, (float(ts.times[sel][0]), float(t_max)), plateau_std, converged)


def _single_typicality(H, D, e_bar, sigma_e, seed, bounds, t_start, t_end, dt):
    r = sample_haar_state(H.dim, seed)
    phi = energy_filter(H, r, e_bar, sigma_e, bounds)
    n2 = float(np.vdot(phi, phi).real)
    if n2 < 1e-24:
        raise EmptyShellError(f"energy filter at {e_bar} +- {sigma_e} removed the whole state")
    # Tr g^4 / (Tr g^2)^2 from the same random vector gives the participation ratio
    gphi = energy_filter(H, phi, e_bar, sigma_e, bounds)
    d_eff = H.dim * n2 * n2 / float(np.vdot(gphi, gphi).real)
    phi = phi / math.sqrt(n2)
    chi = D.matvec(phi)
    d2_now = float(np.vdot(chi, chi).real)
    plan = propagation_plan(bounds, dt)
    n_start = int(round(t_start / dt))
    n_end = int(round(t_end / dt))
    a_sum = 0.0
    b_sum = 0.0
    count = 0
    for k in range(n_end + 1):
        if k >= n_start:
            dphi = D.matvec(phi)
            a_sum += np.vdot(phi, dphi).real
            b_sum += np.vdot(dphi, chi).real
            count += 1
        if k < n_end:
            phi = propagate(H, phi, dt, plan)
            chi = propagate(H, chi, dt, plan)
    d_bar = a_sum / count
    m2 = b_sum / count
    sigma2 = m2 - d_bar * d_bar
    delta2 = d2_now - d_bar * d_bar
    return d_bar, sigma2, delta2, d_eff


def eth_stats_typicality(H: SparseOperator, D: SparseOperator, e_bar: float = 0.0,
                         sigma_e: float = 0.6, seed: int = 0, t_start: float = 50.0,
                         t_end: float = 400.0, dt: float = 0.5, n_samples: int = 5,
                         bounds: Optional[SpectralBounds] = None,
                         seeds: Optional[Sequence[int]] = None) -> EthStats:
    """Shell statistics of D from time-averaged pure-state dynamics.

    ``n_samples`` independent random states (seeds ``seed, seed + 1, ...``, or
    the explicit ``seeds``) are evaluated; the mean is returned with the spread over samples (standard
    deviation) in ``err_*``.
    """
    if not t_end > t_start >= 0:
        raise AveragingWindowError("need 0 <= t_start < t_end")
    bounds = bounds or estimate_bounds(H)
    if seeds is None:
        seeds = [seed + i for i in range(n_samples)]
    n_samples = len(seeds)
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rows = np.array([_single_typicality(H, D, e_bar, sigma_e, s, bounds, t_start, t_end, dt)
                     for s in seeds])
    d_bar, sigma2, delta2, d_eff = rows.mean(axis=0)
    v_each = rows[:, 1] / rows[:, 2]
    noise = rows[:, 1].std(ddof=1) if n_samples > 1 else 0.0
    if sigma2 < -3 * noise - 1e-12:
        raise AveragingWindowError(
            f"Sigma^2 estimate {sigma2:.3e} is negative beyond noise; lengthen the window"
        )

    def spread(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return EthStats(float(d_bar), float(max(sigma2, 0.0)), float(delta2),
                    float(np.clip(sigma2 / delta2, 0.0, 1.0)), float(d_eff), e_bar, sigma_e,
                    err_d_bar=spread(rows[:, 0]), err_sigma2=spread(rows[:, 1]),
                    err_delta2=spread(rows[:, 2]), err_v=spread(v_each),
                    err_d_eff=spread(rows[:, 3]))
