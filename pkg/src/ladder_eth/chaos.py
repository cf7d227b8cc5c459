"""Nearest-neighbour level-spacing statistics and Brody fits."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import gammaln

from .errors import SymmetryContaminationError, UnfoldingError, WindowError

logger = logging.getLogger(__name__)

MIN_LEVELS = 300
MIN_SPACINGS = 200
OMEGA_BOUNDS = (-0.2, 1.5)


@dataclass(frozen=True, eq=False)
class UnfoldedSpectrum:
    raw: np.ndarray
    unfolded: np.ndarray
    fit_degree: int
    window: tuple


@dataclass(frozen=True)
class BrodyFit:
    omega: float
    log_likelihood: float
    n_spacings: int
    ks_stat: float
    at_boundary: bool = False


def select_window(energies, e_bar: float = 0.0, half_width: float = 2.0,
                  min_levels: int = MIN_LEVELS) -> np.ndarray:
    e = np.sort(np.asarray(energies, dtype=float))
    lo = np.searchsorted(e, e_bar - half_width, side="left")
    hi = np.searchsorted(e, e_bar + half_width, side="right")
    window = e[lo:hi]
    if window.size < min_levels:
        raise WindowError(
            f"only {window.size} levels within {half_width} of {e_bar}; "
            f"need {min_levels}, try a larger half_width"
        )
    return window


def unfold(window_energies, fit_degree: int = 9, context=None, margin: float = 0.1,
           min_levels: int = MIN_LEVELS) -> UnfoldedSpectrum:
    """Map levels through a polynomial fit of the integrated level count.

    With ``context`` (the full sorted spectrum) the staircase is fitted on the
    window widened by ``margin`` on each side, and level counts refer to the
    whole spectrum; without it the window is its own staircase.
    """
    e = np.asarray(window_energies, dtype=float)
    if e.size < min_levels:
        raise UnfoldingError(f"{e.size} levels is too few to unfold (need {min_levels})")
    if fit_degree < 1 or fit_degree % 2 == 0:
        raise ValueError("fit_degree must be a positive odd integer")
    if np.any(np.diff(e) < 0):
        raise ValueError("window energies must be ascending")
    lo, hi = e[0], e[-1]
    if context is None:
        x = e
        y = np.arange(e.size, dtype=float)
        window = (lo, hi)
    else:
        full = np.sort(np.asarray(context, dtype=float))
        pad = margin * (hi - lo)
        a = np.searchsorted(full, lo - pad, side="left")
        b = np.searchsorted(full, hi + pad, side="right")
        x = full[a:b]
        y = np.arange(a, b, dtype=float)
        window = (lo - pad, hi + pad)
    # staircase midpoints: level k is counted half before, half after
    fit = Polynomial.fit(x, y + 0.5, fit_degree)
    grid = np.linspace(lo, hi, 8 * e.size)
    if np.any(fit.deriv()(grid) <= 0):
        raise UnfoldingError(f"degree-{fit_degree} staircase fit is not monotone; reduce the degree")
    return UnfoldedSpectrum(e, fit(e), fit_degree, window)


def spacings(us: UnfoldedSpectrum, zero_tol: float = 1e-12,
             max_zero_fraction: float = 0.01) -> np.ndarray:
    u = np.asarray(us.unfolded if isinstance(us, UnfoldedSpectrum) else us, dtype=float)
    if u.size < 2:
        raise ValueError("need at least two levels")
    s = np.diff(u)
    zero = s < zero_tol
    nz = int(zero.sum())
    if nz:
        logger.info("dropped %d zero spacings of %d", nz, s.size)
        if nz > max_zero_fraction * s.size:
            raise SymmetryContaminationError(
                f"{nz}/{s.size} spacings are degenerate; the sector likely mixes symmetry blocks"
            )
    return s[~zero]


def _brody_b(omega):
    a = omega + 1.0
    return np.exp(a * gammaln((omega + 2.0) / a))


def brody_pdf(s, omega: float):
    """P(s) = (w+1) b s^w exp(-b s^(w+1)) with b = Gamma((w+2)/(w+1))^(w+1)."""
    if omega <= -1:
        raise ValueError("omega must exceed -1")
    s = np.asarray(s, dtype=float)
    b = _brody_b(omega)
    a = omega + 1.0
    with np.errstate(divide="ignore"):
        return a * b * np.power(s, omega) * np.exp(-b * np.power(s, a))


def brody_cdf(s, omega: float):
    s = np.asarray(s, dtype=float)
    return -np.expm1(-_brody_b(omega) * np.power(s, omega + 1.0))


def brody_loglike(s, omega: float) -> float:
    s = np.asarray(s, dtype=float)
    a = omega + 1.0
    b = _brody_b(omega)
    logs = np.log(s)
    return float(s.size * (math.log(a) + math.log(b)) + omega * logs.sum() - b * np.exp(a * logs).sum())


def golden_max(f, lo, hi, tol=1e-4):
    """Golden-section search for the maximum of a unimodal ``f`` on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_brody(s, bounds=OMEGA_BOUNDS, tol: float = 1e-4,
              min_spacings: int = MIN_SPACINGS) -> BrodyFit:
    """Maximum-likelihood Brody parameter of unit-mean spacings ``s``."""
    s = np.asarray(s, dtype=float)
    if s.size < min_spacings:
        raise ValueError(f"{s.size} spacings is too few for a Brody fit (need {min_spacings})")
    if np.any(s <= 0):
        raise ValueError("spacings must be strictly positive")
    omega = golden_max(lambda w: brody_loglike(s, w), bounds[0], bounds[1], tol)
    at_boundary = min(omega - bounds[0], bounds[1] - omega) < 2 * tol
    if at_boundary:
        logger.warning("Brody likelihood maximum at search boundary (omega=%.4f)", omega)
    ss = np.sort(s)
    cdf = brody_cdf(ss, omega)
    n = ss.size
    ks = float(max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n)))
    return BrodyFit(omega, brody_loglike(s, omega), n, ks, at_boundary)


def spacing_histogram(s, omega: Optional[float] = None, bins: int = 25, s_max: float = 4.0):
    """(bin centres, density, Brody density at the centres or None)."""
    density, edges = np.histogram(s, bins=bins, range=(0.0, s_max), density=False)
    width = edges[1] - edges[0]
    density = density / (np.asarray(s).size * width)
    centres = 0.5 * (edges[:-1] + edges[1:])
    curve = brody_pdf(centres, omega) if omega is not None else None
    return centres, density, curve
