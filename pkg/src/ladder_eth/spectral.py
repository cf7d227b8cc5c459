"""Dense diagonalization and exact shell statistics of diagonal matrix elements."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DegenerateObservableError, DimensionError, EmptyShellError, StateError
from .model import SparseOperator

DENSE_CEILING = 30000


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray
    eigvecs: Optional[np.ndarray] = None
    d_diag: Optional[np.ndarray] = None
    d2_diag: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.energies.size


@dataclass(frozen=True)
class EthStats:
    d_bar: float
    sigma2: float
    delta2: float
    v: float
    d_eff: float
    e_bar: float
    sigma_e: float
    # seed-resampling errors; zero for exact results
    err_d_bar: float = 0.0
    err_sigma2: float = 0.0
    err_delta2: float = 0.0
    err_v: float = 0.0
    err_d_eff: float = 0.0


def diagonalize(H: SparseOperator, want_vectors: bool = True,
                ceiling: int = DENSE_CEILING) -> Spectrum:
    if H.dim > ceiling:
        raise DimensionError(
            f"dimension {H.dim} exceeds the dense ceiling {ceiling}; "
            "use the typicality estimators for this size"
        )
    dense = H.to_dense()
    if want_vectors:
        w, vecs = scipy.linalg.eigh(dense, driver="evr")
        return Spectrum(w, vecs)
    w = scipy.linalg.eigh(dense, eigvals_only=True, driver="evr")
    return Spectrum(w)


def diagonal_elements(D: SparseOperator, spec: Spectrum) -> Spectrum:
    """Attach D_nn = <n|D|n> and (D^2)_nn = ||D|n>||^2."""
    if spec.eigvecs is None:
        raise StateError("diagonal elements need eigenvectors; diagonalize with want_vectors=True")
    if D.dim != spec.dim:
        raise DimensionError("observable and spectrum dimensions differ")
    V = spec.eigvecs
    d_diag = np.empty(spec.dim)
    d2_diag = np.empty(spec.dim)
    # column blocks keep the dense temporary small
    block = 512
    for lo in range(0, spec.dim, block):
        Vb = V[:, lo:lo + block]
        DVb = D.matvec(Vb)
        d_diag[lo:lo + block] = np.einsum("ij,ij->j", Vb, DVb)
        d2_diag[lo:lo + block] = np.einsum("ij,ij->j", DVb, DVb)
    return replace(spec, d_diag=d_diag, d2_diag=d2_diag)


def gaussian_weights(energies, e_bar: float, sigma_e: float) -> np.ndarray:
    if not sigma_e > 0:
        raise ValueError("sigma_e must be positive")
    x = (np.asarray(energies, dtype=float) - e_bar) / sigma_e
    # shifting by the closest level keeps narrow shells from underflowing
    # uniformly; it cancels in the normalization
    logw = -0.5 * x * x
    w = np.exp(logw - logw.max())
    total = math.fsum(w)
    if not total > 0 or not np.isfinite(total):
        raise EmptyShellError("all shell weights vanished")
    return w / total


def _fsum_dot(p, x) -> float:
    return math.fsum(np.asarray(p) * np.asarray(x))


def shell_moments(p, d_diag, d2_diag):
    """(D-bar, Sigma^2, delta_D^2) for weights ``p`` with compensated sums."""
    d_bar = _fsum_dot(p, d_diag)
    dev = np.asarray(d_diag) - d_bar
    sigma2 = _fsum_dot(p, dev * dev)
    # delta^2 = sum p (D^2)_nn - Dbar^2, expanded about Dbar to avoid cancellation
    delta2 = math.fsum(np.concatenate([np.asarray(p) * (np.asarray(d2_diag) - np.asarray(d_diag) ** 2),
                                       [sigma2]]))
    return d_bar, sigma2, delta2


def _clamp(x, name):
    if x < 0:
        if x > -1e-12:
            return 0.0
        raise ArithmeticError(f"{name} = {x} is negative beyond rounding")
    return x


def eth_stats_exact(spec: Spectrum, e_bar: float = 0.0, sigma_e: float = 0.6) -> EthStats:
    if spec.d_diag is None or spec.d2_diag is None:
        raise StateError("spectrum lacks diagonal elements; call diagonal_elements first")
    p = gaussian_weights(spec.energies, e_bar, sigma_e)
    d_bar, sigma2, delta2 = shell_moments(p, spec.d_diag, spec.d2_diag)
    sigma2 = _clamp(sigma2, "Sigma^2")
    delta2 = _clamp(delta2, "delta_D^2")
    if delta2 < 1e-10 * max(1.0, d_bar * d_bar):
        raise DegenerateObservableError(
            f"observable is constant on the shell (delta_D^2 = {delta2:.3e})"
        )
    v = min(sigma2 / delta2, 1.0)
    d_eff = 1.0 / math.fsum(p * p)
    return EthStats(d_bar, sigma2, delta2, v, d_eff, e_bar, sigma_e)
