"""Asymmetric XXZ ladder: magnetization-sector bases and sparse operators.

Site/bit convention (stable, cached data depends on it): bit ``i`` for
``0 <= i < n_left`` is site ``i + 1`` of the long (left) leg, bit
``n_left + j`` is site ``j + 1`` of the short (right) leg.  Legs have open
ends.  Rung ``i`` couples left site ``i`` with right site ``i`` for
``i = 1..n_right``, so the ladder section sits at the start of the long leg.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DimensionError, InvalidSectorError


@dataclass(frozen=True)
class LadderParams:
    n_right: int
    delta: float = 0.1
    kappa: float = 0.0

    def __post_init__(self):
        if int(self.n_right) != self.n_right or self.n_right < 1:
            raise ValueError(f"n_right must be a positive integer, got {self.n_right!r}")
        if not math.isfinite(self.delta):
            raise ValueError("delta must be finite")
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")

    @property
    def n_left(self) -> int:
        return 2 * self.n_right - 1

    @property
    def n_sites(self) -> int:
        return 3 * self.n_right - 1

    def left_bonds(self):
        return [(i, i + 1) for i in range(self.n_left - 1)]

    def right_bonds(self):
        off = self.n_left
        return [(off + j, off + j + 1) for j in range(self.n_right - 1)]

    def rungs(self):
        return [(i, self.n_left + i) for i in range(self.n_right)]


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """All ``n_sites``-bit configurations with total magnetization ``two_sz / 2``."""

    n_sites: int
    two_sz: int
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.size

    @property
    def n_up(self) -> int:
        return (self.n_sites + self.two_sz) // 2

    def index_of(self, config: int) -> int:
        k = int(np.searchsorted(self.states, config))
        if k >= self.dim or self.states[k] != config:
            raise KeyError(f"configuration {config:#b} is not in this sector")
        return k

    def __len__(self):
        return self.dim


def build_sector_basis(n_sites: int, two_sz: int) -> SectorBasis:
    if n_sites < 1:
        raise InvalidSectorError("n_sites must be positive")
    if abs(two_sz) > n_sites or (n_sites - two_sz) % 2:
        raise InvalidSectorError(
            f"2*Sz = {two_sz} impossible for {n_sites} spins-1/2 "
            "(need |2Sz| <= N and 2Sz = N mod 2)"
        )
    if n_sites > 62:
        raise InvalidSectorError("at most 62 sites fit the int64 encoding")
    n_up = (n_sites + two_sz) // 2
    states = kernels.sector_states(n_sites, n_up)
    states.setflags(write=False)
    return SectorBasis(n_sites, two_sz, states)


def default_two_sz(n_sites: int, spacing_stats: bool = False) -> int:
    """Smallest non-negative sector; ``spacing_stats`` skips the spin-flip
    symmetric ``Sz = 0`` sector of even chains."""
    if n_sites % 2:
        return 1
    return 2 if spacing_stats else 0


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Real symmetric operator stored in CSR form."""

    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        for a in (self.indptr, self.indices, self.data):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.indptr.size - 1

    @property
    def nnz(self) -> int:
        return self.data.size

    @classmethod
    def identity(cls, dim: int, label: str = "identity") -> "SparseOperator":
        return cls(np.arange(dim + 1, dtype=np.int64), np.arange(dim, dtype=np.int64),
                   np.ones(dim), label)

    @classmethod
    def from_dense(cls, mat: np.ndarray, label: str = "") -> "SparseOperator":
        import scipy.sparse as sp
        m = sp.csr_matrix(np.asarray(mat, dtype=float))
        m.sort_indices()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.copy(), label)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.dim:
            raise DimensionError(f"vector length {v.shape[0]} != operator dimension {self.dim}")
        if v.ndim == 1:
            if not np.issubdtype(v.dtype, np.inexact):
                v = v.astype(float)
            return kernels.csr_matvec(self.indptr, self.indices, self.data, np.ascontiguousarray(v))
        if v.ndim == 2:
            if not np.issubdtype(v.dtype, np.inexact):
                v = v.astype(float)
            return kernels.csr_matmat(self.indptr, self.indices, self.data, np.ascontiguousarray(v))
        raise DimensionError("matvec expects a vector or a matrix of column vectors")

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.dim)
        rows = np.repeat(np.arange(self.dim), np.diff(self.indptr))
        on = rows == self.indices
        np.add.at(out, rows[on], self.data[on])
        return out

    @cached_property
    def diagonal_range(self):
        d = self.diagonal()
        return (float(d.min()), float(d.max())) if d.size else (0.0, 0.0)

    @cached_property
    def probe_moments(self):
        """(<v|A|v>, <Av|Av>) for a fixed random unit vector v."""
        v = np.random.default_rng(7).standard_normal(self.dim)
        v /= np.linalg.norm(v)
        av = self.matvec(v)
        return float(v @ av), float(av @ av)

    def to_scipy(self):
        import scipy.sparse as sp
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def max_abs_row_sum(self) -> float:
        """Gershgorin bound on the spectral radius."""
        if self.dim == 0:
            return 0.0
        return float(np.add.reduceat(np.abs(self.data), self.indptr[:-1]).max()) if self.nnz else 0.0


def matvec(op: SparseOperator, v: np.ndarray) -> np.ndarray:
    return op.matvec(v)


def bond_operator(basis: SectorBasis, bonds, weights, delta: float, label: str = "") -> SparseOperator:
    """Sum over ``bonds`` of ``w * (SxSx + SySy + delta SzSz)`` inside ``basis``."""
    bonds = list(bonds)
    w = np.asarray(weights, dtype=float)
    if w.ndim == 0:
        w = np.full(len(bonds), float(w))
    if len(bonds) != w.size:
        raise DimensionError("one weight per bond required")
    for i, j in bonds:
        if not (0 <= i < basis.n_sites and 0 <= j < basis.n_sites) or i == j:
            raise DimensionError(f"bond ({i}, {j}) outside a {basis.n_sites}-site lattice")
    bi = np.array([b[0] for b in bonds], dtype=np.int64)
    bj = np.array([b[1] for b in bonds], dtype=np.int64)
    cols, vals, counts = kernels.bond_rows(basis.states, bi, bj, w, delta * w)
    indptr, indices, data = kernels.compress_rows(cols, vals, counts)
    return SparseOperator(indptr, indices, data, label)


class LadderTerms(NamedTuple):
    left: SparseOperator
    right: SparseOperator
    rung: SparseOperator


def _check_sizes(params: LadderParams, basis: SectorBasis):
    if basis.n_sites != params.n_sites:
        raise DimensionError(
            f"basis has {basis.n_sites} sites but the ladder with n_right={params.n_right} "
            f"has {params.n_sites}"
        )


def build_terms(params: LadderParams, basis: SectorBasis) -> LadderTerms:
    """The three pieces H_L, H_R and (unscaled) H_I."""
    _check_sizes(params, basis)
    d = params.delta
    return LadderTerms(
        bond_operator(basis, params.left_bonds(), 1.0, d, "H_L"),
        bond_operator(basis, params.right_bonds(), 1.0, d, "H_R"),
        bond_operator(basis, params.rungs(), 1.0, d, "H_I"),
    )


def build_hamiltonian(params: LadderParams, basis: SectorBasis) -> SparseOperator:
    _check_sizes(params, basis)
    bonds = params.left_bonds() + params.right_bonds() + params.rungs()
    weights = ([1.0] * (params.n_left - 1) + [1.0] * (params.n_right - 1)
               + [params.kappa] * params.n_right)
    return bond_operator(basis, bonds, weights, params.delta, f"H(kappa={params.kappa:g})")


def build_observable_D(params: LadderParams, basis: SectorBasis) -> SparseOperator:
    """Energy difference between the legs, D = H_L - H_R."""
    _check_sizes(params, basis)
    bonds = params.left_bonds() + params.right_bonds()
    weights = [1.0] * (params.n_left - 1) + [-1.0] * (params.n_right - 1)
    return bond_operator(basis, bonds, weights, params.delta, "D")
