import numpy as np
import pytest

from ladder_eth.model import (LadderParams, build_hamiltonian, build_observable_D,
                              build_sector_basis, build_terms, default_two_sz)
from ladder_eth.spectral import diagonal_elements, diagonalize

SX = np.array([[0, 0.5], [0.5, 0]])
SY = np.array([[0, -0.5j], [0.5j, 0]])
SZ = np.array([[0.5, 0], [0, -0.5]])


def site_op(op, site, n):
    """Full 2^n operator with ``op`` on ``site``; bit ``site`` of the index is that spin (1 = up)."""
    out = np.array([[1.0 + 0j]])
    for k in reversed(range(n)):
        out = np.kron(out, op if k == site else np.eye(2))
    return out


def dense_ladder(n_right, delta, kappa):
    """Brute-force tensor-product construction (returns full H and D)."""
    nl = 2 * n_right - 1
    n = nl + n_right
    # basis index bit=1 means spin up; SZ above is written for (up, down)
    # ordering, so flip to (down=0, up=1)
    flip = np.array([[0, 1], [1, 0]])
    sx, sy, sz = (flip @ m @ flip for m in (SX, SY, SZ))
    ops = [[site_op(m, s, n) for m in (sx, sy, sz)] for s in range(n)]

    def bond(i, j):
        return ops[i][0] @ ops[j][0] + ops[i][1] @ ops[j][1] + delta * ops[i][2] @ ops[j][2]

    dim = 2 ** n
    HL = sum((bond(i, i + 1) for i in range(nl - 1)), np.zeros((dim, dim), complex))
    HR = sum((bond(nl + j, nl + j + 1) for j in range(n_right - 1)), np.zeros((dim, dim), complex))
    HI = sum((bond(i, nl + i) for i in range(n_right)), np.zeros((dim, dim), complex))
    return HL + HR + kappa * HI, HL - HR


def dense_chain(n, delta=0.1):
    """Open XXZ chain on the full 2^n space."""
    flip = np.array([[0, 1], [1, 0]])
    mats = [(flip @ m @ flip, c) for m, c in ((SX, 1.0), (SY, 1.0), (SZ, delta))]
    H = np.zeros((2 ** n, 2 ** n), complex)
    for i in range(n - 1):
        for m, c in mats:
            H += c * site_op(m, i, n) @ site_op(m, i + 1, n)
    return H


def restrict(full, basis):
    idx = np.asarray(basis.states)
    return full[np.ix_(idx, idx)]


def ladder(n_right, kappa, delta=0.1, two_sz=None):
    p = LadderParams(n_right, delta, kappa)
    if two_sz is None:
        two_sz = default_two_sz(p.n_sites)
    b = build_sector_basis(p.n_sites, two_sz)
    return p, b, build_hamiltonian(p, b), build_observable_D(p, b)


_SPEC_CACHE = {}


def ed(n_right, kappa, two_sz=None):
    """Cached (params, basis, H, D, spectrum-with-diagonals)."""
    key = (n_right, kappa, two_sz)
    if key not in _SPEC_CACHE:
        p, b, H, D = ladder(n_right, kappa, two_sz=two_sz)
        _SPEC_CACHE[key] = (p, b, H, D, diagonal_elements(D, diagonalize(H)))
    return _SPEC_CACHE[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20241014)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
