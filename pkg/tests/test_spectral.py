import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ladder_eth.errors import DegenerateObservableError, DimensionError, EmptyShellError, StateError
from ladder_eth.model import SparseOperator, bond_operator, build_sector_basis
from ladder_eth.spectral import (Spectrum, diagonal_elements, diagonalize, eth_stats_exact,
                                 gaussian_weights)

from conftest import dense_chain, ed, ladder, restrict


def test_two_spin_bond():
    b = build_sector_basis(2, 0)
    spec = diagonalize(bond_operator(b, [(0, 1)], 1.0, 0.1))
    assert np.allclose(spec.energies, [-0.525, 0.475], atol=1e-14)


def test_decoupled_spectrum_is_sum_of_leg_spectra():
    p, b, H, D = ladder(3, 0.0, two_sz=0)
    spec = diagonalize(H, want_vectors=False)
    # leg levels with their magnetizations, from independent dense chains
    def levels(n):
        full = dense_chain(n)
        out = []
        for n_up in range(n + 1):
            sub = build_sector_basis(n, 2 * n_up - n)
            out += [(n_up, e) for e in np.linalg.eigvalsh(restrict(full, sub))]
        return out
    left, right = levels(5), levels(3)
    sums = sorted(el + er for ul, el in left for ur, er in right if ul + ur == 4)
    assert np.allclose(spec.energies, sums, atol=1e-12)


@pytest.mark.parametrize("n_right, kappa", [(3, 1.0), (4, 3.0)])
def test_residuals_and_orthonormality(n_right, kappa):
    *_, H, D, spec = ed(n_right, kappa)
    V = spec.eigvecs
    res = np.linalg.norm(H @ V - V * spec.energies, axis=0)
    norm_est = np.abs(spec.energies).max()
    assert res.max() < 1e-9 * norm_est
    assert np.max(np.abs(V.T @ V - np.eye(V.shape[1]))) < 1e-10
    assert np.all(np.diff(spec.energies) >= 0)


def test_trace_invariance():
    *_, H, D, spec = ed(4, 2.0)
    assert abs(math.fsum(spec.energies) - math.fsum(H.diagonal())) < 1e-8


def test_dense_ceiling():
    _, b, H, _ = ladder(3, 1.0, two_sz=0)
    with pytest.raises(DimensionError, match="typicality"):
        diagonalize(H, ceiling=50)


def test_diagonal_elements_identity_and_self():
    p, b, H, D, spec = ed(3, 1.0, two_sz=0)
    s_id = diagonal_elements(SparseOperator.identity(b.dim), spec)
    assert np.allclose(s_id.d_diag, 1, atol=1e-12) and np.allclose(s_id.d2_diag, 1, atol=1e-12)
    s_h = diagonal_elements(H, spec)
    assert np.allclose(s_h.d_diag, spec.energies, atol=1e-12)
    assert np.allclose(s_h.d2_diag, spec.energies ** 2, atol=1e-11)


def test_diagonal_elements_commuting_case():
    *_, spec = ed(4, 0.0)
    # eigh picks some basis inside degenerate blocks, so compare against the
    # blockwise bound only where levels are non-degenerate
    E = spec.energies
    gap = np.minimum(np.diff(E, prepend=-np.inf), np.diff(E, append=np.inf))
    iso = gap > 1e-8
    assert np.max(np.abs(spec.d2_diag[iso] - spec.d_diag[iso] ** 2)) < 1e-9


def test_diagonal_elements_needs_vectors():
    _, b, H, D = ladder(3, 1.0, two_sz=0)
    with pytest.raises(StateError):
        diagonal_elements(D, diagonalize(H, want_vectors=False))


def test_cauchy_schwarz_on_diagonal():
    *_, spec = ed(4, 4.5)
    assert np.all(spec.d2_diag >= spec.d_diag ** 2 - 1e-12)


def test_gaussian_weights_uniform_and_delta():
    p = gaussian_weights(np.full(7, 0.3), 0.0, 0.6)
    assert np.allclose(p, 1 / 7, atol=1e-16)
    e = np.array([-1.0, 0.0, 0.5, 2.0])
    p = gaussian_weights(e, 0.5, 1e-4)
    assert p[2] == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        gaussian_weights(e, 0.0, 0.0)


def test_gaussian_weights_empty_shell():
    with pytest.raises(EmptyShellError):
        gaussian_weights(np.array([np.inf, np.inf]), 0.0, 0.6)


def test_gaussian_weights_match_extended_precision():
    *_, spec = ed(3, 1.0, two_sz=0)
    p = gaussian_weights(spec.energies, 0.0, 0.6)
    mpmath.mp.dps = 40
    w = [mpmath.exp(-mpmath.mpf(float(e)) ** 2 / (2 * mpmath.mpf("0.36"))) for e in spec.energies]
    z = mpmath.fsum(w)
    ref = np.array([float(x / z) for x in w])
    assert abs(math.fsum(p) - 1) < 1e-14
    assert np.max(np.abs(p - ref) / ref) < 1e-12


def test_v_is_one_for_hamiltonian_itself():
    *_, H, D, spec = ed(4, 1.0)
    st_ = eth_stats_exact(diagonal_elements(H, spec))
    assert abs(st_.v - 1) < 1e-9


def test_v_is_one_at_kappa_zero():
    # at kappa = 0 the eigenbasis can be chosen to diagonalize D, but eigh
    # mixes degenerate levels; diagonalize H + eps D to pick the joint basis
    p, b, H, D = ladder(4, 0.0)
    Hm = H.to_dense() + 1e-7 * D.to_dense()
    w, V = np.linalg.eigh(Hm)
    spec = diagonal_elements(D, Spectrum(np.diag(V.T @ H.to_dense() @ V).copy(), V))
    assert abs(eth_stats_exact(spec).v - 1) < 1e-9


def naive_stats(E, dd, d2, e_bar, sigma_e):
    n = len(E)
    w = [math.exp(-(E[i] - e_bar) ** 2 / (2 * sigma_e ** 2)) for i in range(n)]
    z = sum(w)
    p = [x / z for x in w]
    dbar = sum(p[i] * dd[i] for i in range(n))
    s2 = 0.0
    for i in range(n):
        for j in range(n):
            # 1/2 sum_ij p_i p_j (D_ii - D_jj)^2 equals the shell variance
            s2 += 0.5 * p[i] * p[j] * (dd[i] - dd[j]) ** 2
    delta2 = sum(p[i] * d2[i] for i in range(n)) - dbar ** 2
    return dbar, s2, delta2


def test_against_naive_double_loop():
    *_, spec = ed(4, 1.0)
    st_ = eth_stats_exact(spec, 0.0, 0.6)
    dbar, s2, delta2 = naive_stats(spec.energies, spec.d_diag, spec.d2_diag, 0.0, 0.6)
    assert st_.sigma2 == pytest.approx(s2, rel=1e-10)
    assert st_.v == pytest.approx(s2 / delta2, rel=1e-10)
    assert st_.d_bar == pytest.approx(dbar, rel=1e-9, abs=1e-13)


def test_degenerate_observable():
    *_, spec = ed(3, 1.0, two_sz=0)
    const = replace(spec, d_diag=np.full(spec.dim, 2.0), d2_diag=np.full(spec.dim, 4.0))
    with pytest.raises(DegenerateObservableError):
        eth_stats_exact(const)
    with pytest.raises(StateError):
        eth_stats_exact(replace(spec, d_diag=None))


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


@given(st.integers(0, 10_000), st.integers(3, 30), st.floats(-1.5, 1.5), st.floats(0.1, 3.0))
@settings(max_examples=50, deadline=None)
def test_v_between_zero_and_one(seed, n, e_bar, sigma_e):
    rng = np.random.default_rng(seed)
    H = SparseOperator.from_dense(random_symmetric(rng, n))
    D = SparseOperator.from_dense(random_symmetric(rng, n))
    st_ = eth_stats_exact(diagonal_elements(D, diagonalize(H)), e_bar, sigma_e)
    assert 0 <= st_.sigma2 <= st_.delta2 + 1e-12
    assert 0 <= st_.v <= 1
    assert 1 <= st_.d_eff <= n + 1e-9


def test_shift_and_scale_invariance(rng):
    n = 40
    Hd, Dd = random_symmetric(rng, n), random_symmetric(rng, n)
    spec = diagonalize(SparseOperator.from_dense(Hd))
    base = eth_stats_exact(diagonal_elements(SparseOperator.from_dense(Dd), spec), 0.2, 0.8)
    shifted = eth_stats_exact(diagonal_elements(SparseOperator.from_dense(Dd + 3.7 * np.eye(n)), spec), 0.2, 0.8)
    scaled = eth_stats_exact(diagonal_elements(SparseOperator.from_dense(-2.5 * Dd), spec), 0.2, 0.8)
    assert shifted.sigma2 == pytest.approx(base.sigma2, rel=1e-10)
    assert shifted.delta2 == pytest.approx(base.delta2, rel=1e-10)
    assert shifted.v == pytest.approx(base.v, rel=1e-10)
    assert scaled.v == pytest.approx(base.v, rel=1e-10)
    assert scaled.sigma2 == pytest.approx(6.25 * base.sigma2, rel=1e-10)


def test_sign_flip_invariance(rng):
    *_, H, D, spec = ed(3, 2.0, two_sz=0)
    signs = rng.choice([-1.0, 1.0], spec.dim)
    flipped = diagonal_elements(D, Spectrum(spec.energies, spec.eigvecs * signs))
    a, b = eth_stats_exact(spec), eth_stats_exact(flipped)
    assert a.sigma2 == pytest.approx(b.sigma2, rel=1e-12)
    assert a.v == pytest.approx(b.v, rel=1e-12)


def test_d_eff_grows_with_shell_width():
    *_, spec = ed(4, 2.0)
    d_eff = [eth_stats_exact(spec, 0.0, s).d_eff for s in np.linspace(0.05, 3.0, 25)]
    assert np.all(np.diff(d_eff) > 0)
    assert d_eff[-1] <= spec.dim
