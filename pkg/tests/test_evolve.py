import numpy as np
import pytest
import scipy.linalg

from ladder_eth.errors import AccuracyError, BoundsError, PlanError
from ladder_eth.evolve import (SpectralBounds, apply_function, estimate_bounds, function_plan,
                               propagate, propagation_plan)
from ladder_eth.model import SparseOperator, bond_operator, build_sector_basis
from ladder_eth.typicality import ModSpec, mod_exponent, sample_haar_state

from conftest import ed, ladder


def random_state(rng, n):
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return z / np.linalg.norm(z)


def test_bounds_two_spin():
    op = bond_operator(build_sector_basis(2, 0), [(0, 1)], 1.0, 0.1)
    b = estimate_bounds(op)
    assert b.contains([-0.525, 0.475])
    assert b.e_min == pytest.approx(-0.525, abs=1e-12)


@pytest.mark.parametrize("kappa", [0.0, 1.0, 4.5])
def test_bounds_contain_ed_spectrum(kappa):
    *_, H, D, spec = ed(3, kappa, two_sz=0)
    b = estimate_bounds(H)
    assert b.contains(spec.energies)
    # the unpadded estimates are converged extremes, not loose envelopes
    assert b.e_min == pytest.approx(spec.energies[0], abs=1e-6)
    assert b.e_max == pytest.approx(spec.energies[-1], abs=1e-6)


def test_bounds_lanczos_path():
    *_, H, D, spec = ed(4, 2.0)
    assert H.dim > 64
    b = estimate_bounds(H)
    assert abs(b.e_min - spec.energies[0]) < 1e-6 and abs(b.e_max - spec.energies[-1]) < 1e-6
    assert b.contains(spec.energies)


def test_bounds_constant_operator():
    I = SparseOperator.identity(100)
    op = SparseOperator(I.indptr.copy(), I.indices.copy(), np.full(100, 2.5))
    b = estimate_bounds(op)
    assert b.lo < 2.5 < b.hi
    assert b.e_min == pytest.approx(2.5, abs=1e-5) and b.e_max == pytest.approx(2.5, abs=1e-5)


def test_bounds_validation():
    with pytest.raises(BoundsError):
        SpectralBounds(1.0, 1.0)
    with pytest.raises(BoundsError):
        SpectralBounds(0.0, 1.0, margin=-0.1)
    b = SpectralBounds(-1.0, 3.0, 0.25)
    assert (b.lo, b.hi, b.center, b.half_width) == (-2.0, 4.0, 1.0, 3.0)


def test_bounds_nonconvergence():
    *_, H, D, spec = ed(4, 2.0)
    with pytest.raises(BoundsError):
        estimate_bounds(H, max_steps=5, tol=1e-14)


def test_plan_tail_invariant():
    b = SpectralBounds(-7.0, 7.0)
    for dt in (0.1, 0.5, 2.0):
        plan = propagation_plan(b, dt)
        assert plan.order >= 2 and plan.coefficients.size == plan.order + 1
        assert np.all(np.abs(plan.coefficients[-2:]) < 1e-12)


def test_zero_time_step_is_identity(rng):
    _, b, H, D = ladder(3, 1.0, two_sz=0)
    plan = propagation_plan(estimate_bounds(H), 0.0)
    psi = random_state(rng, b.dim)
    assert np.max(np.abs(propagate(H, psi, 0.0, plan) - psi)) < 1e-15


def test_eigenvector_picks_up_phase():
    *_, H, D, spec = ed(3, 2.0, two_sz=0)
    plan = propagation_plan(estimate_bounds(H), 0.5)
    for n in (0, 17, spec.dim - 1):
        v = spec.eigvecs[:, n].astype(complex)
        out = propagate(H, v, 0.5, plan)
        assert abs(abs(np.vdot(v, out)) - 1) < 1e-10
        assert np.max(np.abs(out - np.exp(-0.5j * spec.energies[n]) * v)) < 1e-10


def test_matches_dense_exponential(rng):
    _, b, H, D = ladder(3, 1.0, two_sz=0)
    psi = random_state(rng, b.dim)
    U = scipy.linalg.expm(-0.7j * H.to_dense())
    plan = propagation_plan(estimate_bounds(H), 0.7)
    assert np.max(np.abs(propagate(H, psi, 0.7, plan) - U @ psi)) < 1e-11


def test_unitarity_and_energy_over_many_steps(rng):
    _, b, H, D = ladder(4, 3.0)
    plan = propagation_plan(estimate_bounds(H), 0.5)
    psi = random_state(rng, b.dim)
    e0 = np.vdot(psi, H @ psi).real
    worst_step = 0.0
    for _ in range(1000):
        nxt = propagate(H, psi, 0.5, plan)
        worst_step = max(worst_step, abs(np.linalg.norm(nxt) - np.linalg.norm(psi)))
        psi = nxt
    assert worst_step < 1e-10
    assert abs(np.linalg.norm(psi) - 1) < 1e-8
    assert abs(np.vdot(psi, H @ psi).real - e0) < 1e-8 * max(1, abs(e0))


def test_composition(rng):
    _, b, H, D = ladder(4, 1.0)
    bd = estimate_bounds(H)
    p1, p2 = propagation_plan(bd, 0.5), propagation_plan(bd, 1.0)
    for _ in range(3):
        psi = random_state(rng, b.dim)
        twice = propagate(H, propagate(H, psi, 0.5, p1), 0.5, p1)
        assert np.max(np.abs(twice - propagate(H, psi, 1.0, p2))) < 1e-9


def test_time_reversal(rng):
    _, b, H, D = ladder(4, 3.0)
    bd = estimate_bounds(H)
    fwd, bwd = propagation_plan(bd, 0.5), propagation_plan(bd, -0.5)
    psi = random_state(rng, b.dim)
    d0 = np.vdot(psi, D @ psi).real
    phi = psi
    for _ in range(100):
        phi = propagate(H, phi, 0.5, fwd)
    for _ in range(100):
        phi = propagate(H, phi, -0.5, bwd)
    assert abs(np.vdot(phi, D @ phi).real - d0) < 1e-8
    assert np.max(np.abs(phi - psi)) < 1e-9


def test_conserved_observable_at_kappa_zero(rng):
    _, b, H, D = ladder(4, 0.0)
    plan = propagation_plan(estimate_bounds(H), 0.5)
    psi = random_state(rng, b.dim)
    d = []
    for _ in range(100):
        d.append(np.vdot(psi, D @ psi).real)
        psi = propagate(H, psi, 0.5, plan)
    assert np.ptp(d) < 1e-9


def test_plan_mismatch():
    _, b, H, D = ladder(3, 4.5, two_sz=0)
    small = SpectralBounds(-0.5, 0.5)
    psi = np.ones(b.dim, complex) / np.sqrt(b.dim)
    with pytest.raises(PlanError):
        propagate(H, psi, 0.5, propagation_plan(estimate_bounds(H), 0.25))
    with pytest.raises(PlanError):
        propagate(H, psi, 0.5, propagation_plan(small, 0.5))
    with pytest.raises(PlanError):
        propagate(H, psi[:-1], 0.5, propagation_plan(estimate_bounds(H), 0.5))


def test_constant_function_is_identity(rng):
    _, b, H, D = ladder(3, 1.0, two_sz=0)
    psi = random_state(rng, b.dim)
    out = apply_function(lambda x: np.ones_like(x), H, estimate_bounds(H), psi)
    assert np.max(np.abs(out - psi)) < 1e-14


def test_gaussian_filter_on_eigenvectors():
    *_, H, D, spec = ed(3, 2.0, two_sz=0)
    g = lambda e: np.exp(-(e - 0.3) ** 2 / (4 * 0.36))
    bd = estimate_bounds(H)
    plan = function_plan(g, bd)
    for n in (0, 20, 40, spec.dim - 1):
        v = spec.eigvecs[:, n]
        out = apply_function(g, H, bd, v, plan=plan)
        assert np.max(np.abs(out - g(spec.energies[n]) * v)) < 1e-9


def test_function_matches_propagator(rng):
    _, b, H, D = ladder(4, 1.0)
    bd = estimate_bounds(H)
    psi = random_state(rng, b.dim)
    via_f = apply_function(lambda e: np.exp(-0.5j * e), H, bd, psi)
    assert np.max(np.abs(via_f - propagate(H, psi, 0.5, propagation_plan(bd, 0.5)))) < 1e-10


def test_function_plan_order_cap():
    bd = SpectralBounds(-1.0, 1.0)
    with pytest.raises(AccuracyError) as info:
        function_plan(lambda x: np.abs(x), bd, max_order=256)
    assert info.value.achieved_tail > 1e-12


@pytest.mark.parametrize("kappa", [0.0, 2.0])
def test_mod_half_exponent_matches_dense_oracle(kappa):
    _, b, H, D = ladder(3, kappa, two_sz=0)
    spec = ModSpec(h0=0.2, d0=2.0, beta=1.3, sigma=0.6, seed=3)
    action, bd = mod_exponent(H, D, spec, estimate_bounds(H), estimate_bounds(D))
    r = sample_haar_state(b.dim, 3)
    eye = np.eye(b.dim)
    A = -((H.to_dense() - spec.h0 * eye) @ (H.to_dense() - spec.h0 * eye)
          + spec.beta ** 2 * (D.to_dense() - spec.d0 * eye) @ (D.to_dense() - spec.d0 * eye)) / (4 * spec.sigma ** 2)
    w, V = np.linalg.eigh(A)
    assert bd.contains(w)
    ref = V @ (np.exp(w) * (V.T @ r))
    out = apply_function(np.exp, action, bd, r)
    ref_n, out_n = ref / np.linalg.norm(ref), out / np.linalg.norm(out)
    assert np.max(np.abs(out_n - ref_n)) < 1e-7
    Dd = D.to_dense()
    assert abs(np.vdot(out_n, Dd @ out_n).real - np.vdot(ref_n, Dd @ ref_n).real) < 1e-7
