"""Resolvent solves, the heat semigroup, zero-shift limits, excessivity."""
import numpy as np
import pytest
import scipy.linalg

import critform as cf
from critform.errors import GreenInconclusive
from critform.resolvent import direct_green_solve

from conftest import active_vector, shifted


def dense_resolvent(form, alpha):
    """Oracle: invert (Q + alpha M) on the active block with dense algebra."""
    act = form.active
    Q = form.active_form_matrix.toarray()
    M = np.diag(form.measure[act])
    return np.linalg.inv(Q + alpha * M) @ M


def test_resolvent_matches_dense_inverse(triangle):
    rng = np.random.default_rng(0)
    for alpha in (0.1, 1.0, 7.3):
        R = dense_resolvent(triangle, alpha)
        for _ in range(5):
            f = rng.standard_normal(3)
            u = cf.resolvent_apply(triangle, f, alpha)
            assert np.allclose(u, R @ f, rtol=1e-10, atol=1e-12)


def test_resolvent_requires_positive_shift(triangle):
    with pytest.raises(ValueError):
        cf.resolvent_apply(triangle, np.ones(3), 0.0)


def test_resolvent_positivity_preserving():
    for seed in range(4):
        form = cf.random_connected_form(15, seed=seed, dirichlet_count=2)
        rng = np.random.default_rng(seed)
        g = np.zeros(form.n)
        g[form.active] = rng.uniform(0.0, 1.0, form.n_active)
        u = cf.resolvent_apply(form, g, 0.5)
        assert np.all(u >= -1e-13)


def test_resolvent_identity():
    """G_a - G_b = (b - a) G_a G_b, the defining relation of the family."""
    form = cf.random_connected_form(20, seed=3)
    rng = np.random.default_rng(3)
    f = active_vector(form, rng)
    for a, b in [(0.25, 1.0), (1.0, 4.0), (0.1, 0.3)]:
        lhs = cf.resolvent_apply(form, f, a) - cf.resolvent_apply(form, f, b)
        rhs = (b - a) * cf.resolvent_apply(form, cf.resolvent_apply(form, f, b), a)
        scale = max(float(np.max(np.abs(lhs))), 1e-30)
        assert float(np.max(np.abs(lhs - rhs))) <= 1e-9 * scale


def test_semigroup_identity_at_zero_and_composition(triangle):
    rng = np.random.default_rng(5)
    f = rng.standard_normal(3)
    assert np.allclose(cf.semigroup_apply(triangle, f, 0.0), f)
    one_step = cf.semigroup_apply(triangle, f, 0.7)
    two_step = cf.semigroup_apply(triangle, cf.semigroup_apply(triangle, f, 0.3), 0.4)
    assert np.allclose(one_step, two_step, rtol=1e-10, atol=1e-12)


def test_semigroup_conserves_constants_without_potential(two_path):
    # c = 0 and no boundary: T_t 1 = 1 exactly
    out = cf.semigroup_apply(two_path, np.ones(2), 2.5)
    assert np.allclose(out, 1.0, atol=1e-12)


def test_semigroup_matches_dense_expm():
    form = cf.random_connected_form(12, seed=8, dirichlet_count=1)
    act = form.active
    L = np.diag(1.0 / form.measure[act]) @ form.active_form_matrix.toarray()
    rng = np.random.default_rng(8)
    f = active_vector(form, rng)
    expect = scipy.linalg.expm(-1.3 * L) @ f[act]
    got = cf.semigroup_apply(form, f, 1.3)[act]
    assert np.allclose(got, expect, rtol=1e-9, atol=1e-11)


def test_krylov_path_agrees_with_dense():
    form = cf.random_connected_form(30, seed=2)
    rng = np.random.default_rng(2)
    f = active_vector(form, rng)
    dense = cf.semigroup_apply(form, f, 0.9)
    krylov = cf.semigroup_apply(form, f, 0.9, dense_cutoff=1)
    assert np.allclose(dense, krylov, rtol=1e-8, atol=1e-10)


# --- zero-shift limits ------------------------------------------------------

def test_green_on_pinned_path_is_min(pinned_path):
    # Green kernel of the path with an absorbing end is min(n, m)
    for m in (1, 2, 3):
        g = {str(m): 1.0}
        res = cf.green_apply(pinned_path, g)
        assert res.finite
        for n in range(4):
            assert res.value[pinned_path.index(str(n))] == pytest.approx(
                min(n, m), rel=1e-10, abs=1e-12)


def test_green_direct_and_schedule_paths_agree(pinned_path):
    g = {"2": 1.0}
    direct = cf.green_apply(pinned_path, g)
    assert "direct" in direct.detail
    limit = cf.green_apply(pinned_path, g, try_direct=False)
    assert limit.finite
    assert np.allclose(direct.value, limit.value, rtol=1e-7, atol=1e-9)
    # the trace documents a monotone increasing limit as alpha decreases
    sups = [s for _, s in limit.alpha_trace]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(sups, sups[1:]))


def test_green_diverges_without_killing(two_path):
    # no boundary, no potential: G_alpha 1 = 1/alpha blows up
    res = cf.green_apply(two_path, np.ones(2))
    assert res.status == "diverges" and not res.finite
    alphas = [a for a, _ in res.alpha_trace]
    sups = np.array([s for _, s in res.alpha_trace])
    # sup grows like 1/alpha all the way down the schedule
    assert np.all(np.diff(sups) > 0)
    assert sups[-1] > 1e3 * sups[0]
    assert sups[-1] == pytest.approx(1.0 / alphas[-1], rel=1e-6)


def test_green_inconclusive_on_truncated_schedule(pinned_path):
    # two shifts are not enough evidence either way
    with pytest.raises(GreenInconclusive):
        cf.green_apply(pinned_path, {"2": 1.0}, alpha_schedule=[1.0, 0.9],
                       try_direct=False)


def test_direct_green_solve_rejects_singular(two_path):
    assert direct_green_solve(two_path, np.ones(2)) is None


# --- excessive functions ----------------------------------------------------

def test_constant_is_excessive_without_potential(two_path):
    rep = cf.is_excessive(two_path, np.ones(2))
    assert rep.excessive and rep.grid_excessive and rep.agree
    assert rep.algebraic_min == pytest.approx(0.0, abs=1e-12)


def test_resolvent_of_nonnegative_is_excessive_for_shifted_form():
    form = cf.random_connected_form(18, seed=4)
    rng = np.random.default_rng(4)
    g = np.zeros(form.n)
    g[form.active] = rng.uniform(0.5, 2.0, form.n_active)
    alpha = 0.8
    h = cf.resolvent_apply(form, g, alpha)
    rep = cf.is_excessive(shifted(form, alpha), h)
    assert rep.excessive and rep.agree
    # the generator residual of the shifted form on h is exactly g
    assert rep.algebraic_min >= 0.4


def test_strict_interior_minimum_is_not_excessive(pinned_path):
    # dip at an interior vertex with zero potential: L h < 0 there
    h = np.array([0.0, 1.0, 0.2, 1.0])
    rep = cf.is_excessive(pinned_path, h)
    assert not rep.excessive and not rep.grid_excessive and rep.agree


def test_excessive_rejects_negative_h(two_path):
    with pytest.raises(ValueError):
        cf.is_excessive(two_path, np.array([1.0, -1.0]))


# --- contraction bounds -----------------------------------------------------

def test_contraction_single_vertex_exact(single_vertex):
    # L = 1: alpha G_alpha f = alpha/(1+alpha) f, both bounds reduce to scalars
    f = np.array([2.0])
    rep = cf.check_resolvent_contraction(single_vertex, f, 1.0)
    assert rep.q_input == pytest.approx(4.0)
    assert rep.q_smoothed == pytest.approx(1.0, rel=1e-12)   # (1/2 * 2)^2
    assert rep.defect_energy == pytest.approx(1.0, rel=1e-12)
    assert rep.energy_ok and rep.defect_ok


def test_contraction_bounds_random_sweep():
    rng = np.random.default_rng(9)
    for seed in range(5):
        form = cf.random_connected_form(25, seed=seed, signed_potential=True)
        for alpha in (0.2, 1.0, 3.0):
            f = active_vector(form, rng)
            rep = cf.check_resolvent_contraction(form, f, alpha)
            assert rep.energy_ok, (rep.q_smoothed, rep.q_input)
            assert rep.defect_ok, (rep.defect_energy, rep.q_input)
