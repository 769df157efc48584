import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fconv.bases import BasisSet, radial_mask
from fconv.grid import GridSpec, RotationGroup, make_grid
from fconv.parametrize import (DegenerateBasisError, MorletParams, assemble_D, bicubic_resize,
                               fconv_basis, fit_least_squares, fit_simultaneous,
                               init_coefficients, morlet, morlet_filter, morlet_trial,
                               normalize_basis, random_filter_trial, random_resized_filter,
                               ridge_solve, rmse, support, synthesize_filters,
                               synthesize_rotated, trial_rng)


def bset(kind="proposed", p=5, h=1.0):
    return BasisSet(kind, GridSpec(p, h))


# -- D and its normalization ------------------------------------------------------

def test_D_shape():
    assert assemble_D(bset(p=5), RotationGroup(8)).shape == (200, 50)


def test_D_single_element_is_unrotated_sampling():
    b = bset("classic", 4)
    D = assemble_D(b, RotationGroup(1))
    assert D.shape == (16, 32)
    assert np.array_equal(D, b.sample_rotated().reshape(32, 16).T)


def test_D_identity_block():
    b = bset(p=5)
    D = assemble_D(b, RotationGroup(6))
    plain = b.sample_rotated()
    for n in (0, 12, 49):
        assert np.array_equal(D[:25, n], plain[n].ravel())


def test_D_blocks_are_rotations():
    b = bset(p=5)
    D = assemble_D(b, RotationGroup(8))
    for k in range(8):
        block = D[25 * k:25 * (k + 1)].T.reshape(50, 5, 5)
        assert np.allclose(block, b.sample_rotated(2 * np.pi * k / 8), atol=1e-15)


@pytest.mark.parametrize("p, t", [(5, 8), (11, 4), (4, 3), (3, 24)])
def test_normalized_basis_invariants(p, t):
    nb = fconv_basis(p, t)
    U, D = nb.U, nb.D
    assert np.allclose(U.T @ U, np.eye(nb.rank), atol=1e-10)
    resid = np.linalg.norm(D - U @ (U.T @ D)) / np.linalg.norm(D)
    assert resid <= 1e-8
    assert nb.rank <= min(t * p * p, 2 * p * p)
    assert np.all(nb.singular_values > nb.rank_tol * nb.singular_values[0])


@pytest.mark.parametrize("p", [1, 3, 5, 7])
def test_single_rotation_rank_bound(p):
    assert fconv_basis(p, 1).rank <= p * p


def test_zero_D_is_degenerate():
    with pytest.raises(DegenerateBasisError):
        normalize_basis(np.zeros((8, 4)), t=2, p=2)


def test_nonfinite_D_rejected():
    D = np.ones((4, 2))
    D[0, 0] = np.nan
    with pytest.raises(ValueError):
        normalize_basis(D, t=1, p=2)


# -- synthesis --------------------------------------------------------------------

def test_synthesize_zero_and_unit():
    nb = fconv_basis(5, 4)
    assert np.array_equal(synthesize_filters(nb, np.zeros(nb.rank)), np.zeros((4, 5, 5)))
    e0 = np.zeros(nb.rank)
    e0[0] = 1
    f = synthesize_filters(nb, e0)
    assert np.array_equal(f.ravel(), nb.U[:, 0])
    assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-12)


def test_energy_identity_many():
    nb = fconv_basis(5, 8)
    w = np.random.default_rng(3).normal(size=(1000, nb.rank))
    f = synthesize_filters(nb, w)
    assert f.shape == (1000, 8, 5, 5)
    err = np.abs(np.linalg.norm(f.reshape(1000, -1), axis=1) - np.linalg.norm(w, axis=1))
    assert err.max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(3, 4), (5, 8), (4, 6)]), st.integers(0, 2**32 - 1))
def test_energy_identity_property(pt, seed):
    nb = fconv_basis(*pt)
    w = np.random.default_rng(seed).normal(size=nb.rank) * 10.0
    assert abs(np.linalg.norm(synthesize_filters(nb, w)) - np.linalg.norm(w)) <= 1e-10 * max(
        1.0, np.linalg.norm(w))


def test_synthesize_length_mismatch():
    nb = fconv_basis(5, 4)
    with pytest.raises(ValueError):
        synthesize_filters(nb, np.zeros(nb.rank + 1))


def test_synthesized_filters_rotate_along_the_group():
    # slice k is slice 0 rotated by 2 pi k / t: for quarter turns that is a permutation
    nb = fconv_basis(5, 4)
    f = synthesize_filters(nb, np.random.default_rng(0).normal(size=nb.rank))
    for k in range(4):
        assert np.allclose(f[k], np.rot90(f[0], -k), atol=1e-12)


# -- initialization -----------------------------------------------------------------

def test_init_deterministic():
    a = init_coefficients(7, 25, 40)
    b = init_coefficients(7, 25, 40)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, init_coefficients(8, 25, 40))


def test_init_mean_within_three_standard_errors():
    w = init_coefficients(0, 50, 10_000)
    sd = np.sqrt(2 / 50)
    assert abs(w.mean()) <= 3 * sd / np.sqrt(w.size)


def test_init_variance_scaling():
    v1 = init_coefficients(1, 40, 10_000).var()
    v2 = init_coefficients(2, 80, 10_000).var()
    assert 0.4 <= v2 / v1 <= 0.6


def test_init_energy_matches_dense_he():
    # expected filter energy equals n_entries * 2 / fan_in
    nb = fconv_basis(5, 8)
    n_entries, fan_in = 8 * 25, 3 * 25
    w = init_coefficients(0, fan_in, nb.rank, n_entries=n_entries, shape=(4000,))
    energy = np.mean(np.sum(synthesize_filters(nb, w) ** 2, axis=(1, 2, 3)))
    assert energy == pytest.approx(n_entries * 2 / fan_in, rel=0.05)


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        init_coefficients(0, 0, 5)


# -- ridge least squares --------------------------------------------------------------

def test_ridge_matches_normal_equations():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 12))
    y = rng.normal(size=30)
    lam = 1e-3
    w, degenerate = ridge_solve(A, y, lam)
    expected = np.linalg.solve(A.T @ A + lam * np.eye(12), A.T @ y)
    assert np.allclose(w, expected, atol=1e-12)
    assert not degenerate


def test_ridge_lambda_zero_falls_back_to_pinv():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(10, 4))
    A = np.hstack([A, A[:, :1]])  # rank deficient
    y = rng.normal(size=10)
    w, degenerate = ridge_solve(A, y, 0.0)
    assert degenerate
    assert np.allclose(w, np.linalg.pinv(A) @ y, atol=1e-10)


def test_ridge_rejects_negative_lambda():
    with pytest.raises(ValueError):
        ridge_solve(np.eye(2), np.ones(2), -1.0)


def test_fit_redundant_basis_with_lambda_zero_is_flagged():
    b = bset(p=5)
    fit = fit_least_squares(b.sample_rotated()[3], b, lam=0.0)
    assert fit.degenerate


@pytest.mark.parametrize("kind", ["classic", "proposed"])
def test_fit_target_in_span(kind):
    b = bset(kind, 7, 0.5)
    samples = b.sample_rotated()
    for n in (0, 10, 60, 97):
        if np.abs(samples[n]).max() == 0:
            continue
        fit = fit_least_squares(samples[n], b)
        assert rmse(fit.fitted, samples[n]) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_span_combination(seed):
    b = bset("proposed", 5, 0.4)
    w = np.random.default_rng(seed).normal(size=len(b))
    target = (b.sample_rotated().reshape(len(b), -1).T @ w).reshape(5, 5)
    assert rmse(fit_least_squares(target, b).fitted, target) <= 1e-10


def test_fit_masked_random_filter_p11():
    b = bset("proposed", 11, 0.2)
    omega = radial_mask(make_grid(11, 0.2), b.mask)
    target = omega * random_resized_filter(0, 11)
    fit = fit_least_squares(target, b)
    assert rmse(fit.fitted, target, omega > 0) <= 1e-8


def test_fit_morlet_unrotated():
    grid = GridSpec(11, 0.2)
    b = BasisSet("proposed", grid)
    omega = radial_mask(grid.coords, b.mask)
    target = omega * morlet_filter(MorletParams((2, 1.5), (0.1, 0.1)), grid)
    assert rmse(fit_least_squares(target, b).fitted, target, omega > 0) <= 1e-8


def test_fit_wrong_shape():
    with pytest.raises(ValueError):
        fit_least_squares(np.zeros((4, 4)), bset(p=5))


def test_fit_simultaneous_shares_coefficients():
    b = bset("proposed", 5, 0.5)
    targets = [np.random.default_rng(i).normal(size=(5, 5)) for i in range(2)]
    fit = fit_simultaneous(targets, [0.0, np.pi / 4], b)
    assert fit.fitted.shape == (2, 5, 5)
    assert np.allclose(fit.fitted[1], synthesize_rotated(b, fit.coefficients, np.pi / 4))


# -- RMSE -----------------------------------------------------------------------------

def test_rmse_examples():
    t = np.random.default_rng(0).normal(size=(5, 5))
    assert rmse(t, t) == 0.0
    assert rmse(np.zeros_like(t), t) == pytest.approx(1.0)
    assert rmse(2 * t, t) == pytest.approx(1.0)
    assert rmse(t, np.zeros_like(t)) == float("inf")


def test_rmse_support_restriction():
    t = np.ones((3, 3))
    f = t.copy()
    f[0, 0] = 100.0
    sup = np.ones((3, 3), bool)
    sup[0, 0] = False
    assert rmse(f, t, sup) == 0.0


def test_rmse_shape_mismatch():
    with pytest.raises(ValueError):
        rmse(np.zeros(3), np.zeros(4))


def test_support_matches_mask():
    grid = GridSpec(11, 1.0)
    sup = support(grid)
    assert sup[5, 5] and sup[0, 5] and not sup[0, 0]
    assert sup.sum() == np.sum(np.linalg.norm(grid.coords, axis=-1) < grid.cutoff)


# -- targets ----------------------------------------------------------------------------

def test_morlet_peak():
    params = MorletParams((2.0, 1.5), (0.3, -0.2))
    assert morlet(-np.array(params.b), params) == pytest.approx(1.0, abs=1e-15)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2),
       st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-1, 1), st.floats(-1, 1))
def test_morlet_bounded(x, a1, a2, b1, b2):
    assert abs(morlet(np.array(x), MorletParams((a1, a2), (b1, b2)))) <= 1.0


def test_morlet_rejects_nonpositive_zoom():
    with pytest.raises(ValueError):
        MorletParams((0.0, 1.0), (0.0, 0.0))


def test_morlet_filter_rotation_quarter_turn():
    grid = GridSpec(11, 0.2)
    params = MorletParams()
    assert np.allclose(morlet_filter(params, grid, np.pi / 2),
                       np.rot90(morlet_filter(params, grid), -1), atol=1e-14)


@pytest.mark.parametrize("p", [5, 11])
def test_random_filter_shape(p):
    assert random_resized_filter(0, p).shape == (p, p)


def test_random_filter_identity_resize():
    src = np.random.default_rng(5).standard_normal((8, 8))
    assert np.allclose(random_resized_filter(5, 8), src, atol=1e-12)


def test_random_filter_source_statistics():
    patches = np.stack([random_resized_filter(s, 8) for s in range(500)])
    assert abs(patches.mean()) < 0.02
    assert patches.std() == pytest.approx(1.0, abs=0.03)


@pytest.mark.parametrize("n_in, n_out", [(8, 5), (8, 11), (8, 16), (10, 7)])
def test_bicubic_reproduces_quadratics_in_interior(n_in, n_out):
    # Catmull-Rom interpolation is exact for polynomials of degree <= 2 away from the edges
    u = np.arange(n_in, dtype=float)
    f = lambda s: 0.3 * s**2 - 1.2 * s + 0.7
    img = np.outer(f(u), np.ones(n_in))
    out = bicubic_resize(img, (n_out, n_in))
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    interior = (np.floor(src) >= 1) & (np.floor(src) + 2 <= n_in - 1)
    assert interior.any()
    assert np.allclose(out[interior, 0], f(src[interior]), atol=1e-12)


def test_bicubic_constant_preserved():
    assert np.allclose(bicubic_resize(np.full((8, 8), 3.0), (11, 5)), 3.0, atol=1e-14)


# -- fitting trials ------------------------------------------------------------------------

def test_trial_streams_independent_of_order():
    a = trial_rng(3, 7).normal(size=4)
    trial_rng(3, 0).normal(size=100)
    assert np.array_equal(a, trial_rng(3, 7).normal(size=4))


def test_morlet_trial_cases():
    res = morlet_trial(bset("proposed", 11, 0.2), trial_rng(0, 0))
    assert set(res) == {"original", "rot45", "simultaneous"}
    assert res["original"] <= 1e-8
    assert 0 < res["rot45"] < 0.2


def test_random_filter_trial_exact():
    for i in range(5):
        assert random_filter_trial(bset("proposed", 5, 1.0), trial_rng(0, i))["original"] <= 1e-8
