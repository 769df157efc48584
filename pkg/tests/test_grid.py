import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fconv.grid import (GridSpec, RotationGroup, group_elements, make_grid, quarter_turns,
                        rotation_matrix)


def test_grid_p3_axis_values():
    g = make_grid(3, 1.0)
    assert np.array_equal(np.unique(g[..., 0]), [-1.0, 0.0, 1.0])
    assert np.array_equal(np.unique(g[..., 1]), [-1.0, 0.0, 1.0])


def test_grid_single_point():
    assert np.array_equal(make_grid(1, 0.5), [[[0.0, 0.0]]])


def test_grid_corner_p11():
    g = make_grid(11, 1 / 5)
    assert np.allclose(g[0, 0], [-1.0, -1.0], atol=1e-15)
    assert np.allclose(g[-1, -1], [1.0, 1.0], atol=1e-15)


def test_first_coordinate_follows_row():
    g = make_grid(4, 1.0)
    assert np.all(np.diff(g[..., 0], axis=0) == 1.0)
    assert np.all(np.diff(g[..., 0], axis=1) == 0.0)


@pytest.mark.parametrize("p, h", [(0, 1.0), (-2, 1.0), (3, 0.0), (3, -1.0), (2.5, 1.0)])
def test_grid_rejects_bad_sizes(p, h):
    with pytest.raises(ValueError):
        make_grid(p, h)
    with pytest.raises(ValueError):
        GridSpec(p, h)


@given(st.integers(1, 40), st.floats(1e-3, 10.0))
def test_grid_is_centered(p, h):
    assert np.allclose(make_grid(p, h).sum(axis=(0, 1)), 0.0, atol=1e-9 * p * p * h)


def test_gridspec_cutoff():
    assert GridSpec(11, 0.2).cutoff == pytest.approx(1.2)


def test_rotation_matrix_examples():
    assert np.array_equal(rotation_matrix(0.0), np.eye(2))
    assert np.allclose(rotation_matrix(np.pi / 2), [[0, 1], [-1, 0]], atol=1e-16)
    assert np.allclose(np.abs(rotation_matrix(np.pi / 4)), np.sqrt(2) / 2, atol=1e-16)


@given(st.floats(-100, 100))
def test_rotation_matrix_orthogonal(theta):
    m = rotation_matrix(theta)
    assert np.allclose(m.T @ m, np.eye(2), atol=1e-12)


def test_group_examples():
    g4 = group_elements(4)
    assert g4.compose(1, 2) == 3
    assert g4.inverse(1) == 3
    assert np.allclose(group_elements(8).matrix(2), rotation_matrix(np.pi / 2), atol=1e-15)
    g1 = group_elements(1)
    assert len(g1) == 1 and np.array_equal(g1.matrix(0), np.eye(2))


def test_group_rejects_zero_order():
    with pytest.raises(ValueError):
        group_elements(0)


def test_identity_element():
    g = group_elements(6)
    assert g.identity == 0
    assert np.array_equal(g.matrix(0), np.eye(2))


@pytest.mark.parametrize("t", range(1, 17))
def test_group_axioms_exhaustive(t):
    g = RotationGroup(t)
    idx = range(t)
    for a, b, c in itertools.product(idx, repeat=3):
        assert g.compose(g.compose(a, b), c) == g.compose(a, g.compose(b, c))
    for a, b in itertools.product(idx, repeat=2):
        assert g.inverse(g.compose(a, b)) == g.compose(g.inverse(b), g.inverse(a))
        # integer composition agrees with matrix multiplication
        assert np.allclose(g.matrix(a) @ g.matrix(b), g.matrix(g.compose(a, b)), atol=1e-12)


@settings(max_examples=50)
@given(st.integers(1, 24), st.integers(0, 23),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2))
def test_group_matrices_preserve_norm(t, k, v):
    v = np.array(v)
    m = group_elements(t).matrix(k % t)
    assert abs(np.linalg.norm(m @ v) - np.linalg.norm(v)) <= 1e-12 * max(1.0, np.linalg.norm(v))


@pytest.mark.parametrize("p", [1, 3, 5, 7, 11])
def test_quarter_turn_permutes_odd_grid(p):
    pts = make_grid(p, 0.3).reshape(-1, 2)
    moved = pts @ rotation_matrix(np.pi / 2)  # U^{-1} x as row vectors
    # every moved point coincides with exactly one grid point
    dist = np.linalg.norm(moved[:, None] - pts[None], axis=-1)
    assert np.all(np.sum(dist < 1e-12, axis=1) == 1)
    assert sorted(np.argmin(dist, axis=1)) == list(range(p * p))


def test_quarter_turns_detection():
    assert quarter_turns(0.0) == 0
    assert quarter_turns(np.pi / 2) == 1
    assert quarter_turns(-np.pi / 2) == 3
    assert quarter_turns(np.pi / 4) is None
    assert group_elements(8).is_quarter_turn(2)
    assert not group_elements(8).is_quarter_turn(1)
