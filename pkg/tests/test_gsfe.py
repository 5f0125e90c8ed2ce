import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import moirelax as mx
from moirelax.gsfe import stacking_energy_and_grad


def reference_stacking_energy(v, w, m):
    """Independent plain-cosine evaluation used as the oracle."""
    return (m.c0
            + m.c1 * (math.cos(v) + math.cos(w) + math.cos(v + w))
            + m.c2 * (math.cos(v + 2 * w) + math.cos(v - w) + math.cos(2 * v + w))
            + m.c3 * (math.cos(2 * v) + math.cos(2 * w) + math.cos(2 * v + 2 * w)))


def test_aligned_stacking_value(model):
    # c0 + 3(c1 + c2 + c3), the aligned-stacking maximum
    assert mx.stacking_energy(0.0, 0.0, model) == pytest.approx(17.861, abs=1e-12)


def test_optimal_stacking_value(model):
    val = mx.stacking_energy(2 * np.pi / 3, 2 * np.pi / 3, model)
    assert abs(val) < 1e-3
    assert val == pytest.approx(
        reference_stacking_energy(2 * np.pi / 3, 2 * np.pi / 3, model), abs=1e-12)


def test_global_minimum_location_and_band(model):
    # brute-force scan plus local refinement as the independent oracle
    n = 601
    g = np.linspace(0, 2 * np.pi, n, endpoint=False)
    vv, ww = np.meshgrid(g, g, indexing="ij")
    vals = mx.stacking_energy(vv, ww, model)
    assert -1e-3 < vals.min() < 1e-3
    idx = np.unravel_index(np.argmin(vals), vals.shape)
    loc = np.array([vv[idx], ww[idx]])
    targets = [np.array([2 * np.pi / 3] * 2), np.array([4 * np.pi / 3] * 2)]
    assert min(np.linalg.norm(loc - t) for t in targets) < 2 * 2 * np.pi / n


@settings(max_examples=80, deadline=None)
@given(v=st.floats(-10, 10), w=st.floats(-10, 10))
def test_symmetries(v, w):
    m = mx.GsfeModel.graphene()
    f = mx.stacking_energy(v, w, m)
    assert mx.stacking_energy(w, v, m) == pytest.approx(f, abs=1e-12)
    assert mx.stacking_energy(-v, -w, m) == pytest.approx(f, abs=1e-12)
    # order-3 rotation of the triangular lattice
    assert mx.stacking_energy(w, -v - w, m) == pytest.approx(f, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(v=st.floats(-6, 6), w=st.floats(-6, 6))
def test_periodicity(v, w):
    m = mx.GsfeModel.graphene()
    f = mx.stacking_energy(v, w, m)
    assert mx.stacking_energy(v + 2 * np.pi, w, m) == pytest.approx(f, abs=1e-11)
    assert mx.stacking_energy(v, w + 2 * np.pi, m) == pytest.approx(f, abs=1e-11)


def test_matches_reference_form(model):
    rng = np.random.default_rng(3)
    for v, w in rng.uniform(-7, 7, size=(50, 2)):
        assert mx.stacking_energy(v, w, model) == pytest.approx(
            reference_stacking_energy(v, w, model), abs=1e-12)


def test_grad_matches_finite_differences(model):
    rng = np.random.default_rng(5)
    h = 1e-6
    for v, w in rng.uniform(-7, 7, size=(100, 2)):
        dv, dw = mx.stacking_energy_grad(v, w, model)
        fdv = (reference_stacking_energy(v + h, w, model)
               - reference_stacking_energy(v - h, w, model)) / (2 * h)
        fdw = (reference_stacking_energy(v, w + h, model)
               - reference_stacking_energy(v, w - h, model)) / (2 * h)
        assert dv == pytest.approx(fdv, abs=2e-8)
        assert dw == pytest.approx(fdw, abs=2e-8)


def test_combined_energy_grad_consistent(model):
    rng = np.random.default_rng(6)
    v = rng.uniform(-7, 7, 64)
    w = rng.uniform(-7, 7, 64)
    f, dv, dw = stacking_energy_and_grad(v, w, model)
    assert np.allclose(f, mx.stacking_energy(v, w, model), atol=1e-14)
    dv2, dw2 = mx.stacking_energy_grad(v, w, model)
    assert np.allclose(dv, dv2, atol=1e-14)
    assert np.allclose(dw, dw2, atol=1e-14)


class TestLayerGsfe:
    def test_aligned_value(self, basis, model):
        a1, a2 = mx.layer_pair(mx.StrainFamily.twist(0.02, basis))
        assert mx.gsfe_layer(np.zeros(2), 1, a1, a2, model) == \
            pytest.approx(17.861, abs=1e-12)

    def test_grad_zero_at_origin(self, basis, model):
        a1, a2 = mx.layer_pair(mx.StrainFamily.twist(0.02, basis))
        g = mx.gsfe_layer_grad(np.zeros(2), 1, a1, a2, model)
        assert np.allclose(g, 0.0, atol=1e-14)

    @pytest.mark.parametrize("which", [1, 2])
    def test_grad_matches_finite_differences(self, basis, model, which):
        a1, a2 = mx.layer_pair(mx.StrainFamily.twist(0.02, basis))
        rng = np.random.default_rng(11)
        h = 1e-6
        for gamma in rng.uniform(-3, 3, size=(100, 2)):
            g = mx.gsfe_layer_grad(gamma, which, a1, a2, model)
            fd = np.empty(2)
            for c in range(2):
                e = np.zeros(2)
                e[c] = h
                fd[c] = (mx.gsfe_layer(gamma + e, which, a1, a2, model)
                         - mx.gsfe_layer(gamma - e, which, a1, a2, model)) / (2 * h)
            denom = max(np.linalg.norm(fd), 1.0)
            assert np.linalg.norm(g - fd) / denom < 1e-6

    def test_singular_layer_rejected(self, model):
        with pytest.raises(ValueError):
            mx.gsfe_layer(np.zeros(2), 1, np.eye(2), np.zeros((2, 2)), model)


class TestWallPotential:
    def test_wells_and_positivity(self, basis, model):
        pot = mx.wall_potential(1, 0.0, basis, model)
        assert pot.u(1.0) == 0.0
        assert pot.u(-1.0) == pytest.approx(0.0, abs=1e-12)
        assert pot.u(0.0) > 0.0
        grid = np.linspace(-0.999, 0.999, 501)
        assert np.all(pot.u(grid) > 0.0)

    def test_even(self, basis, model):
        pot = mx.wall_potential(2, 0.3, basis, model)
        grid = np.linspace(0.0, 1.0, 257)
        assert np.max(np.abs(pot.u(grid) - pot.u(-grid))) < 1e-10

    def test_normalized_curvature(self, basis, model):
        pot = mx.wall_potential(1, 0.0, basis, model)
        h = 1e-4
        d2 = (pot.u(1 + h) - 2 * pot.u(1.0) + pot.u(1 - h)) / h ** 2
        assert d2 == pytest.approx(1.0, rel=1e-5)

    def test_curvature_positive_and_richardson_oracle(self, basis, model, walls):
        pot = walls[1].potential
        assert pot.k_min > 0

        # independent second-difference oracle on the raw 1D profile
        a = np.sqrt(3.0) * 1.42
        b_sp, db, _ = mx.burgers_triplet(1, a)
        inv = np.linalg.inv(basis)

        def raw(u):
            f = inv @ (b_sp + u * db)
            return mx.stacking_energy(2 * np.pi * f[0], 2 * np.pi * f[1], model)

        h = 1e-3
        oracle = (raw(1 + h) - 2 * raw(1.0) + raw(1 - h)) / h ** 2
        assert pot.k_min == pytest.approx(oracle, rel=1e-5)

    def test_rotation_independent(self, basis, model):
        grid = np.linspace(-1.0, 1.0, 401)
        ref = mx.wall_potential(1, 0.0, basis, model).u(grid)
        for phi in (np.deg2rad(10.0), np.deg2rad(33.0)):
            vals = mx.wall_potential(1, phi, basis, model).u(grid)
            assert np.max(np.abs(vals - ref)) < 1e-10

    def test_derivative_consistent(self, basis, model):
        pot = mx.wall_potential(3, 0.1, basis, model)
        grid = np.linspace(-0.9, 0.9, 37)
        h = 1e-6
        fd = (pot.u(grid + h) - pot.u(grid - h)) / (2 * h)
        assert np.max(np.abs(pot.du(grid) - fd)) < 1e-7

    def test_non_double_well_rejected(self, basis):
        # a coefficient set whose wells do not sit at the path endpoints
        bad = mx.GsfeModel(0.0, -4.0, 0.0, 0.0)
        with pytest.raises(mx.ModelInconsistencyError):
            mx.wall_potential(1, 0.0, basis, bad)

    def test_double_well_segment_bound(self, basis, model):
        pot = mx.wall_potential(1, 0.0, basis, model)
        # the next stacking maximum along the path sits at three half-steps
        assert pot.c == pytest.approx(3.0, abs=0.02)


def test_moduli_validation():
    with pytest.raises(ValueError):
        mx.ElasticModuli(0.0, -1.0)
    with pytest.raises(ValueError):
        mx.ElasticModuli(-10.0, 5.0)
    m = mx.ElasticModuli.graphene()
    assert m.lam == 37950.0 and m.mu == 47352.0
