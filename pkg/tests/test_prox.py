import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import (brute_force_g_prox, exact_g_prox_kkt, free_coords,
                     psd_project_sqrtm, subgradient_certificate)
from snloc.lifted import LiftedPoint, lifted_zeros, weighted_norm
from snloc.problem import ProblemInstance, generate_instance
from snloc.prox import (SQRT2, _lad_admm, _lad_admm_numpy, build_g_prox_data,
                        delta_prox, g_prox, psd_project, reimposed_min_eig,
                        soft_threshold, submatrix)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def symmetric(rng, n, scale=1.0):
    M = scale * rng.standard_normal((n, n))
    return 0.5 * (M + M.T)


class TestSoftThreshold:
    def test_basic_cases(self):
        assert soft_threshold(np.array([3.0]), 1.0)[0] == pytest.approx(2.0)
        assert soft_threshold(np.array([-0.5]), 1.0)[0] == 0.0
        x = np.array([1.5, -2.5, 0.0])
        np.testing.assert_array_equal(soft_threshold(x, 0.0), x)

    @given(hnp.arrays(float, (6,), elements=finite),
           st.floats(0, 5, allow_nan=False))
    @settings(max_examples=100)
    def test_shrinks_and_keeps_sign(self, x, tau):
        y = soft_threshold(x, tau)
        assert np.all(np.abs(y) <= np.abs(x) + 1e-12)
        assert np.all((y == 0) | (np.sign(y) == np.sign(x)))
        np.testing.assert_allclose(np.abs(y), np.maximum(np.abs(x) - tau, 0),
                                   atol=1e-12)


class TestPsdProject:
    def test_diagonal_case(self):
        np.testing.assert_allclose(psd_project(np.diag([3.0, -1.0])),
                                   np.diag([3.0, 0.0]), atol=1e-12)

    def test_off_diagonal_hand_case(self):
        # eigenvalues +-1; keeping +1 gives the rank-one half matrix
        P = psd_project(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(P, 0.5 * np.ones((2, 2)), atol=1e-12)

    def test_psd_passthrough(self):
        rng = np.random.default_rng(0)
        B = rng.standard_normal((5, 5))
        A = B @ B.T
        np.testing.assert_allclose(psd_project(A), A, atol=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        A = symmetric(rng, 6, 3.0)
        P = psd_project(A)
        np.testing.assert_allclose(psd_project(P), P, atol=1e-10)
        assert np.linalg.eigvalsh(P)[0] >= -1e-9

    def test_matches_sqrtm_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            A = symmetric(rng, 7, 2.0)
            np.testing.assert_allclose(psd_project(A), psd_project_sqrtm(A),
                                       atol=1e-10)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_nonexpansive(self, seed):
        rng = np.random.default_rng(seed)
        A = symmetric(rng, 5, 2.0)
        B = symmetric(rng, 5, 2.0)
        lhs = np.linalg.norm(psd_project(A) - psd_project(B))
        assert lhs <= np.linalg.norm(A - B) + 1e-10


def toy_instance(rng, n_nbrs, n_anchors, n=4, d=2):
    """Random instance where sensor 0 has the requested neighborhood sizes."""
    while True:
        inst = generate_instance(n, max(n_anchors, 1), d, radius=3.0,
                                 max_degree=n, noise_factor=0.1,
                                 seed=int(rng.integers(1 << 30)))
        nbrs = inst.sensor_neighbors[0][:n_nbrs]
        anbrs = inst.anchor_neighbors[0][:n_anchors]
        if nbrs.size == n_nbrs and anbrs.size == n_anchors:
            break
    return ProblemInstance(
        d=d, n=n, m=inst.m, anchors=inst.anchors,
        sensor_neighbors=[nbrs] + [inst.sensor_neighbors[i] for i in range(1, n)],
        anchor_neighbors=[anbrs] + [inst.anchor_neighbors[i] for i in range(1, n)],
        dist_ss=[inst.dist_ss[0][:n_nbrs]] + [inst.dist_ss[i] for i in range(1, n)],
        dist_sa=[inst.dist_sa[0][:n_anchors]] + [inst.dist_sa[i] for i in range(1, n)],
        truth=inst.truth)


def random_point(rng, n, d, scale=1.0):
    return LiftedPoint(scale * rng.standard_normal((n, d)),
                       symmetric(rng, n, scale))


class TestGProxData:
    def test_single_neighbor_k_row(self):
        inst = toy_instance(np.random.default_rng(3), 1, 0)
        data = build_g_prox_data(inst, 0, rho=1.0)
        np.testing.assert_allclose(data.K,
                                   [[1.0, 1.0, -2.0, 0.0, 0.0]], atol=1e-14)

    def test_diagonal_weight_pattern(self):
        inst = toy_instance(np.random.default_rng(4), 2, 1)
        data = build_g_prox_data(inst, 0, rho=1.0)
        np.testing.assert_allclose(
            data.D, [1.0, 1.0, SQRT2, 1.0, SQRT2, SQRT2, SQRT2], atol=1e-15)

    def test_empty_neighborhood(self, tiny_instance):
        data = build_g_prox_data(tiny_instance, 1, rho=1.0)
        assert data.K.shape[0] == 0

    def test_cholesky_reconstructs(self):
        inst = toy_instance(np.random.default_rng(5), 2, 2)
        data = build_g_prox_data(inst, 0, rho=2.5)
        M = 2.5 * data.K.T @ data.K + np.diag(data.D ** 2)
        np.testing.assert_allclose(data.chol @ data.chol.T, M, atol=1e-10)
        assert data.factorizations == 1

    def test_index_map_bijection(self):
        inst = toy_instance(np.random.default_rng(6), 2, 1)
        data = build_g_prox_data(inst, 0, rho=1.0)
        assert len(data.index_map) == len(set(data.index_map))
        nbrs = inst.sensor_neighbors[0]
        expected = {("Y", 0, 0)}
        for j in nbrs:
            expected |= {("Y", int(j), int(j)), ("Y", 0, int(j))}
        expected |= {("X", 0, 0), ("X", 0, 1)}
        assert set(data.index_map) == expected

    def test_anchor_rows_carry_minus_two(self):
        inst = toy_instance(np.random.default_rng(7), 0, 2)
        data = build_g_prox_data(inst, 0, rho=1.0)
        np.testing.assert_allclose(data.K[:, 1:], -2.0 * data.M_block,
                                   atol=1e-14)

    def test_rejects_bad_rho(self, tiny_instance):
        with pytest.raises(ValueError):
            build_g_prox_data(tiny_instance, 0, rho=0.0)


class TestGProx:
    def test_empty_is_identity(self, tiny_instance):
        rng = np.random.default_rng(8)
        pk = random_point(rng, 2, 2)
        data = build_g_prox_data(tiny_instance, 1, rho=1.0)
        out = g_prox(data, pk, 1, alpha=2.0, tol=1e-10)
        np.testing.assert_array_equal(out.X, pk.X)
        np.testing.assert_array_equal(out.Y, pk.Y)

    def test_frozen_single_anchor_toy(self):
        # anchor (0.3, -0.2), distance 0.9, pk = (X=(0.5, 0.4), Y11=0.7),
        # alpha = 1.3.  The misfit residual at pk is 0.12 and alpha is large
        # enough to zero it, so the minimizer is the D^-2-metric projection
        # onto that hyperplane: w = (1, -0.3, 0.2) * 0.12 / 1.26.
        inst = ProblemInstance(d=2, n=1, m=1, anchors=[[0.3, -0.2]],
                               sensor_neighbors=[[]], anchor_neighbors=[[0]],
                               dist_ss=[[]], dist_sa=[[0.9]])
        pk = LiftedPoint(np.array([[0.5, 0.4]]), np.array([[0.7]]))
        data = build_g_prox_data(inst, 0, rho=1.0)
        out = g_prox(data, pk, 0, alpha=1.3, tol=1e-12)
        assert out.Y[0, 0] == pytest.approx(0.7 + 0.12 / 1.26, abs=1e-8)
        assert out.X[0, 0] == pytest.approx(0.5 - 0.036 / 1.26, abs=1e-8)
        assert out.X[0, 1] == pytest.approx(0.4 + 0.024 / 1.26, abs=1e-8)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(9)
        for trial in range(4):
            inst = toy_instance(rng, int(rng.integers(0, 3)),
                                int(rng.integers(0, 3)))
            pk = random_point(rng, inst.n, inst.d)
            alpha = float(rng.uniform(0.5, 2.0))
            data = build_g_prox_data(inst, 0, rho=1.0)
            out = g_prox(data, pk, 0, alpha, tol=1e-10)
            oracle_point, _ = brute_force_g_prox(inst, 0, pk, alpha)
            exact_point, _ = exact_g_prox_kkt(inst, 0, pk, alpha)
            # the grid oracle must agree with the exact enumeration, and the
            # implementation with both
            assert weighted_norm(oracle_point - exact_point) < 1e-3
            assert weighted_norm(out - oracle_point) < 1e-3
            assert weighted_norm(out - exact_point) < 1e-5

    def test_subgradient_certificate(self):
        rng = np.random.default_rng(10)
        tol = 1e-8
        for trial in range(5):
            inst = toy_instance(rng, int(rng.integers(1, 3)),
                                int(rng.integers(0, 3)))
            pk = random_point(rng, inst.n, inst.d)
            alpha = float(rng.uniform(0.5, 2.0))
            data = build_g_prox_data(inst, 0, rho=1.0)
            out = g_prox(data, pk, 0, alpha, tol=tol)
            assert subgradient_certificate(inst, 0, pk, out, alpha) <= 10 * tol

    def test_nonexpansive_in_weighted_norm(self):
        rng = np.random.default_rng(11)
        inst = toy_instance(rng, 2, 1)
        data = build_g_prox_data(inst, 0, rho=1.0)
        tol = 1e-10
        for _ in range(5):
            a = random_point(rng, inst.n, inst.d)
            b = random_point(rng, inst.n, inst.d)
            pa = g_prox(data, a, 0, 1.0, tol)
            pb = g_prox(data, b, 0, 1.0, tol)
            assert weighted_norm(pa - pb) <= weighted_norm(a - b) + 10 * tol

    def test_untouched_coordinates(self):
        rng = np.random.default_rng(12)
        inst = toy_instance(rng, 1, 1)
        pk = random_point(rng, inst.n, inst.d)
        data = build_g_prox_data(inst, 0, rho=1.0)
        out = g_prox(data, pk, 0, 1.0, 1e-10)
        j = int(inst.sensor_neighbors[0][0])
        touched_y = {(0, 0), (0, j), (j, 0), (j, j)}
        for a in range(inst.n):
            for b in range(inst.n):
                if (a, b) not in touched_y:
                    assert out.Y[a, b] == pk.Y[a, b]
        for r in range(1, inst.n):
            np.testing.assert_array_equal(out.X[r], pk.X[r])

    def test_warm_start_speeds_second_call(self):
        rng = np.random.default_rng(13)
        inst = toy_instance(rng, 2, 2)
        pk = random_point(rng, inst.n, inst.d)
        data = build_g_prox_data(inst, 0, rho=1.0)
        g_prox(data, pk, 0, 1.0, 1e-10)
        first = data.last_inner_iters
        g_prox(data, pk, 0, 1.0, 1e-10)
        assert data.last_inner_iters <= first
        assert data.last_inner_iters <= 2

    def test_budget_warning_keeps_best(self, caplog):
        rng = np.random.default_rng(14)
        inst = toy_instance(rng, 2, 2)
        pk = random_point(rng, inst.n, inst.d)
        data = build_g_prox_data(inst, 0, rho=1.0)
        with caplog.at_level(logging.WARNING, logger="snloc.prox"):
            out = g_prox(data, pk, 0, 1.0, tol=1e-12, max_inner=3)
        assert data.budget_exhausted == 1
        assert "budget" in caplog.text
        assert np.all(np.isfinite(out.X)) and np.all(np.isfinite(out.Y))

    def test_rejects_bad_arguments(self, tiny_instance):
        data = build_g_prox_data(tiny_instance, 0, rho=1.0)
        pk = lifted_zeros(2, 2)
        with pytest.raises(ValueError):
            g_prox(data, pk, 0, alpha=0.0, tol=1e-8)
        with pytest.raises(ValueError):
            g_prox(data, pk, 1, alpha=1.0, tol=1e-8)

    def test_kernels_agree(self):
        rng = np.random.default_rng(15)
        inst = toy_instance(rng, 2, 1)
        data = build_g_prox_data(inst, 0, rho=1.0)
        pk = random_point(rng, inst.n, inst.d)
        vk = data.gather(pk)
        ck = data.c - data.K @ vk
        args = (data.K, data.rhoKT, data.chol, ck)
        lam_a, y_a = np.zeros_like(data.c), np.zeros_like(data.c)
        w_a, _, _ = _lad_admm(*args, lam_a, y_a, 1.0, 1e-11, 100_000)
        lam_b, y_b = np.zeros_like(data.c), np.zeros_like(data.c)
        w_b, _, _ = _lad_admm_numpy(*args, lam_b, y_b, 1.0, 1e-11, 100_000)
        np.testing.assert_allclose(w_a, w_b, atol=1e-9)


class TestDeltaProx:
    def test_psd_input_unchanged(self):
        rng = np.random.default_rng(16)
        inst = toy_instance(rng, 2, 1)
        X = rng.standard_normal((inst.n, inst.d))
        pk = LiftedPoint(X, X @ X.T + 0.5 * np.eye(inst.n))
        assert np.linalg.eigvalsh(submatrix(inst, 0, pk))[0] >= 0
        out = delta_prox(inst, 0, pk)
        np.testing.assert_array_equal(out.X, pk.X)
        np.testing.assert_array_equal(out.Y, pk.Y)

    def test_untouched_outside_support(self):
        rng = np.random.default_rng(17)
        inst = toy_instance(rng, 1, 0, n=5)
        pk = random_point(rng, inst.n, inst.d, scale=2.0)
        out = delta_prox(inst, 0, pk)
        members = {0} | {int(j) for j in inst.sensor_neighbors[0]}
        for a in range(inst.n):
            if a not in members:
                np.testing.assert_array_equal(out.X[a], pk.X[a])
                for b in range(inst.n):
                    if b not in members:
                        assert out.Y[a, b] == pk.Y[a, b]

    def test_reimposed_block_defect_is_bounded(self):
        # The projected submatrix itself is PSD; putting the identity block
        # back can reintroduce negative curvature no worse than
        # max(0, lambda_max - 1) of the projected matrix.  The defect is
        # measured (and logged by the metrics), not corrected.
        rng = np.random.default_rng(18)
        inst = toy_instance(rng, 2, 1)
        for _ in range(5):
            pk = random_point(rng, inst.n, inst.d, scale=2.0)
            M = submatrix(inst, 0, pk)
            out = delta_prox(inst, 0, pk)
            projected = psd_project(M)
            assert np.linalg.eigvalsh(projected)[0] >= -1e-9
            after = reimposed_min_eig(inst, 0, out)
            bound = max(0.0, float(np.linalg.eigvalsh(projected)[-1]) - 1.0)
            assert after >= -bound - 1e-9

    def test_near_feasible_defect_is_small(self):
        rng = np.random.default_rng(19)
        inst = toy_instance(rng, 2, 1)
        X = 0.3 * rng.standard_normal((inst.n, inst.d))
        pk = LiftedPoint(X, X @ X.T - 0.05 * np.eye(inst.n))
        before = reimposed_min_eig(inst, 0, pk)
        assert -0.06 < before < 0  # violates the cone by construction
        out = delta_prox(inst, 0, pk)
        after = reimposed_min_eig(inst, 0, out)
        assert after >= before
        assert after >= -0.02

    def test_single_sensor_projection_matches_psd_project(self):
        # no neighbors: the submatrix is [[I, x^T], [x, Y11]] and the prox
        # writes back the clipped eigensystem exactly
        inst = ProblemInstance(d=2, n=1, m=1, anchors=[[0.0, 0.0]],
                               sensor_neighbors=[[]], anchor_neighbors=[[0]],
                               dist_ss=[[]], dist_sa=[[1.0]])
        pk = LiftedPoint(np.array([[2.0, 0.0]]), np.array([[-1.0]]))
        M = submatrix(inst, 0, pk)
        P = psd_project(M)
        out = delta_prox(inst, 0, pk)
        np.testing.assert_allclose(out.X[0], P[2, :2], atol=1e-12)
        assert out.Y[0, 0] == pytest.approx(P[2, 2], abs=1e-12)
