import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import alternating_normalization
from snloc.design import (DisconnectedGraphInputError, MatrixParams,
                          NoSupportError, NotConvergedError, assemble_weights,
                          lower_factor, params_from_dict, params_to_dict,
                          read_edge_list, sinkhorn_knopp,
                          sinkhorn_knopp_decentralized, two_block_params,
                          validate_params)
from snloc.network import SyncNetwork


def random_connected_adjacency(n, rng, edge_prob=0.3):
    """Random graph plus a spanning path to force connectivity."""
    A = (rng.uniform(size=(n, n)) < edge_prob).astype(float)
    A = np.triu(A, 1)
    for i in range(n - 1):
        A[i, i + 1] = 1.0
    A = A + A.T
    np.fill_diagonal(A, 0.0)
    return A


class TestSinkhornKnopp:
    def test_all_ones_two_by_two(self):
        S = sinkhorn_knopp(np.ones((2, 2)))
        np.testing.assert_allclose(S, 0.5 * np.ones((2, 2)), atol=1e-12)

    def test_doubly_stochastic_fixed_point(self):
        A = np.array([[0.5, 0.5, 0.0], [0.25, 0.25, 0.5], [0.25, 0.25, 0.5]])
        np.testing.assert_allclose(sinkhorn_knopp(A), A, atol=1e-9)

    def test_matches_alternating_normalization_oracle(self):
        rng = np.random.default_rng(20)
        M = rng.uniform(0.1, 1.0, size=(20, 20))
        A = 0.5 * (M + M.T)
        S = sinkhorn_knopp(A, tol=1e-12)
        ref = alternating_normalization(A, 20_000)
        np.testing.assert_allclose(S, 0.5 * (ref + ref.T), atol=1e-10)
        assert np.max(np.abs(S.sum(axis=0) - 1.0)) < 1e-10
        assert np.max(np.abs(S.sum(axis=1) - 1.0)) < 1e-10

    def test_zero_row_raises_no_support(self):
        A = np.ones((3, 3))
        A[1] = 0.0
        with pytest.raises(NoSupportError):
            sinkhorn_knopp(A)

    def test_supportless_positive_pattern_raises(self):
        # rows 2 and 3 can only match column 1: no perfect matching
        A = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(NoSupportError):
            sinkhorn_knopp(A)

    def test_sparsity_never_grows(self):
        rng = np.random.default_rng(4)
        A = random_connected_adjacency(12, rng) + np.eye(12)
        S = sinkhorn_knopp(A)
        assert np.all(S[A == 0.0] == 0.0)

    def test_symmetry_defect_within_tol(self):
        rng = np.random.default_rng(6)
        A = random_connected_adjacency(15, rng) + np.eye(15)
        raw = sinkhorn_knopp(A, tol=1e-11, symmetrize=False)
        assert np.max(np.abs(raw - raw.T)) <= 1e-9

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError):
            sinkhorn_knopp(np.array([[1.0, -1.0], [1.0, 1.0]]))


class TestLowerFactor:
    def test_two_block_path_graph(self):
        params = two_block_params(np.array([[0.0, 1.0], [1.0, 0.0]]))
        # lower-left block is 2S = all ones for K2
        np.testing.assert_allclose(params.L[2:, :2], np.ones((2, 2)), atol=1e-12)
        assert np.all(params.L[:2] == 0.0)

    def test_identity_z_gives_zero(self):
        assert np.all(lower_factor(2.0 * np.eye(4)) == 0.0)

    def test_rejects_wrong_diagonal(self):
        with pytest.raises(ValueError):
            lower_factor(np.eye(3))

    @given(hnp.arrays(float, (5, 5),
                      elements=st.floats(-3, 3, allow_nan=False)))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, M):
        L = np.tril(M, k=-1)
        Z = 2.0 * np.eye(5) - L - L.T
        np.testing.assert_allclose(lower_factor(Z), L, atol=1e-13)


class TestTwoBlockParams:
    def test_path_graph_hand_value(self):
        params = two_block_params(np.array([[0.0, 1.0], [1.0, 0.0]]))
        expected = np.array([[2, 0, -1, -1],
                             [0, 2, -1, -1],
                             [-1, -1, 2, 0],
                             [-1, -1, 0, 2]], dtype=float)
        np.testing.assert_allclose(params.Z, expected, atol=1e-10)
        np.testing.assert_allclose(params.W, expected, atol=1e-10)

    def test_complete_graph_uniform(self):
        n = 5
        A = np.ones((n, n)) - np.eye(n)
        params = two_block_params(A)
        np.testing.assert_allclose(params.mixing, np.ones((n, n)) / n,
                                   atol=1e-10)

    def test_adherence_on_random_graphs(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            n = int(rng.integers(4, 25))
            A = random_connected_adjacency(n, rng)
            params = two_block_params(A)
            off = (A == 0) & ~np.eye(n, dtype=bool)
            assert np.all(params.Z[:n, n:][off] == 0.0)
            report = validate_params(params, A)
            assert report.passed, report.to_dict()

    def test_disconnected_rejected(self):
        A = np.zeros((4, 4))
        A[0, 1] = A[1, 0] = 1.0
        A[2, 3] = A[3, 2] = 1.0
        with pytest.raises(DisconnectedGraphInputError):
            two_block_params(A)

    def test_nonzero_diagonal_rejected(self):
        with pytest.raises(ValueError):
            two_block_params(np.eye(3))


class TestValidateParams:
    def test_identity_fails_total_and_nullspace(self):
        n = 3
        Z = 2.0 * np.eye(2 * n)
        params = MatrixParams(Z=Z, W=Z.copy(), L=np.zeros((2 * n, 2 * n)),
                              block_size=n)
        report = validate_params(params, np.ones((n, n)) - np.eye(n))
        assert not report.checks["z_total_zero"].passed
        assert not report.checks["w_ones_null"].passed
        assert not report.checks["w_nullity_one"].passed

    def test_asymmetric_w_fails_symmetry(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        params = two_block_params(A)
        params.W[0, 2] = 0.0  # break one off-diagonal entry asymmetrically
        report = validate_params(params, A)
        assert not report.checks["w_symmetric"].passed

    def test_report_round_trips_to_dict(self, small_instance, small_params):
        from snloc.problem import build_adjacency
        report = validate_params(small_params, build_adjacency(small_instance))
        doc = report.to_dict()
        assert report.passed
        assert all(entry["passed"] for entry in doc.values())


class TestDecentralizedSinkhorn:
    def test_k2_converges_first_round(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        maps = sinkhorn_knopp_decentralized(A + np.eye(2), rounds=1, tol=1e-12)
        S = assemble_weights(maps, 2)
        np.testing.assert_allclose(S, 0.5 * np.ones((2, 2)), atol=1e-12)

    def test_matches_centralized(self):
        rng = np.random.default_rng(13)
        for _ in range(6):
            n = int(rng.integers(3, 15))
            A = random_connected_adjacency(n, rng)
            maps = sinkhorn_knopp_decentralized(A + np.eye(n), rounds=20_000,
                                                tol=1e-11)
            S_dec = assemble_weights(maps, n)
            S_cen = sinkhorn_knopp(A + np.eye(n), tol=1e-11)
            np.testing.assert_allclose(S_dec, S_cen, atol=1e-8)

    def test_message_count_per_round(self):
        rng = np.random.default_rng(14)
        A = random_connected_adjacency(8, rng)
        net = SyncNetwork(A)
        sinkhorn_knopp_decentralized(A + np.eye(8), rounds=5000, tol=1e-10,
                                     network=net)
        directed_edges = int(A.sum())
        rounds = len(net.rounds_per_iteration)
        # one value per directed edge per half-round, two half-rounds a round
        assert net.messages == rounds * 2 * directed_edges
        assert all(r == 2 for r in net.rounds_per_iteration)

    def test_round_budget_raises(self):
        rng = np.random.default_rng(15)
        A = random_connected_adjacency(10, rng)
        with pytest.raises(NotConvergedError):
            sinkhorn_knopp_decentralized(A + np.eye(10), rounds=2, tol=1e-14)

    def test_two_block_decentralized_path(self):
        rng = np.random.default_rng(16)
        A = random_connected_adjacency(9, rng)
        p_dec = two_block_params(A, decentralized=True, tol=1e-11)
        p_cen = two_block_params(A, tol=1e-11)
        np.testing.assert_allclose(p_dec.Z, p_cen.Z, atol=1e-8)
        assert validate_params(p_dec, A).passed


class TestParamsIO:
    def test_round_trip(self, small_instance, small_params, tmp_path):
        doc = params_to_dict(small_params)
        back = params_from_dict(doc)
        np.testing.assert_allclose(back.Z, small_params.Z, atol=1e-15)
        np.testing.assert_allclose(back.L, small_params.L, atol=1e-15)

    def test_triplet_form(self, small_params):
        import snloc.design as design

        doc = params_to_dict(small_params)
        dense = doc.pop("S_dense")
        S = np.asarray(dense)
        rows, cols = np.nonzero(S)
        doc["S_triplets"] = [[int(i), int(j), float(S[i, j])]
                             for i, j in zip(rows, cols)]
        back = params_from_dict(doc)
        np.testing.assert_allclose(back.Z, small_params.Z, atol=1e-15)

    def test_edge_list_reader(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("# comment\n0 1\n1 2\n")
        A = read_edge_list(path)
        expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        np.testing.assert_array_equal(A, expected)
