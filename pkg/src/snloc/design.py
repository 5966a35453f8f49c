"""Matrix parameters for the splitting algorithm.

The consensus matrices Z = W are built from a doubly stochastic balancing of
the communication graph (Sinkhorn-Knopp on A + I), arranged in the 2-block
form 2*[[I, -S], [-S, I]] whose zero pattern never leaves the graph.  The
balancing can run centrally or as local normalize-and-exchange rounds on the
simulated network.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import SyncNetwork
from .problem import graph_is_connected

log = logging.getLogger(__name__)


class NoSupportError(RuntimeError):
    """The matrix admits no doubly stochastic scaling (no support)."""


class NotConvergedError(RuntimeError):
    """Iteration budget exhausted before reaching tolerance."""


class DisconnectedGraphInputError(ValueError):
    """The adjacency passed to the 2-block construction is disconnected."""


@dataclass
class MatrixParams:
    """Z, W and the strictly lower-triangular L with Z = 2I - L - L^T.

    All three are 2n x 2n; `block_size` is n.  For the 2-block design the
    diagonal blocks of Z are 2I and the off-diagonal blocks are -2S with S
    doubly stochastic.
    """

    Z: np.ndarray
    W: np.ndarray
    L: np.ndarray
    block_size: int

    @property
    def mixing(self) -> np.ndarray:
        """The doubly stochastic block S = -Z[n:, :n] / 2."""
        b = self.block_size
        return -0.5 * self.Z[b:, :b]


@dataclass
class CheckResult:
    passed: bool
    residual: float
    threshold: float


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {name: {"passed": c.passed, "residual": c.residual,
                       "threshold": c.threshold}
                for name, c in self.checks.items()}


def sinkhorn_knopp(A: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000,
                   symmetrize: bool = True) -> np.ndarray:
    """Scale A to a doubly stochastic matrix by alternating row and column
    normalization.

    Raises NoSupportError when the scalings diverge (a scaling factor
    exceeding 1/eps with eps = 1e-13, a zero row/column, or a stalled
    deviation at the iteration budget): this is the no-support certificate.
    A symmetric input yields a symmetric output; the result is explicitly
    symmetrized and the pre-symmetrization defect is logged.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    if np.any(A < 0):
        raise ValueError("nonnegative matrix required")
    if np.any(A.sum(axis=0) == 0) or np.any(A.sum(axis=1) == 0):
        raise NoSupportError("zero row or column")
    blowup = 1e13
    n = A.shape[0]
    r = np.ones(n)
    c = np.ones(n)
    deviation = np.inf
    stall_window, last_check = 200, np.inf
    for it in range(max_iter):
        r = 1.0 / (A @ c)
        c = 1.0 / (A.T @ r)
        if np.max(r) > blowup or np.max(c) > blowup:
            raise NoSupportError("scaling factors diverged")
        row_sums = r * (A @ c)
        deviation = float(np.max(np.abs(row_sums - 1.0)))
        if deviation <= tol:
            break
        if (it + 1) % stall_window == 0:
            if deviation >= last_check:
                raise NoSupportError("deviation stalled; matrix lacks support")
            last_check = deviation
    else:
        raise NotConvergedError(
            f"tolerance {tol} not reached in {max_iter} iterations")
    B = (r[:, None] * A) * c[None, :]
    if symmetrize and np.array_equal(A, A.T):
        defect = float(np.max(np.abs(B - B.T)))
        log.debug("sinkhorn symmetry defect %.3e", defect)
        B = 0.5 * (B + B.T)
    return B


def lower_factor(Z: np.ndarray) -> np.ndarray:
    """Strictly lower-triangular L with 2I - L - L^T = Z.  Requires
    diag(Z) = 2."""
    Z = np.asarray(Z, dtype=float)
    if np.max(np.abs(np.diag(Z) - 2.0)) > 1e-8:
        raise ValueError("diag(Z) must equal 2")
    return -np.tril(Z, k=-1)


def two_block_params(A: np.ndarray, tol: float = 1e-10,
                     decentralized: bool = False, rounds: int = 10_000,
                     network: SyncNetwork | None = None) -> MatrixParams:
    """Build the 2-block matrices Z = W = 2*[[I, -S], [-S, I]] from the
    balanced S = SK(A + I) of a connected graph."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if np.any(np.diag(A) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    if not graph_is_connected(A):
        raise DisconnectedGraphInputError("graph must be connected")
    if decentralized:
        maps = sinkhorn_knopp_decentralized(A + np.eye(n), rounds=rounds,
                                            tol=tol, network=network)
        S = assemble_weights(maps, n)
        S = 0.5 * (S + S.T)
    else:
        S = sinkhorn_knopp(A + np.eye(n), tol=tol)
    I = np.eye(n)
    Z = 2.0 * np.block([[I, -S], [-S, I]])
    W = Z.copy()
    return MatrixParams(Z=Z, W=W, L=lower_factor(Z), block_size=n)


def sinkhorn_knopp_decentralized(A_loops: np.ndarray, rounds: int = 10_000,
                                 tol: float = 1e-10,
                                 network: SyncNetwork | None = None) -> list:
    """Balance A (self-loops included) with per-node weight scaling.

    Each node starts with weight 1 on every incident edge and its self-loop,
    scales its weights to unit sum, transmits them to the owning neighbor,
    scales the received column values to unit sum, and transmits back.  Two
    value exchanges per directed edge per round.  Returns one {neighbor:
    weight} map per node; NotConvergedError when the round budget runs out.
    """
    A_loops = np.asarray(A_loops, dtype=float)
    n = A_loops.shape[0]
    if np.any(np.diag(A_loops) == 0):
        raise ValueError("expected self-loops on the diagonal")
    off = A_loops - np.diag(np.diag(A_loops))
    if not graph_is_connected(off):
        raise DisconnectedGraphInputError("graph must be connected")
    if network is None:
        network = SyncNetwork(off)
    neighborhoods = [sorted(np.flatnonzero(off[i]).tolist()) for i in range(n)]
    # weights[i][j] = current value of entry (i, j); row i is owned by node i
    # during row scaling, column j by node j during column scaling.
    weights = [{j: float(A_loops[i, j]) for j in neighborhoods[i] + [i]}
               for i in range(n)]
    for rnd in range(rounds):
        network.begin_iteration(rnd)
        # Row scaling at the row owner, then hand each entry to its column owner.
        for i in range(n):
            total = sum(weights[i][j] for j in sorted(weights[i]))
            for j in sorted(weights[i]):
                weights[i][j] /= total
            for j in neighborhoods[i]:
                network.send(i, j, weights[i][j], nbytes=8)
        network.deliver_round()
        columns = [network.receive_all(j) for j in range(n)]
        # Column scaling at the column owner, then hand entries back.
        deviation = 0.0
        for j in range(n):
            col = dict(columns[j])
            col[j] = weights[j][j]
            total = sum(col[i] for i in sorted(col))
            for i in sorted(col):
                col[i] /= total
            weights[j][j] = col[j]
            for i in neighborhoods[j]:
                network.send(j, i, col[i], nbytes=8)
            columns[j] = col
        network.deliver_round()
        for i in range(n):
            received = network.receive_all(i)
            for j, value in received.items():
                weights[i][j] = value
            # Local convergence signal: row-sum deviation after column scaling.
            row_sum = sum(weights[i][j] for j in sorted(weights[i]))
            deviation = max(deviation, abs(row_sum - 1.0))
        if deviation <= tol:
            network.finish()
            return weights
    network.finish()
    raise NotConvergedError(f"deviation {deviation:.3e} after {rounds} rounds")


def assemble_weights(maps: list, n: int) -> np.ndarray:
    """Dense matrix from per-node edge-weight maps."""
    S = np.zeros((n, n))
    for i, row in enumerate(maps):
        for j, value in row.items():
            S[i, j] = value
    return S


def validate_params(params: MatrixParams, A: np.ndarray,
                    tol: float = 1e-8) -> ValidationReport:
    """Check every requirement on (Z, W, L) and 2-block adherence to A.

    Always returns a report; failures are carried, not raised.
    """
    Z, W, L, n = params.Z, params.W, params.L, params.block_size
    A = np.asarray(A)
    report = ValidationReport()

    def add(name, residual, threshold=tol, larger_is_pass=False):
        ok = residual > threshold if larger_is_pass else residual <= threshold
        report.checks[name] = CheckResult(bool(ok), float(residual), threshold)

    add("z_symmetric", np.max(np.abs(Z - Z.T)))
    add("w_symmetric", np.max(np.abs(W - W.T)))
    add("z_diag_two", np.max(np.abs(np.diag(Z) - 2.0)))
    add("z_total_zero", abs(float(np.ones(2 * n) @ Z @ np.ones(2 * n))))
    add("w_ones_null", np.max(np.abs(W @ np.ones(2 * n))))
    sym_w = 0.5 * (W + W.T)
    eigs_w = np.linalg.eigvalsh(sym_w)
    add("w_psd", max(0.0, -float(eigs_w[0])))
    # Null space must be exactly span(1): one near-zero eigenvalue, the rest
    # strictly positive.
    nullity = int(np.sum(np.abs(eigs_w) <= tol))
    add("w_nullity_one", abs(nullity - 1), threshold=0.5)
    add("w_fiedler_positive", eigs_w[1], larger_is_pass=True)
    add("z_dominates_w", max(0.0, -float(np.linalg.eigvalsh(0.5 * ((Z - W) + (Z - W).T))[0])))
    add("l_reconstruction", np.max(np.abs(2.0 * np.eye(2 * n) - L - L.T - Z)),
        threshold=max(tol, 1e-12))
    add("l_strictly_lower", np.max(np.abs(np.triu(L))))
    add("two_block_diagonal", max(np.max(np.abs(Z[:n, :n] - 2.0 * np.eye(n))),
                                  np.max(np.abs(Z[n:, n:] - 2.0 * np.eye(n)))))
    forbidden = 0.0
    off_graph = (A == 0) & ~np.eye(n, dtype=bool)
    for M in (Z, W):
        forbidden = max(forbidden,
                        np.max(np.abs(M[:n, :n][off_graph])) if off_graph.any() else 0.0,
                        np.max(np.abs(M[:n, n:][off_graph])) if off_graph.any() else 0.0,
                        np.max(np.abs(M[n:, :n][off_graph])) if off_graph.any() else 0.0,
                        np.max(np.abs(M[n:, n:][off_graph])) if off_graph.any() else 0.0)
    add("two_block_adherence", forbidden)
    return report


# ---------------------------------------------------------------------------
# Parameter file I/O: {n, S_dense | S_triplets, checks}.

DENSE_LIMIT = 512


def params_to_dict(params: MatrixParams, report: ValidationReport | None = None) -> dict:
    n = params.block_size
    S = params.mixing
    doc: dict = {"n": n}
    if n <= DENSE_LIMIT:
        doc["S_dense"] = S.tolist()
    else:
        rows, cols = np.nonzero(S)
        doc["S_triplets"] = [[int(i), int(j), float(S[i, j])]
                             for i, j in zip(rows, cols)]
    if report is not None:
        doc["checks"] = report.to_dict()
    return doc


def params_from_dict(doc: dict) -> MatrixParams:
    n = int(doc["n"])
    if "S_dense" in doc:
        S = np.asarray(doc["S_dense"], dtype=float).reshape(n, n)
    else:
        S = np.zeros((n, n))
        for i, j, v in doc["S_triplets"]:
            S[int(i), int(j)] = float(v)
    I = np.eye(n)
    Z = 2.0 * np.block([[I, -S], [-S, I]])
    return MatrixParams(Z=Z, W=Z.copy(), L=lower_factor(Z), block_size=n)


def save_params(params: MatrixParams, path, report: ValidationReport | None = None):
    Path(path).write_text(json.dumps(params_to_dict(params, report)))


def load_params(path) -> MatrixParams:
    return params_from_dict(json.loads(Path(path).read_text()))


def read_edge_list(path) -> np.ndarray:
    """Adjacency from a text file of 0-based 'i j' pairs, one per line."""
    pairs = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        i, j = (int(tok) for tok in line.split())
        pairs.append((i, j))
    if not pairs:
        raise ValueError("empty edge list")
    n = max(max(i, j) for i, j in pairs) + 1
    A = np.zeros((n, n))
    for i, j in pairs:
        if i == j:
            raise ValueError("self-loops not allowed in edge list")
        A[i, j] = A[j, i] = 1.0
    return A
