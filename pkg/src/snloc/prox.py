"""The two proximal operators used by both solvers.

For each sensor the distance-misfit prox reduces, after vectorizing the free
coordinates, to a regularized least-absolute-deviation problem solved by a
small warm-started ADMM with a cached Cholesky factor.  The semidefinite
indicator prox is an eigenvalue clipping of the sensor's principal submatrix.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .lifted import LiftedPoint
from .problem import ProblemInstance

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


def soft_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    """Componentwise shrinkage sign(x) * max(|x| - tau, 0)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def psd_project(S: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm.

    Input is symmetrized defensively; the reconstruction keeps only the
    nonnegative eigenvalues.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    clipped = np.maximum(vals, 0.0)
    P = (vecs * clipped) @ vecs.T
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# Inner ADMM kernel for  min_w  alpha*||ck - K w||_1 + 0.5*||D w||^2,
# iterated as: w-step by cached Cholesky solve, y-step by soft-thresholding
# with threshold alpha/rho, dual step lam += (ck - K w - y).  Terminates when
# the dual update norm falls below tol.  lam and y are updated in place so
# the next call warm starts from them.

def _lad_admm_numpy(K, rhoKT, cholL, ck, lam, y, thresh, tol, max_iter):
    w = np.zeros(K.shape[1])
    nrm = np.inf
    for it in range(max_iter):
        w = cho_solve((cholL, True), rhoKT @ (lam + ck - y), check_finite=False)
        resid = ck - K @ w
        y_new = soft_threshold(resid + lam, thresh)
        du = resid - y_new
        y[:] = y_new
        lam += du
        nrm = float(np.sqrt(du @ du))
        if nrm <= tol:
            return w, it + 1, nrm
    return w, max_iter, nrm


def _make_numba_kernel():
    from numba import njit

    @njit(cache=True)
    def kernel(K, rhoKT, cholL, ck, lam, y, thresh, tol, max_iter):
        R, C = K.shape
        w = np.zeros(C)
        t = np.empty(C)
        nrm = np.inf
        for it in range(max_iter):
            for c in range(C):
                s = 0.0
                for r in range(R):
                    s += rhoKT[c, r] * (lam[r] + ck[r] - y[r])
                t[c] = s
            # forward/backward substitution with the cached lower factor
            for c in range(C):
                s = t[c]
                for k in range(c):
                    s -= cholL[c, k] * w[k]
                w[c] = s / cholL[c, c]
            for c in range(C - 1, -1, -1):
                s = w[c]
                for k in range(c + 1, C):
                    s -= cholL[k, c] * w[k]
                w[c] = s / cholL[c, c]
            acc = 0.0
            for r in range(R):
                kw = 0.0
                for c in range(C):
                    kw += K[r, c] * w[c]
                resid = ck[r] - kw
                z = resid + lam[r]
                if z > thresh:
                    y_new = z - thresh
                elif z < -thresh:
                    y_new = z + thresh
                else:
                    y_new = 0.0
                du = resid - y_new
                y[r] = y_new
                lam[r] += du
                acc += du * du
            nrm = np.sqrt(acc)
            if nrm <= tol:
                return w, it + 1, nrm
        return w, max_iter, nrm

    return kernel


if os.environ.get("SNLOC_DISABLE_NUMBA"):
    _lad_admm = _lad_admm_numpy
else:
    try:
        _lad_admm = _make_numba_kernel()
    except ImportError:  # pragma: no cover
        _lad_admm = _lad_admm_numpy


@dataclass
class GProxData:
    """Per-sensor cached vectorization of the misfit prox.

    K stacks one row per observation over the free coordinates
    (Y_ii, Y_j1j1, Y_ij1, ..., X_i); D holds the diagonal weights matching
    the lifted norm; chol is the lower Cholesky factor of
    rho*K^T K + D^T D, computed once.  lambda_ws / y_ws persist between
    calls to warm start the inner ADMM.
    """

    sensor: int
    K: np.ndarray
    D: np.ndarray
    N_block: np.ndarray
    M_block: np.ndarray
    c: np.ndarray
    rho: float
    chol: np.ndarray
    rhoKT: np.ndarray
    y_rows: np.ndarray
    y_cols: np.ndarray
    index_map: list
    lambda_ws: np.ndarray
    y_ws: np.ndarray
    factorizations: int = 1
    last_inner_iters: int = 0
    budget_exhausted: int = 0

    def gather(self, p: LiftedPoint) -> np.ndarray:
        return np.concatenate((p.Y[self.y_rows, self.y_cols], p.X[self.sensor]))

    def scatter(self, v: np.ndarray, p: LiftedPoint):
        ny = self.y_rows.size
        p.Y[self.y_rows, self.y_cols] = v[:ny]
        p.Y[self.y_cols, self.y_rows] = v[:ny]
        p.X[self.sensor] = v[ny:]


def build_g_prox_data(inst: ProblemInstance, i: int, rho: float = 1.0) -> GProxData:
    """Assemble and factor the vectorized misfit prox data for sensor i."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    nbrs = inst.sensor_neighbors[i]
    anbrs = inst.anchor_neighbors[i]
    k, ma, d = nbrs.size, anbrs.size, inst.d
    dim = 1 + 2 * k + d

    D = np.concatenate(([1.0], np.tile([1.0, SQRT2], k), np.full(d, SQRT2)))
    N_block = np.zeros((k, 2 * k))
    for r in range(k):
        N_block[r, 2 * r] = 1.0
        N_block[r, 2 * r + 1] = -2.0
    M_block = inst.anchors[anbrs].astype(float)

    K = np.zeros((k + ma, dim))
    K[:k, 0] = 1.0
    K[:k, 1:1 + 2 * k] = N_block
    K[k:, 0] = 1.0
    # Anchor rows carry -2 a_k on the X coordinates so that
    # c - K v reproduces d^2 - Y_ii - ||a||^2 + 2 a . X_i.
    K[k:, 1 + 2 * k:] = -2.0 * M_block

    c = np.concatenate((inst.dist_ss[i] ** 2,
                        inst.dist_sa[i] ** 2 - np.sum(M_block * M_block, axis=1)))

    M = rho * K.T @ K + np.diag(D * D)
    chol = np.linalg.cholesky(M)

    y_rows = np.empty(1 + 2 * k, dtype=int)
    y_cols = np.empty(1 + 2 * k, dtype=int)
    y_rows[0] = y_cols[0] = i
    y_rows[1::2] = nbrs
    y_cols[1::2] = nbrs
    y_rows[2::2] = i
    y_cols[2::2] = nbrs
    index_map = [("Y", int(r), int(cc)) for r, cc in zip(y_rows, y_cols)]
    index_map += [("X", i, col) for col in range(d)]

    return GProxData(sensor=i, K=K, D=D, N_block=N_block, M_block=M_block,
                     c=c, rho=rho, chol=chol,
                     rhoKT=np.ascontiguousarray(rho * K.T),
                     y_rows=y_rows, y_cols=y_cols, index_map=index_map,
                     lambda_ws=np.zeros(k + ma), y_ws=np.zeros(k + ma))


def g_prox_into(data: GProxData, pk: LiftedPoint, out: LiftedPoint,
                alpha: float, tol: float, max_inner: int = 10_000):
    """Run the inner ADMM and write the minimizer's free coordinates into
    `out` (which must already hold pk's values everywhere else)."""
    if data.K.shape[0] == 0:
        data.last_inner_iters = 0
        return
    vk = data.gather(pk)
    ck = data.c - data.K @ vk
    w, iters, nrm = _lad_admm(data.K, data.rhoKT, data.chol, ck,
                              data.lambda_ws, data.y_ws,
                              alpha / data.rho, tol, max_inner)
    data.last_inner_iters = iters
    if nrm > tol:
        data.budget_exhausted += 1
        log.warning("sensor %d: inner ADMM budget %d exhausted (residual %.3e);"
                    " keeping best iterate", data.sensor, max_inner, nrm)
    data.scatter(vk + w, out)


def g_prox(data: GProxData, pk: LiftedPoint, i: int, alpha: float,
           tol: float, max_inner: int = 10_000) -> LiftedPoint:
    """prox of alpha * g_i at pk under the lifted weighted norm:
    argmin alpha*g_i(X, Y) + 0.5*||Y - Yk||_F^2 + ||X - Xk||_F^2.

    Coordinates outside sensor i's neighborhood pass through unchanged.
    If alpha <= 0 or tol <= 0 the call is rejected.
    """
    if alpha <= 0 or tol <= 0:
        raise ValueError("alpha and tol must be positive")
    if data.sensor != i:
        raise ValueError("prox data belongs to a different sensor")
    out = pk.copy()
    g_prox_into(data, pk, out, alpha, tol, max_inner)
    return out


# ---------------------------------------------------------------------------
# Semidefinite indicator prox: clip the eigenvalues of the sensor's principal
# submatrix.  The identity block participates in the eigendecomposition and
# its projected value is discarded, as the weighted-norm metric would require
# holding it fixed; reimposed_min_eig measures the resulting defect.

def delta_nodes(inst: ProblemInstance, i: int) -> np.ndarray:
    """Node indices of sensor i's principal submatrix: i then its
    observation neighborhood."""
    return np.concatenate(([i], inst.sensor_neighbors[i])).astype(int)


def submatrix(inst: ProblemInstance, i: int, p: LiftedPoint) -> np.ndarray:
    """The (d + 1 + |N_i|) principal submatrix of [[I, X^T], [X, Y]] over
    sensor i's neighborhood."""
    return _assemble(delta_nodes(inst, i), inst.d, p)


def _assemble(nodes: np.ndarray, d: int, p: LiftedPoint) -> np.ndarray:
    size = d + nodes.size
    M = np.empty((size, size))
    M[:d, :d] = np.eye(d)
    Xn = p.X[nodes]
    M[:d, d:] = Xn.T
    M[d:, :d] = Xn
    M[d:, d:] = p.Y[np.ix_(nodes, nodes)]
    return M


def delta_prox_into(nodes: np.ndarray, d: int, pk: LiftedPoint, out: LiftedPoint):
    M = _assemble(nodes, d, pk)
    vals, vecs = np.linalg.eigh(M)
    if vals[0] >= 0.0:
        return
    P = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    P = 0.5 * (P + P.T)
    out.X[nodes] = P[d:, :d]
    out.Y[np.ix_(nodes, nodes)] = P[d:, d:]


def delta_prox(inst: ProblemInstance, i: int, pk: LiftedPoint) -> LiftedPoint:
    """Project sensor i's principal submatrix onto the PSD cone and write
    the projected entries back; everything outside the submatrix's support
    is untouched."""
    out = pk.copy()
    delta_prox_into(delta_nodes(inst, i), inst.d, pk, out)
    return out


def reimposed_min_eig(inst: ProblemInstance, i: int, p: LiftedPoint) -> float:
    """Smallest eigenvalue of S^i(p) with the identity block in place."""
    return float(np.linalg.eigvalsh(submatrix(inst, i, p))[0])


def psd_residual(inst: ProblemInstance, p: LiftedPoint) -> float:
    """max over sensors of the PSD constraint violation of S^i."""
    worst = 0.0
    for i in range(inst.n):
        worst = max(worst, -reimposed_min_eig(inst, i, p))
    return max(0.0, worst)
