"""Matrix-parametrized proximal splitting over the 2n-function split.

Sensor i owns two of the 2n functions: its distance misfit (block 1) and
the semidefinite indicator on its principal submatrix (block 2).  One
iteration evaluates every block-1 prox at v_i, every block-2 prox at
v_{n+i} + 2 * sum_j S_ij x_j, then updates v <- v - gamma * W x.  With the
2-block matrices both blocks parallelize across sensors, and all
communication follows graph edges.

Serial and decentralized modes drive the same per-node helpers in the same
order, so their iterates agree bit for bit; the decentralized mode routes
the exchanged blocks through the simulated synchronous network and counts
messages and bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import MatrixParams
from .lifted import LiftedPoint, gram_point, lifted_nbytes
from .metrics import MetricRecord, centrality, mean_distance, relative_error
from .network import SyncNetwork
from .problem import ProblemInstance, build_adjacency, objective
from .prox import (GProxData, build_g_prox_data, delta_nodes, delta_prox_into,
                   g_prox_into, psd_residual)


@dataclass
class InnerOptions:
    """Inner ADMM settings for the misfit prox.

    The tolerance starts at tol0 and halves every `every` outer iterations
    down to tol_min, so early outer iterations stay cheap while late ones
    solve the prox accurately.  rho=None matches the penalty to the prox
    scaling (the dual runs at that scale, so this keeps the soft threshold
    at 1 and the iteration count low); a float pins it explicitly.
    """

    rho: float | None = None
    tol0: float = 1e-4
    beta: float = 0.5
    every: int = 50
    tol_min: float = 1e-8
    max_iter: int = 10_000

    def tolerance(self, outer_iteration: int) -> float:
        return max(self.tol_min, self.tol0 * self.beta ** (outer_iteration // self.every))

    def effective_rho(self, prox_scale: float) -> float:
        return self.rho if self.rho is not None else prox_scale


@dataclass
class EarlyStopOptions:
    patience: int = 100


@dataclass
class SolverOptions:
    gamma: float = 0.999
    alpha: float = 10.0
    max_iter: int = 3000
    early_stop: EarlyStopOptions | None = None
    mode: str = "serial"
    seed: int = 0
    inner: InnerOptions = field(default_factory=InnerOptions)
    fp_tol: float = 1e-6
    estimate_block: str = "psd"  # which local copy reports sensor i's row

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.mode not in ("serial", "decentralized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.estimate_block not in ("psd", "gprox"):
            raise ValueError("estimate_block must be 'psd' or 'gprox'")


@dataclass
class BestSnapshot:
    iteration: int = 0
    objective: float = math.inf
    X_hat: np.ndarray | None = None
    record: MetricRecord | None = None


@dataclass
class SolverTrace:
    records: list = field(default_factory=list)
    termination: str = "max_iter"
    final_X: np.ndarray | None = None      # reported solution
    last_X: np.ndarray | None = None       # estimate at the final iterate
    best: BestSnapshot = field(default_factory=BestSnapshot)
    early_fire_iteration: int | None = None
    messages: int = 0
    bytes: int = 0
    messages_history: list = field(default_factory=list)
    bytes_history: list = field(default_factory=list)
    certificate_history: list = field(default_factory=list)
    xbar_norm_history: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def objective_history(self) -> list:
        return [r.objective for r in self.records]

    @property
    def rel_error_history(self) -> list:
        return [r.rel_error for r in self.records]


class SolverState:
    """Lifted iterates of the splitting run.

    v and x hold 2n lifted points each, stored as stacked arrays with
    LiftedPoint views on top; per sensor that is four persistent lifted
    variables (v_i, v_{n+i}, x_i, x_{n+i}).
    """

    def __init__(self, inst: ProblemInstance, params: MatrixParams,
                 options: SolverOptions):
        if params.block_size != inst.n:
            raise ValueError("matrix parameters sized for a different instance")
        n, d = inst.n, inst.d
        self.n, self.d = n, d
        self.vX = np.zeros((2 * n, n, d))
        self.vY = np.zeros((2 * n, n, n))
        self.xX = np.zeros((2 * n, n, d))
        self.xY = np.zeros((2 * n, n, n))
        self.v = [LiftedPoint(self.vX[i], self.vY[i]) for i in range(2 * n)]
        self.x = [LiftedPoint(self.xX[i], self.xY[i]) for i in range(2 * n)]
        self.iteration = 0
        self.objective_history: list = []
        rho = options.inner.effective_rho(options.alpha)
        self.gprox_data = [build_g_prox_data(inst, i, rho) for i in range(n)]
        self.delta_nodes = [delta_nodes(inst, i) for i in range(n)]
        S = params.mixing
        self.nbr_idx = [np.flatnonzero(S[i] != 0.0) for i in range(n)]
        self.nbr_w = [S[i, idx].copy() for i, idx in enumerate(self.nbr_idx)]
        # scratch for the block-2 inputs t = v_{n+i} + 2 sum_j S_ij x_j
        self.tX = np.zeros((n, n, d))
        self.tY = np.zeros((n, n, n))
        self.c1X = np.zeros((n, n, d))
        self.c1Y = np.zeros((n, n, n))
        self.wx_norm = math.inf
        self.cert_num = math.inf
        self.last_xbar_norm = 0.0


def init_cold(inst: ProblemInstance, params: MatrixParams,
              options: SolverOptions | None = None) -> SolverState:
    """All-zero v; trivially satisfies the zero-sum start condition."""
    return SolverState(inst, params, options or SolverOptions())


def warm_start_v(inst: ProblemInstance, params: MatrixParams,
                 X_tilde: np.ndarray,
                 options: SolverOptions | None = None) -> SolverState:
    """Start from a location guess: v_i = (Xt, Xt Xt^T) on block 1 and its
    negation on block 2, which keeps sum_i v_i = 0 exactly."""
    X_tilde = np.asarray(X_tilde, dtype=float)
    if X_tilde.shape != (inst.n, inst.d):
        raise ValueError("warm start must be n x d")
    state = SolverState(inst, params, options or SolverOptions())
    p = gram_point(X_tilde)
    n = inst.n
    state.vX[:n] = p.X
    state.vY[:n] = p.Y
    state.vX[n:] = -p.X
    state.vY[n:] = -p.Y
    return state


def perturb_truth(inst: ProblemInstance, sd: float, seed: int) -> np.ndarray:
    """Truth plus iid Gaussian noise of standard deviation sd per component."""
    if inst.truth is None:
        raise ValueError("instance has no ground truth")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return inst.truth + sd * rng.standard_normal(inst.truth.shape)


# ---------------------------------------------------------------------------
# Per-node helpers shared verbatim by the serial loop and the decentralized
# workers, so both modes produce identical floating point iterates.

def _combine(weights: np.ndarray, stackX: np.ndarray, stackY: np.ndarray):
    cX = np.einsum("k,kab->ab", weights, stackX)
    cY = np.einsum("k,kab->ab", weights, stackY)
    return cX, cY


def _block2_input(v2X, v2Y, weights, stackX, stackY):
    cX, cY = _combine(weights, stackX, stackY)
    return v2X + 2.0 * cX, v2Y + 2.0 * cY, cX, cY


def _consensus_step(vX, vY, xX, xY, cX, cY, gamma):
    """v <- v - gamma * (2x - 2c) in place; returns the squared norm of the
    W-row applied to x."""
    wxX = 2.0 * xX - 2.0 * cX
    wxY = 2.0 * xY - 2.0 * cY
    vX -= gamma * wxX
    vY -= gamma * wxY
    return float(np.sum(wxX * wxX) + np.sum(wxY * wxY))


def _certificate_norm(y1X, y1Y, y2X, y2Y) -> float:
    """|| sum_i y_i ||_F for the subgradient reconstruction
    y_i = v_i + (L x)_i - x_i, given the stacked block contributions."""
    sX = np.sum(y1X, axis=0) + np.sum(y2X, axis=0)
    sY = np.sum(y1Y, axis=0) + np.sum(y2Y, axis=0)
    return float(np.sqrt(np.sum(sX * sX) + np.sum(sY * sY)))


def _estimates(xX: np.ndarray, n: int, block: str) -> np.ndarray:
    rows = np.arange(n)
    return xX[n + rows, rows].copy() if block == "psd" else xX[rows, rows].copy()


def _make_record(inst: ProblemInstance, xX, xY, iteration: int,
                 estimate_block: str):
    """Observer-side metrics at the mean of the 2n copies."""
    meanX = np.mean(xX, axis=0)
    meanY = np.mean(xY, axis=0)
    mean_point = LiftedPoint(meanX, meanY)
    X_hat = _estimates(xX, inst.n, estimate_block)
    obj = objective(inst, mean_point)
    rel = err = cen = float("nan")
    if inst.truth is not None:
        rel = relative_error(X_hat, inst.truth)
        err = mean_distance(X_hat, inst.truth)
    if inst.m > 0:
        cen = centrality(X_hat, inst.anchors)
    dX = xX - meanX
    dY = xY - meanY
    cons = float(np.sqrt(np.max(np.sum(dX * dX, axis=(1, 2))
                                + np.sum(dY * dY, axis=(1, 2)))))
    rec = MetricRecord(iteration=iteration, objective=obj, rel_error=rel,
                       centrality=cen, mean_distance=err,
                       psd_residual=psd_residual(inst, mean_point),
                       consensus_residual=cons)
    xbar_norm = float(np.sqrt(np.sum(meanX * meanX) + np.sum(meanY * meanY)))
    return rec, X_hat, xbar_norm


def iterate(state: SolverState, inst: ProblemInstance, params: MatrixParams,
            options: SolverOptions) -> SolverState:
    """One serial iteration of the splitting; mutates and returns state."""
    n = state.n
    tol = options.inner.tolerance(state.iteration)

    # Block 1: the L rows of the first block are zero, so the misfit prox
    # sees v_i alone.  Untouched coordinates pass straight through.
    np.copyto(state.xX[:n], state.vX[:n])
    np.copyto(state.xY[:n], state.vY[:n])
    for i in range(n):
        g_prox_into(state.gprox_data[i], state.v[i], state.x[i],
                    options.alpha, tol, options.inner.max_iter)

    # Block 2: project at v_{n+i} + 2 sum_j S_ij x_j.
    for i in range(n):
        idx, w = state.nbr_idx[i], state.nbr_w[i]
        tX, tY, cX, cY = _block2_input(state.vX[n + i], state.vY[n + i], w,
                                       state.xX[idx], state.xY[idx])
        state.tX[i], state.tY[i] = tX, tY
        state.c1X[i], state.c1Y[i] = cX, cY
    np.copyto(state.xX[n:], state.tX)
    np.copyto(state.xY[n:], state.tY)
    for i in range(n):
        delta_prox_into(state.delta_nodes[i], state.d,
                        LiftedPoint(state.tX[i], state.tY[i]),
                        state.x[n + i])

    # Optimality certificate before the consensus update: y_i = v_i + (Lx)_i - x_i.
    state.cert_num = _certificate_norm(state.vX[:n] - state.xX[:n],
                                       state.vY[:n] - state.xY[:n],
                                       state.tX - state.xX[n:],
                                       state.tY - state.xY[n:])

    # Consensus update v <- v - gamma * W x, one W row at a time.
    wx_sq = 0.0
    for i in range(n):
        idx, w = state.nbr_idx[i], state.nbr_w[i]
        c2X, c2Y = _combine(w, state.xX[n + idx], state.xY[n + idx])
        wx_sq += _consensus_step(state.vX[i], state.vY[i],
                                 state.xX[i], state.xY[i], c2X, c2Y,
                                 options.gamma)
        wx_sq += _consensus_step(state.vX[n + i], state.vY[n + i],
                                 state.xX[n + i], state.xY[n + i],
                                 state.c1X[i], state.c1Y[i], options.gamma)
    state.wx_norm = math.sqrt(wx_sq)
    state.iteration += 1
    return state


def sensor_estimates(state: SolverState, block: str = "psd") -> np.ndarray:
    """Row i is sensor i's own location estimate, from its block-2 (default)
    or block-1 copy."""
    return _estimates(state.xX, state.n, block)


def zero_sum_residual(state: SolverState) -> float:
    """||sum_i v_i||_F; preserved at zero by the W update since W 1 = 0."""
    sX = np.sum(state.vX, axis=0)
    sY = np.sum(state.vY, axis=0)
    return float(np.sqrt(np.sum(sX * sX) + np.sum(sY * sY)))


def lifted_state_per_sensor(state: SolverState) -> int:
    """Persistent lifted variables each sensor stores (v and x for both of
    its functions)."""
    return (state.vX.shape[0] + state.xX.shape[0]) // state.n


def early_stop_monitor(objective_history, patience: int = 100):
    """Objective-history stopping rule.

    Returns (stop, best_index): stop is True when the most recent `patience`
    values all exceed the minimum seen before them; best_index points at the
    incumbent minimum, which is the iterate to report.
    """
    history = list(objective_history)
    if not history:
        return False, -1
    best_index = int(np.argmin(history))
    if len(history) <= patience:
        return False, best_index
    window_min = min(history[-patience:])
    prior_min = min(history[:-patience])
    return bool(window_min > prior_min), best_index


def run(inst: ProblemInstance, params: MatrixParams, options: SolverOptions,
        initial: SolverState | None = None, callback=None) -> SolverTrace:
    """Run the splitting to max_iter, fixed-point residual, or early stop.

    The reported solution is the objective-argmin iterate when the early
    stopping monitor fires, otherwise the final iterate.  A callback
    (state, record) -> bool can force termination.
    """
    if options.mode == "decentralized":
        return run_decentralized(inst, params, options, initial=initial,
                                 callback=callback)
    state = initial if initial is not None else init_cold(inst, params, options)
    trace = SolverTrace()
    trace.metadata = {"method": "splitting", "mode": "serial",
                      "gamma": options.gamma, "alpha": options.alpha}
    last_improve = 0
    for _ in range(options.max_iter):
        iterate(state, inst, params, options)
        rec, X_hat, xbar_norm = _make_record(inst, state.xX, state.xY,
                                             state.iteration,
                                             options.estimate_block)
        state.last_xbar_norm = xbar_norm
        _append_record(trace, state, rec, xbar_norm, messages=0, nbytes=0)
        state.objective_history.append(rec.objective)
        last_improve = _track_best(trace, state, rec, X_hat, last_improve)
        stop = _check_termination(trace, state, rec, X_hat, options,
                                  last_improve, callback)
        if stop:
            return trace
    trace.termination = "max_iter"
    trace.last_X = sensor_estimates(state, options.estimate_block)
    trace.final_X = trace.last_X
    return trace


def _append_record(trace: SolverTrace, state: SolverState, rec: MetricRecord,
                   xbar_norm: float, messages: int, nbytes: int):
    trace.records.append(rec)
    trace.certificate_history.append(state.cert_num)
    trace.xbar_norm_history.append(xbar_norm)
    trace.messages_history.append(messages)
    trace.bytes_history.append(nbytes)
    trace.messages = messages
    trace.bytes = nbytes


def _track_best(trace, state, rec, X_hat, last_improve) -> int:
    """A value at or below the incumbent minimum resets the patience clock;
    a strictly lower one also replaces the reported snapshot."""
    if rec.objective <= trace.best.objective:
        if rec.objective < trace.best.objective:
            trace.best = BestSnapshot(state.iteration, rec.objective,
                                      X_hat.copy(), rec)
        return state.iteration
    return last_improve


def _check_termination(trace, state, rec, X_hat, options, last_improve,
                       callback) -> bool:
    if options.early_stop is not None and \
            state.iteration - last_improve >= options.early_stop.patience:
        trace.termination = "early_stop"
        trace.early_fire_iteration = state.iteration
        trace.last_X = X_hat
        trace.final_X = trace.best.X_hat
        return True
    fp_resid = options.gamma * state.wx_norm / max(1.0, _x_norm(state))
    if options.fp_tol > 0 and fp_resid <= options.fp_tol:
        trace.termination = "fixed_point"
        trace.last_X = X_hat
        trace.final_X = X_hat
        return True
    if callback is not None and callback(state, rec):
        trace.termination = "callback"
        trace.last_X = X_hat
        trace.final_X = X_hat
        return True
    return False


def _x_norm(state: SolverState) -> float:
    return float(np.sqrt(np.sum(state.xX * state.xX) + np.sum(state.xY * state.xY)))


# ---------------------------------------------------------------------------
# Decentralized execution: one worker per sensor, two communication rounds
# per iteration (block-1 estimates out, block-2 estimates back), every
# message over a graph edge.

class _Worker:
    def __init__(self, i: int, inst: ProblemInstance, state: SolverState):
        self.i = i
        n = inst.n
        self.n, self.d = n, inst.d
        self.v1X = state.vX[i].copy()
        self.v1Y = state.vY[i].copy()
        self.v2X = state.vX[n + i].copy()
        self.v2Y = state.vY[n + i].copy()
        self.x1X = np.zeros_like(self.v1X)
        self.x1Y = np.zeros_like(self.v1Y)
        self.x2X = np.zeros_like(self.v2X)
        self.x2Y = np.zeros_like(self.v2Y)
        self.gdata = state.gprox_data[i]
        self.nodes = state.delta_nodes[i]
        self.idx = state.nbr_idx[i]
        self.weights = state.nbr_w[i]
        self.graph_nbrs = [int(j) for j in self.idx if j != i]

    def block1(self, alpha, tol, max_inner):
        np.copyto(self.x1X, self.v1X)
        np.copyto(self.x1Y, self.v1Y)
        g_prox_into(self.gdata, LiftedPoint(self.v1X, self.v1Y),
                    LiftedPoint(self.x1X, self.x1Y), alpha, tol, max_inner)

    def _stack(self, received: dict, own_X, own_Y):
        xs = [(own_X, own_Y) if j == self.i else received[j] for j in self.idx]
        return (np.stack([a for a, _ in xs]), np.stack([b for _, b in xs]))

    def block2(self, received: dict):
        stackX, stackY = self._stack(received, self.x1X, self.x1Y)
        tX, tY, cX, cY = _block2_input(self.v2X, self.v2Y, self.weights,
                                       stackX, stackY)
        self.tX, self.tY, self.c1X, self.c1Y = tX, tY, cX, cY
        np.copyto(self.x2X, tX)
        np.copyto(self.x2Y, tY)
        delta_prox_into(self.nodes, self.d, LiftedPoint(tX, tY),
                        LiftedPoint(self.x2X, self.x2Y))
        # subgradient reconstruction, taken before v changes
        self.y1X = self.v1X - self.x1X
        self.y1Y = self.v1Y - self.x1Y
        self.y2X = self.tX - self.x2X
        self.y2Y = self.tY - self.x2Y

    def consensus(self, received: dict, gamma):
        stackX, stackY = self._stack(received, self.x2X, self.x2Y)
        c2X, c2Y = _combine(self.weights, stackX, stackY)
        sq = _consensus_step(self.v1X, self.v1Y, self.x1X, self.x1Y,
                             c2X, c2Y, gamma)
        sq += _consensus_step(self.v2X, self.v2Y, self.x2X, self.x2Y,
                              self.c1X, self.c1Y, gamma)
        return sq


def run_decentralized(inst: ProblemInstance, params: MatrixParams,
                      options: SolverOptions,
                      initial: SolverState | None = None,
                      callback=None, audit: bool = True) -> SolverTrace:
    """Simulated message-passing execution; iterates match serial mode
    bit for bit under identical options.  `audit=False` drops the per-message
    log for long runs (counters are always kept)."""
    n, d = inst.n, inst.d
    state = initial if initial is not None else init_cold(inst, params, options)
    net = SyncNetwork(build_adjacency(inst), audit=audit)
    workers = [_Worker(i, inst, state) for i in range(n)]
    nbytes = lifted_nbytes(n, d)
    trace = SolverTrace()
    trace.metadata = {"method": "splitting", "mode": "decentralized",
                      "gamma": options.gamma, "alpha": options.alpha}
    last_improve = 0
    for _ in range(options.max_iter):
        tol = options.inner.tolerance(state.iteration)
        net.begin_iteration(state.iteration)
        for wk in workers:
            wk.block1(options.alpha, tol, options.inner.max_iter)
            for j in wk.graph_nbrs:
                net.send(wk.i, j, (wk.x1X, wk.x1Y), nbytes)
        net.deliver_round()
        inbox = [net.receive_all(i) for i in range(n)]
        for wk in workers:
            wk.block2(inbox[wk.i])
            for j in wk.graph_nbrs:
                net.send(wk.i, j, (wk.x2X, wk.x2Y), nbytes)
        net.deliver_round()
        inbox = [net.receive_all(i) for i in range(n)]
        wx_sq = 0.0
        cert = _certificate_norm(np.stack([wk.y1X for wk in workers]),
                                 np.stack([wk.y1Y for wk in workers]),
                                 np.stack([wk.y2X for wk in workers]),
                                 np.stack([wk.y2Y for wk in workers]))
        for wk in workers:
            wx_sq += wk.consensus(inbox[wk.i], options.gamma)
        state.wx_norm = math.sqrt(wx_sq)
        state.cert_num = cert
        state.iteration += 1
        _observe(state, workers)
        rec, X_hat, xbar_norm = _make_record(inst, state.xX, state.xY,
                                             state.iteration,
                                             options.estimate_block)
        state.last_xbar_norm = xbar_norm
        _append_record(trace, state, rec, xbar_norm,
                       messages=net.messages, nbytes=net.bytes)
        state.objective_history.append(rec.objective)
        last_improve = _track_best(trace, state, rec, X_hat, last_improve)
        if _check_termination(trace, state, rec, X_hat, options,
                              last_improve, callback):
            net.finish()
            trace.metadata["network_audit_len"] = len(net.audit)
            trace.metadata["rounds_per_iteration"] = net.rounds_per_iteration
            trace.metadata["audit"] = net.audit
            return trace
    trace.termination = "max_iter"
    trace.last_X = sensor_estimates(state, options.estimate_block)
    trace.final_X = trace.last_X
    net.finish()
    trace.metadata["network_audit_len"] = len(net.audit)
    trace.metadata["rounds_per_iteration"] = net.rounds_per_iteration
    trace.metadata["audit"] = net.audit
    return trace


def _observe(state: SolverState, workers: list):
    """Mirror worker-held iterates into the stacked state arrays (harness
    observer; used for metrics only)."""
    n = state.n
    for wk in workers:
        state.vX[wk.i] = wk.v1X
        state.vY[wk.i] = wk.v1Y
        state.vX[n + wk.i] = wk.v2X
        state.vY[n + wk.i] = wk.v2Y
        state.xX[wk.i] = wk.x1X
        state.xY[wk.i] = wk.x1Y
        state.xX[n + wk.i] = wk.x2X
        state.xY[n + wk.i] = wk.x2Y
