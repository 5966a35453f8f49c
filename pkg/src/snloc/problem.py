"""Noisy sensor network localization problem data.

Instances hold per-sensor neighbor lists and noisy squared-distance
observations; observations are directed (sensor i's measurement of j may
differ from j's measurement of i).  The undirected communication graph is
derived by :func:`build_adjacency` and is required to be connected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .lifted import LiftedPoint


class InvalidInstanceError(ValueError):
    """Instance data violates a structural invariant."""


class DisconnectedGraphError(InvalidInstanceError):
    """The derived communication graph is not connected."""


class GenerationError(RuntimeError):
    """Random generation failed to produce a usable instance."""


@dataclass
class ProblemInstance:
    """Problem data for one noisy localization instance.

    Attributes
    ----------
    d, n, m : int
        Space dimension, sensor count, anchor count.
    anchors : (m, d) array
        Known anchor locations.
    sensor_neighbors : list of int arrays
        For each sensor i, the sensors j it observed (directed, i -> j).
    anchor_neighbors : list of int arrays
        For each sensor i, the anchors k it observed.
    dist_ss, dist_sa : list of float arrays
        Noisy distances aligned with the neighbor lists.
    truth : (n, d) array or None
        True sensor locations, for evaluation only.
    """

    d: int
    n: int
    m: int
    anchors: np.ndarray
    sensor_neighbors: list = field(default_factory=list)
    anchor_neighbors: list = field(default_factory=list)
    dist_ss: list = field(default_factory=list)
    dist_sa: list = field(default_factory=list)
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float).reshape(self.m, self.d)
        self.sensor_neighbors = [np.asarray(v, dtype=int) for v in self.sensor_neighbors]
        self.anchor_neighbors = [np.asarray(v, dtype=int) for v in self.anchor_neighbors]
        self.dist_ss = [np.asarray(v, dtype=float) for v in self.dist_ss]
        self.dist_sa = [np.asarray(v, dtype=float) for v in self.dist_sa]
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
        validate_instance(self)


def validate_instance(inst: ProblemInstance):
    """Raise InvalidInstanceError / DisconnectedGraphError on bad data."""
    if inst.d < 1 or inst.n < 1 or inst.m < 0:
        raise InvalidInstanceError("need d >= 1, n >= 1, m >= 0")
    if inst.anchors.shape != (inst.m, inst.d):
        raise InvalidInstanceError("anchors must be m x d")
    for name, lists in (("sensor_neighbors", inst.sensor_neighbors),
                        ("anchor_neighbors", inst.anchor_neighbors),
                        ("dist_ss", inst.dist_ss), ("dist_sa", inst.dist_sa)):
        if len(lists) != inst.n:
            raise InvalidInstanceError(f"{name} must have one entry per sensor")
    for i in range(inst.n):
        nbrs = inst.sensor_neighbors[i]
        if nbrs.size != inst.dist_ss[i].size:
            raise InvalidInstanceError(f"sensor {i}: neighbor/distance length mismatch")
        if nbrs.size and (nbrs.min() < 0 or nbrs.max() >= inst.n):
            raise InvalidInstanceError(f"sensor {i}: neighbor index out of range")
        if np.any(nbrs == i):
            raise InvalidInstanceError(f"sensor {i}: self-observation not allowed")
        if len(np.unique(nbrs)) != nbrs.size:
            raise InvalidInstanceError(f"sensor {i}: duplicate neighbor")
        anbrs = inst.anchor_neighbors[i]
        if anbrs.size != inst.dist_sa[i].size:
            raise InvalidInstanceError(f"sensor {i}: anchor/distance length mismatch")
        if anbrs.size and (anbrs.min() < 0 or anbrs.max() >= inst.m):
            raise InvalidInstanceError(f"sensor {i}: anchor index out of range")
        if len(np.unique(anbrs)) != anbrs.size:
            raise InvalidInstanceError(f"sensor {i}: duplicate anchor")
        if np.any(inst.dist_ss[i] < 0) or np.any(inst.dist_sa[i] < 0):
            raise InvalidInstanceError(f"sensor {i}: negative distance")
    if inst.truth is not None and inst.truth.shape != (inst.n, inst.d):
        raise InvalidInstanceError("truth must be n x d")
    A = build_adjacency(inst)
    if not graph_is_connected(A):
        raise DisconnectedGraphError("communication graph is not connected")


def build_adjacency(inst: ProblemInstance) -> np.ndarray:
    """Undirected 0/1 communication graph: A_ij = 1 iff i observed j or
    j observed i.  Symmetric with zero diagonal."""
    A = np.zeros((inst.n, inst.n))
    for i, nbrs in enumerate(inst.sensor_neighbors):
        A[i, nbrs] = 1.0
        A[nbrs, i] = 1.0
    np.fill_diagonal(A, 0.0)
    return A


def graph_is_connected(A: np.ndarray) -> bool:
    if A.shape[0] == 1:
        return True
    ncomp, _ = connected_components(csr_matrix(A), directed=False)
    return ncomp == 1


def g_i(inst: ProblemInstance, i: int, p: LiftedPoint) -> float:
    """Absolute squared-distance misfit of sensor i's observations.

    sum_j |d_ij^2 - Y_ii - Y_jj + 2 Y_ij| + sum_k |d_ik^2 - Y_ii - ||a_k||^2
    + 2 a_k . X_i|.  Depends only on X_i, Y_ii and the Y entries of i's
    neighborhood.
    """
    if not 0 <= i < inst.n:
        raise IndexError(f"sensor index {i} out of range")
    X, Y = p.X, p.Y
    total = 0.0
    nbrs = inst.sensor_neighbors[i]
    if nbrs.size:
        res = inst.dist_ss[i] ** 2 - Y[i, i] - Y[nbrs, nbrs] + 2.0 * Y[i, nbrs]
        total += float(np.abs(res).sum())
    anbrs = inst.anchor_neighbors[i]
    if anbrs.size:
        a = inst.anchors[anbrs]
        res = (inst.dist_sa[i] ** 2 - Y[i, i]
               - np.sum(a * a, axis=1) + 2.0 * a @ X[i])
        total += float(np.abs(res).sum())
    return total


def objective(inst: ProblemInstance, p: LiftedPoint) -> float:
    """Total misfit: sum of g_i over all sensors."""
    return sum(g_i(inst, i, p) for i in range(inst.n))


def generate_instance(n: int, m: int, d: int, radius: float, max_degree: int,
                      noise_factor: float, seed: int,
                      max_attempts: int = 1000) -> ProblemInstance:
    """Draw a random connected instance.

    Sensor and anchor locations are uniform on [0, 1]^d.  Each sensor
    observes the sensors (and anchors) strictly within `radius`, subsampled
    uniformly down to `max_degree` when there are more.  Each directed
    observation gets independent multiplicative Gaussian noise:
    d = d0 * (1 + noise_factor * eps).

    Draws are repeated with deterministically derived seeds until the
    communication graph is connected; `max_attempts` consecutive
    disconnected draws raise GenerationError (radius too small).
    """
    if n < 1 or m < 0 or d < 1:
        raise ValueError("need n >= 1, m >= 0, d >= 1")
    if radius <= 0 or noise_factor < 0 or max_degree < 0:
        raise ValueError("need radius > 0, noise_factor >= 0, max_degree >= 0")
    for attempt in range(max_attempts):
        # Stream-split the seed: attempt k uses SeedSequence(seed, spawn_key=(k,)),
        # so instances are reproducible bit-for-bit across platforms (PCG64).
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(seed, spawn_key=(attempt,))))
        locations = rng.uniform(0.0, 1.0, size=(n, d))
        anchors = rng.uniform(0.0, 1.0, size=(m, d))

        sensor_neighbors, anchor_neighbors = [], []
        for i in range(n):
            dists = np.linalg.norm(locations - locations[i], axis=1)
            in_range = np.flatnonzero((dists < radius) & (np.arange(n) != i))
            sensor_neighbors.append(_truncate(in_range, max_degree, rng))
            if m:
                adists = np.linalg.norm(anchors - locations[i], axis=1)
                a_in_range = np.flatnonzero(adists < radius)
            else:
                a_in_range = np.empty(0, dtype=int)
            anchor_neighbors.append(_truncate(a_in_range, max_degree, rng))

        dist_ss, dist_sa = [], []
        for i in range(n):
            nbrs = sensor_neighbors[i]
            true_d = np.linalg.norm(locations[nbrs] - locations[i], axis=1)
            eps = rng.standard_normal(nbrs.size)
            dist_ss.append(np.maximum(true_d * (1.0 + noise_factor * eps), 0.0))
            anbrs = anchor_neighbors[i]
            true_da = np.linalg.norm(anchors[anbrs] - locations[i], axis=1)
            eps = rng.standard_normal(anbrs.size)
            dist_sa.append(np.maximum(true_da * (1.0 + noise_factor * eps), 0.0))

        try:
            return ProblemInstance(d=d, n=n, m=m, anchors=anchors,
                                   sensor_neighbors=sensor_neighbors,
                                   anchor_neighbors=anchor_neighbors,
                                   dist_ss=dist_ss, dist_sa=dist_sa,
                                   truth=locations)
        except DisconnectedGraphError:
            continue
    raise GenerationError(
        f"no connected graph in {max_attempts} draws; radius {radius} too small")


def _truncate(candidates: np.ndarray, max_degree: int, rng) -> np.ndarray:
    if candidates.size <= max_degree:
        return np.sort(candidates)
    return np.sort(rng.choice(candidates, size=max_degree, replace=False))


# ---------------------------------------------------------------------------
# JSON serialization.  All arrays are row-major nested lists; indices 0-based.

def instance_to_dict(inst: ProblemInstance) -> dict:
    doc = {
        "d": inst.d, "n": inst.n, "m": inst.m,
        "anchors": inst.anchors.tolist(),
        "sensor_neighbors": [v.tolist() for v in inst.sensor_neighbors],
        "anchor_neighbors": [v.tolist() for v in inst.anchor_neighbors],
        "dist_ss": [v.tolist() for v in inst.dist_ss],
        "dist_sa": [v.tolist() for v in inst.dist_sa],
    }
    if inst.truth is not None:
        doc["truth"] = inst.truth.tolist()
    return doc


def instance_from_dict(doc: dict) -> ProblemInstance:
    try:
        return ProblemInstance(
            d=int(doc["d"]), n=int(doc["n"]), m=int(doc["m"]),
            anchors=np.asarray(doc["anchors"], dtype=float).reshape(int(doc["m"]), int(doc["d"])),
            sensor_neighbors=doc["sensor_neighbors"],
            anchor_neighbors=doc["anchor_neighbors"],
            dist_ss=doc["dist_ss"], dist_sa=doc["dist_sa"],
            truth=doc.get("truth"))
    except KeyError as exc:
        raise InvalidInstanceError(f"missing field {exc}") from exc


def save_instance(inst: ProblemInstance, path):
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


def load_instance(path) -> ProblemInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))
