"""Evaluation metrics and the per-iteration trace record."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def relative_error(X_hat: np.ndarray, X0: np.ndarray) -> float:
    """||X_hat - X0||_F / ||X0||_F."""
    X_hat = np.asarray(X_hat, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    denom = np.linalg.norm(X0)
    if denom == 0.0:
        raise ValueError("reference locations have zero norm")
    return float(np.linalg.norm(X_hat - X0) / denom)


def centrality(X_hat: np.ndarray, anchors: np.ndarray) -> float:
    """Mean distance of the estimates from the anchors' center of mass."""
    anchors = np.asarray(anchors, dtype=float)
    if anchors.shape[0] == 0:
        raise ValueError("centrality needs at least one anchor")
    a_bar = anchors.mean(axis=0)
    return float(np.mean(np.linalg.norm(np.asarray(X_hat) - a_bar, axis=1)))


def mean_distance(X_hat: np.ndarray, X0: np.ndarray) -> float:
    """Mean per-sensor Euclidean distance from the reference locations."""
    diff = np.asarray(X_hat, dtype=float) - np.asarray(X0, dtype=float)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


@dataclass
class MetricRecord:
    """One trace row.  rel_error/mean_distance are NaN when the instance
    carries no ground truth, centrality when it has no anchors."""

    iteration: int
    objective: float
    rel_error: float
    centrality: float
    mean_distance: float
    psd_residual: float
    consensus_residual: float

    CSV_FIELDS = ("iteration", "objective", "rel_error", "mean_distance",
                  "centrality", "psd_residual", "consensus_residual")

    def as_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]
