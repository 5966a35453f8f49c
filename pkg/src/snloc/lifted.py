"""Lifted (X, Y) variables shared by every solver.

A lifted point pairs the n x d location block X with the n x n symmetric
block Y of the localization matrix [[I, X^T], [X, Y]].  The natural inner
product doubles the X block (X appears twice in the full matrix), so the
weighted norm used by the proximal operators is sqrt(2*||X||_F^2 + ||Y||_F^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LiftedPoint:
    """An (X, Y) pair; X is n x d, Y is n x n symmetric."""

    X: np.ndarray
    Y: np.ndarray

    def copy(self) -> "LiftedPoint":
        return LiftedPoint(self.X.copy(), self.Y.copy())

    def __add__(self, other: "LiftedPoint") -> "LiftedPoint":
        return LiftedPoint(self.X + other.X, self.Y + other.Y)

    def __sub__(self, other: "LiftedPoint") -> "LiftedPoint":
        return LiftedPoint(self.X - other.X, self.Y - other.Y)

    def __mul__(self, scalar: float) -> "LiftedPoint":
        return LiftedPoint(scalar * self.X, scalar * self.Y)

    __rmul__ = __mul__

    def __neg__(self) -> "LiftedPoint":
        return LiftedPoint(-self.X, -self.Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def lifted_zeros(n: int, d: int) -> LiftedPoint:
    return LiftedPoint(np.zeros((n, d)), np.zeros((n, n)))


def gram_point(X: np.ndarray) -> LiftedPoint:
    """The exact lift (X, X X^T) of a location matrix."""
    X = np.asarray(X, dtype=float)
    return LiftedPoint(X.copy(), X @ X.T)


def frobenius_norm(p: LiftedPoint) -> float:
    """Unweighted norm sqrt(||X||_F^2 + ||Y||_F^2)."""
    return float(np.sqrt(np.sum(p.X * p.X) + np.sum(p.Y * p.Y)))


def weighted_norm(p: LiftedPoint) -> float:
    """Norm of the Hilbert space the prox operators act in: the X block
    counts twice, matching the Frobenius norm of [[I, X^T], [X, Y]]."""
    return float(np.sqrt(2.0 * np.sum(p.X * p.X) + np.sum(p.Y * p.Y)))


def symmetry_defect(p: LiftedPoint) -> float:
    """max |Y - Y^T|; zero for a well-formed point."""
    return float(np.max(np.abs(p.Y - p.Y.T))) if p.Y.size else 0.0


def lifted_nbytes(n: int, d: int) -> int:
    """Wire size of one full lifted point (float64 X and Y blocks)."""
    return 8 * (n * d + n * n)
