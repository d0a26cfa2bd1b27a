"""Optimal rigid-body superposition and the RMSD measure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    """Proper rotation plus translation; applied as ``p @ R.T + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class SuperpositionResult:
    transform: RigidTransform
    rmsd: float


def _as_coords(points, label: str) -> np.ndarray:
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{label} must be an (N, 3) coordinate array")
    return arr


def kabsch_superpose(coords_a, coords_b) -> SuperpositionResult:
    """Least-squares fit of ``coords_a`` onto ``coords_b``.

    The returned rotation is orthogonal with determinant +1; ``rmsd`` is
    ``sqrt(sum ||T(a_i) - b_i||^2 / n)`` under the minimizing transform.
    """
    a = _as_coords(coords_a, "coords_a")
    b = _as_coords(coords_b, "coords_b")
    if a.shape[0] != b.shape[0]:
        raise ValueError("coordinate sets must have equal length")
    if a.shape[0] == 0:
        raise ValueError("coordinate sets must be non-empty")
    rotation, translation, rmsd = _kernels.kabsch_fit(a, b)
    return SuperpositionResult(RigidTransform(rotation, translation), float(rmsd))


def rmsd_on_subset(match, subset) -> SuperpositionResult:
    """Fit only the ``subset`` residues of a match; transform covers all.

    ``subset`` holds indices into the match's paired coordinate arrays. The
    reported rmsd is over the subset; the transform is reusable on the full
    residue set (that is what the GDT/TM searches iterate on).
    """
    idx = np.asarray(subset, dtype=np.intp)
    if idx.ndim != 1 or idx.shape[0] == 0:
        raise IndexError("subset must be a non-empty index list")
    n = match.coords_a.shape[0]
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError("subset index out of range")
    return kabsch_superpose(match.coords_a[idx], match.coords_b[idx])
