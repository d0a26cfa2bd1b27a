"""Hot numeric kernels: rigid-body fitting and the superposition searches.

Each kernel is written against the numba nopython subset and compiled with
``@njit(cache=True, nogil=True)`` at import time. Setting ``PMCMP_NUMBA=0``
(or ``off``/``false``/``no``) skips compilation and runs the very same
functions as plain numpy, which is the fallback wherever numba is missing.
``pmcmp bench`` times the two paths against each other.

Kernels release the GIL when compiled, so scheduler workers overlap their
comparison work on multicore hosts.
"""

from __future__ import annotations

import os

import numpy as np

GDT_CUTOFFS = np.array([1.0, 2.0, 4.0, 8.0], dtype=np.float64)
SEED_WINDOWS = np.array([3, 5, 7], dtype=np.int64)
MAX_REFIT_ROUNDS = 10


def _numba_requested() -> bool:
    flag = os.environ.get("PMCMP_NUMBA", "").strip().lower()
    return flag not in {"0", "off", "false", "no"}


def kabsch_fit(a, b):
    """Least-squares rigid fit of point set ``a`` onto ``b``.

    Returns ``(rotation, translation, rmsd)`` where rotation is a proper
    3x3 matrix and the fitted positions are ``a @ rotation.T + translation``.
    Degenerate sets (single point, collinear points) fall out of the SVD with
    the usual determinant sign correction and still yield a valid minimizer.
    """
    n = a.shape[0]
    centroid_a = np.sum(a, axis=0) / n
    centroid_b = np.sum(b, axis=0) / n
    ac = a - centroid_a
    bc = b - centroid_b
    cov = ac.T @ bc
    u, _s, vt = np.linalg.svd(cov)
    flip = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        flip[2, 2] = -1.0
    rotation = vt.T @ flip @ u.T
    diff = ac @ rotation.T - bc
    rmsd = np.sqrt(np.sum(diff * diff) / n)
    translation = centroid_b - np.dot(rotation, centroid_a)
    return rotation, translation, rmsd


def pair_distances(a, b, rotation, translation):
    """Per-residue distances between transformed ``a`` and ``b``."""
    diff = a @ rotation.T + translation - b
    return np.sqrt(np.sum(diff * diff, axis=1))


def _count_all_cutoffs(a, b, rotation, translation, cutoffs, best):
    """Update per-cutoff bests from one candidate transform; returns distances."""
    dist = pair_distances(a, b, rotation, translation)
    for ci in range(cutoffs.shape[0]):
        count = np.sum(dist <= cutoffs[ci])
        if count > best[ci]:
            best[ci] = count
    return dist


def _gdt_chain(a, b, rotation, translation, cut, cutoffs, best, rounds):
    """Refit chain with inclusion cutoff ``cut`` from one seed transform.

    Every fit along the chain is a candidate for all cutoffs. The chain
    stops when the included set repeats or has fewer than 3 residues
    (refitting fewer points is underconstrained).
    """
    n = a.shape[0]
    prev = np.zeros(n, dtype=np.bool_)
    have_prev = False
    for round_ in range(rounds + 1):
        dist = _count_all_cutoffs(a, b, rotation, translation, cutoffs, best)
        included = dist <= cut
        count = np.sum(included)
        if count < 3:
            break
        if have_prev and np.all(included == prev):
            break
        if round_ == rounds:
            break
        prev = included
        have_prev = True
        rotation, translation, _ = kabsch_fit(a[included], b[included])


TRIPLE_SEED_LIMIT = 16


def gdt_max_counts(a, b, cutoffs, windows, rounds):
    """Per-cutoff maximum count of residues superposable within the cutoff.

    Deterministic seed-and-extend search. Seeds are every contiguous window
    of each seed length plus, for small inputs (up to 16 residues), every
    index triple; each seed fit starts a refit chain per inclusion cutoff
    and every candidate transform along the way is counted against all
    cutoffs. The full-set fit is always a candidate. All candidates are
    least-squares fits of residue subsets of size >= 3, so no count can beat
    an exhaustive all-subsets search. Ties keep the first-found maximum.
    """
    n = a.shape[0]
    ncut = cutoffs.shape[0]
    best = np.zeros(ncut, dtype=np.int64)

    rotation, translation, _ = kabsch_fit(a, b)
    _count_all_cutoffs(a, b, rotation, translation, cutoffs, best)

    for ci in range(ncut):
        cut = cutoffs[ci]
        for wi in range(windows.shape[0]):
            w = windows[wi]
            if w > n:
                continue
            for start in range(n - w + 1):
                rotation, translation, _ = kabsch_fit(
                    a[start : start + w], b[start : start + w]
                )
                _gdt_chain(a, b, rotation, translation, cut, cutoffs, best, rounds)
        if n <= TRIPLE_SEED_LIMIT:
            idx = np.empty(3, dtype=np.int64)
            for i in range(n - 2):
                for j in range(i + 1, n - 1):
                    for k in range(j + 1, n):
                        idx[0] = i
                        idx[1] = j
                        idx[2] = k
                        rotation, translation, _ = kabsch_fit(a[idx], b[idx])
                        _gdt_chain(
                            a, b, rotation, translation, cut, cutoffs, best, rounds
                        )
    return best


def tm_best_sum(a, b, d0, windows, rounds):
    """Maximum over searched superpositions of ``sum_i 1/(1+(d_i/d0)^2)``.

    Same seed-and-extend scheme as :func:`gdt_max_counts` with inclusion
    cutoff ``d0``; the sum always runs over all residues, not only the
    included ones.
    """
    n = a.shape[0]
    d0sq = d0 * d0

    rotation, translation, _ = kabsch_fit(a, b)
    dist = pair_distances(a, b, rotation, translation)
    best = np.sum(1.0 / (1.0 + (dist * dist) / d0sq))

    for wi in range(windows.shape[0]):
        w = windows[wi]
        if w > n:
            continue
        for start in range(n - w + 1):
            rotation, translation, _ = kabsch_fit(
                a[start : start + w], b[start : start + w]
            )
            prev = np.zeros(n, dtype=np.bool_)
            have_prev = False
            for round_ in range(rounds + 1):
                dist = pair_distances(a, b, rotation, translation)
                total = np.sum(1.0 / (1.0 + (dist * dist) / d0sq))
                if total > best:
                    best = total
                included = dist <= d0
                count = np.sum(included)
                if count < 3:
                    break
                if have_prev and np.all(included == prev):
                    break
                if round_ == rounds:
                    break
                prev = included
                have_prev = True
                rotation, translation, _ = kabsch_fit(a[included], b[included])
    return best


def q_raw_score(a, b):
    """Distance-map similarity over residue pairs at sequence separation >= 2.

    ``(2/((N-1)(N-2))) * sum_{j>i+1} exp(-(d_ij^a - d_ij^b)^2 / (2*sep^0.3))``
    with ``sep = j - i``; superposition-free by construction.
    """
    n = a.shape[0]
    total = 0.0
    for i in range(n - 2):
        for j in range(i + 2, n):
            dxa = a[i, 0] - a[j, 0]
            dya = a[i, 1] - a[j, 1]
            dza = a[i, 2] - a[j, 2]
            da = np.sqrt(dxa * dxa + dya * dya + dza * dza)
            dxb = b[i, 0] - b[j, 0]
            dyb = b[i, 1] - b[j, 1]
            dzb = b[i, 2] - b[j, 2]
            db = np.sqrt(dxb * dxb + dyb * dyb + dzb * dzb)
            sep = float(j - i)
            sigma_sq = sep**0.3
            diff = da - db
            total += np.exp(-(diff * diff) / (2.0 * sigma_sq))
    return 2.0 * total / ((n - 1.0) * (n - 2.0))


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:
        _jit = njit(cache=True, nogil=True)
        kabsch_fit = _jit(kabsch_fit)
        pair_distances = _jit(pair_distances)
        _count_all_cutoffs = _jit(_count_all_cutoffs)
        _gdt_chain = _jit(_gdt_chain)
        gdt_max_counts = _jit(gdt_max_counts)
        tm_best_sum = _jit(tm_best_sum)
        q_raw_score = _jit(q_raw_score)
        NUMBA_ENABLED = True


def warmup() -> None:
    """Trigger JIT compilation so timed code paths run at full speed."""
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, 3))
    b = a + rng.normal(scale=0.2, size=(8, 3))
    kabsch_fit(a, b)
    gdt_max_counts(a, b, GDT_CUTOFFS, SEED_WINDOWS, 2)
    tm_best_sum(a, b, 0.5, SEED_WINDOWS, 2)
    q_raw_score(a, b)
