"""GDT_TS, TM-score and Q-score plus the two reference-length conventions.

Each similarity measure is computed on the matched residue set first and
then rescaled by ``matched_len / ref_len``, so a partial match scores
proportionally lower than a full-length one and the two scale conventions
differ exactly by that factor. RMSD is a distance and is never rescaled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import TooFewResiduesError
from .matching import ResidueMatch, match_residues
from .model_io import StructureModel
from .superpose import kabsch_superpose


class ScaleMode(enum.Enum):
    MATCH_LENGTH = "match length"
    TOTAL_LENGTH = "total length"


class ComparisonMode(enum.Enum):
    ONE_VS_ALL = "first against all"
    ALL_VS_ALL = "all against all"


class Measure(enum.Enum):
    RMSD = "RMSD"
    GDT_TS = "GDT_TS"
    TM_SCORE = "TM-score"
    Q_SCORE = "Q-score"


MEASURE_ORDER = (Measure.RMSD, Measure.GDT_TS, Measure.TM_SCORE, Measure.Q_SCORE)

ALL_MEASURES = frozenset(MEASURE_ORDER)

MIN_RESIDUES = 3


@dataclass(frozen=True)
class MeasureValues:
    """Per-pair measure values; a field is set iff its measure was selected."""

    matched_len: int
    ref_len: int
    rmsd: float | None = None
    gdt_ts: float | None = None
    tm_score: float | None = None
    q_score: float | None = None


def reference_length(
    match: ResidueMatch,
    scale: ScaleMode,
    mode: ComparisonMode,
    target_len: int | None = None,
) -> int:
    """Denominator for the similarity measures.

    Match-length scale uses the number of matched residues. Total-length
    scale uses the target structure's length in first-against-all mode and
    the shorter structure of the pair in all-against-all mode.
    """
    if scale is ScaleMode.MATCH_LENGTH:
        return match.matched_len
    if mode is ComparisonMode.ONE_VS_ALL:
        if target_len is None or target_len < 1:
            raise ValueError("first-against-all total-length scale needs target_len")
        return target_len
    return min(match.len_a, match.len_b)


def _require_min(match: ResidueMatch, measure: str) -> None:
    if match.matched_len < MIN_RESIDUES:
        raise TooFewResiduesError(
            f"{measure} needs at least {MIN_RESIDUES} matched residues, "
            f"got {match.matched_len}"
        )


def gdt_cutoff_counts(match: ResidueMatch) -> np.ndarray:
    """Best per-cutoff superposable-residue counts for cutoffs 1/2/4/8 A."""
    _require_min(match, "GDT_TS")
    return _kernels.gdt_max_counts(
        match.coords_a,
        match.coords_b,
        _kernels.GDT_CUTOFFS,
        _kernels.SEED_WINDOWS,
        _kernels.MAX_REFIT_ROUNDS,
    )


def gdt_ts(match: ResidueMatch, ref_len: int) -> float:
    """Mean over the four cutoffs of the superposable percentage, in [0, 100]."""
    counts = gdt_cutoff_counts(match)
    raw = 100.0 * float(np.sum(counts)) / (4.0 * match.matched_len)
    return raw * (match.matched_len / ref_len)


def tm_d0(length: int) -> float:
    """Size-dependent distance scale, floored at 0.5 A for short chains."""
    if length > 15:
        return max(0.5, 1.24 * (length - 15) ** (1.0 / 3.0) - 1.8)
    return 0.5


def tm_score(match: ResidueMatch, ref_len: int) -> float:
    """Length-normalized similarity in (0, 1].

    The searched superposition set and the distance scale are those of the
    matched residue set, so changing the reference length only rescales the
    score proportionally.
    """
    _require_min(match, "TM-score")
    d0 = tm_d0(match.matched_len)
    best = _kernels.tm_best_sum(
        match.coords_a,
        match.coords_b,
        d0,
        _kernels.SEED_WINDOWS,
        _kernels.MAX_REFIT_ROUNDS,
    )
    raw = float(best) / match.matched_len
    return raw * (match.matched_len / ref_len)


def q_score(match: ResidueMatch, ref_len: int) -> float:
    """Superposition-free distance-map similarity in [0, 1]."""
    _require_min(match, "Q-score")
    raw = float(_kernels.q_raw_score(match.coords_a, match.coords_b))
    return raw * (match.matched_len / ref_len)


def compare_pair(
    a: StructureModel,
    b: StructureModel,
    measures: frozenset[Measure],
    scale: ScaleMode,
    mode: ComparisonMode,
    target_len: int | None = None,
) -> MeasureValues:
    """Match two models once and compute every selected measure.

    Raises the matching errors (no common residues, chain mismatch, mixed
    proteins) and :class:`TooFewResiduesError`; callers record those as
    per-pair failures.
    """
    if not measures:
        raise ValueError("measure set must be non-empty")
    match = match_residues(a, b)
    ref_len = reference_length(match, scale, mode, target_len)
    rmsd = gdt = tm = q = None
    if Measure.RMSD in measures:
        rmsd = kabsch_superpose(match.coords_a, match.coords_b).rmsd
    if Measure.GDT_TS in measures:
        gdt = gdt_ts(match, ref_len)
    if Measure.TM_SCORE in measures:
        tm = tm_score(match, ref_len)
    if Measure.Q_SCORE in measures:
        q = q_score(match, ref_len)
    return MeasureValues(
        matched_len=match.matched_len,
        ref_len=ref_len,
        rmsd=rmsd,
        gdt_ts=gdt,
        tm_score=tm,
        q_score=q,
    )


def parse_measures(names) -> frozenset[Measure]:
    """Resolve measure names (API vocabulary, case-insensitive) to a set."""
    by_value = {m.value.lower(): m for m in Measure}
    by_alias = {"rmsd": Measure.RMSD, "gdt_ts": Measure.GDT_TS,
                "tm_score": Measure.TM_SCORE, "tm-score": Measure.TM_SCORE,
                "q_score": Measure.Q_SCORE, "q-score": Measure.Q_SCORE}
    out = set()
    for name in names:
        key = name.strip().lower()
        measure = by_value.get(key) or by_alias.get(key)
        if measure is None:
            raise ValueError(f"unknown measure {name!r}")
        out.add(measure)
    if not out:
        raise ValueError("measure set must be non-empty")
    return frozenset(out)
