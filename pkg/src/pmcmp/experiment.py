"""Experiment lifecycle: configuration, pair generation, progress tracking,
results-file rendering and histogram aggregation.

An experiment moves Setup -> Uploading -> Running -> Finished or
FinishedWithErrors; failed pairs never block the rest, so partial results
stay available. Experiments are capped at 5000 pairwise comparisons.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CapExceededError,
    DuplicateResultError,
    NoDataError,
    StateError,
    TooFewStructuresError,
)
from .measures import (
    MEASURE_ORDER,
    ComparisonMode,
    Measure,
    MeasureValues,
    ScaleMode,
    parse_measures,
)

PAIR_CAP = 5000

HISTOGRAM_BINS = 20

RESULT_COLUMNS = (
    "model_a",
    "model_b",
    "matched",
    "ref_len",
    "rmsd",
    "gdt_ts",
    "tm_score",
    "q_score",
    "error",
)


class ExperimentState(enum.Enum):
    SETUP = "setup"
    UPLOADING = "uploading"
    RUNNING = "running"
    FINISHED = "finished"
    FINISHED_WITH_ERRORS = "finished_with_errors"


TERMINAL_STATES = (ExperimentState.FINISHED, ExperimentState.FINISHED_WITH_ERRORS)


@dataclass(frozen=True)
class ExperimentConfig:
    label: str
    measures: frozenset[Measure]
    mode: ComparisonMode
    scale: ScaleMode

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("label must be non-empty")
        if not self.measures:
            raise ValueError("measure set must be non-empty")


@dataclass(frozen=True)
class StructureRef:
    """Upload-order record of one stored structure."""

    id: str
    name: str
    digest: str
    length: int


@dataclass(frozen=True)
class Experiment:
    id: str
    config: ExperimentConfig
    created_at: float
    structures: tuple[StructureRef, ...] = ()
    state: ExperimentState = ExperimentState.SETUP
    pairs: tuple[tuple[int, int], ...] = ()
    completed_pairs: int = 0
    error_pairs: int = 0
    recorded_mask: int = 0
    distribution_done: bool = False

    @property
    def total_pairs(self) -> int:
        return len(self.pairs)

    def is_recorded(self, pair_index: int) -> bool:
        return bool((self.recorded_mask >> pair_index) & 1)


@dataclass(frozen=True)
class PairError:
    code: str
    message: str


@dataclass(frozen=True)
class ComparisonResult:
    """Outcome of one pair: values, or an error record."""

    pair_index: int
    id_a: str
    id_b: str
    name_a: str
    name_b: str
    values: MeasureValues | None = None
    error: PairError | None = None
    warning: str | None = None

    @property
    def errored(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class HistogramData:
    measure: str
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]


def generate_pairs(structure_ids, mode: ComparisonMode) -> list[tuple]:
    """Pair list in generation order.

    First-against-all pairs the first uploaded structure with every other
    one (N-1 pairs); all-against-all yields every unordered pair in upload
    order (N(N-1)/2 pairs). Raises when fewer than two structures were
    uploaded or the pair cap would be exceeded.
    """
    ids = list(structure_ids)
    n = len(ids)
    if n < 2:
        raise TooFewStructuresError(f"need at least 2 structures, got {n}")
    if mode is ComparisonMode.ONE_VS_ALL:
        count = n - 1
    else:
        count = n * (n - 1) // 2
    if count > PAIR_CAP:
        raise CapExceededError(
            f"{count} comparisons exceed the {PAIR_CAP}-comparison limit"
        )
    if mode is ComparisonMode.ONE_VS_ALL:
        return [(ids[0], ids[i]) for i in range(1, n)]
    return [(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n)]


def record_result(exp: Experiment, pair_index: int, errored: bool) -> Experiment:
    """Account one recorded pair; terminal state lands on the final one."""
    if pair_index < 0 or pair_index >= exp.total_pairs:
        raise ValueError(f"pair index {pair_index} out of range")
    if exp.is_recorded(pair_index):
        # checked before the state guard so a retried task whose first
        # attempt already landed reports duplicate, not a state error
        raise DuplicateResultError(
            f"pair {pair_index} of experiment {exp.id} already recorded"
        )
    if exp.state is not ExperimentState.RUNNING:
        raise StateError(f"experiment {exp.id} is {exp.state.value}, not running")
    completed = exp.completed_pairs + 1
    errors = exp.error_pairs + (1 if errored else 0)
    state = exp.state
    if completed == exp.total_pairs:
        state = (
            ExperimentState.FINISHED_WITH_ERRORS
            if errors
            else ExperimentState.FINISHED
        )
    return replace(
        exp,
        completed_pairs=completed,
        error_pairs=errors,
        recorded_mask=exp.recorded_mask | (1 << pair_index),
        state=state,
    )


def status_line(exp: Experiment) -> str:
    """One-line plain-text status."""
    state = exp.state
    if state is ExperimentState.SETUP:
        return "setup"
    if state is ExperimentState.UPLOADING:
        return f"uploading {len(exp.structures)} structures"
    if state is ExperimentState.RUNNING:
        return f"running {exp.completed_pairs}/{exp.total_pairs}"
    if state is ExperimentState.FINISHED:
        return "finished"
    return f"finished_with_errors {exp.error_pairs}"


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def results_file(exp: Experiment, results) -> bytes:
    """Tab-separated results document, one row per pair in generation order.

    Missing measures and non-errored rows render as ``-``; numeric cells
    carry four decimal places.
    """
    if exp.state not in TERMINAL_STATES:
        raise StateError(
            f"experiment {exp.id} is {exp.state.value}; results are not ready"
        )
    ordered = sorted(results, key=lambda r: r.pair_index)
    if len(ordered) != exp.total_pairs or any(
        r.pair_index != i for i, r in enumerate(ordered)
    ):
        raise ValueError("results do not cover the experiment's pairs exactly")

    measure_names = ",".join(m.value for m in MEASURE_ORDER if m in exp.config.measures)
    lines = [
        f"# label: {exp.config.label}",
        f"# mode: {exp.config.mode.value}",
        f"# scale: {exp.config.scale.value}",
        f"# measures: {measure_names}",
        "\t".join(RESULT_COLUMNS),
    ]
    for res in ordered:
        if res.errored:
            cells = [res.name_a, res.name_b, "-", "-", "-", "-", "-", "-",
                     res.error.code]
        else:
            v = res.values
            cells = [
                res.name_a,
                res.name_b,
                str(v.matched_len),
                str(v.ref_len),
                _cell(v.rmsd),
                _cell(v.gdt_ts),
                _cell(v.tm_score),
                _cell(v.q_score),
                "-",
            ]
        lines.append("\t".join(cells))
    return ("\n".join(lines) + "\n").encode("utf-8")


def histogram(values, measure: str, bins: int = HISTOGRAM_BINS) -> HistogramData:
    """Equal-width histogram over the observed range, last bin right-closed.

    A degenerate single-point range is widened by half a 0.05-wide bin on
    each side so every value still lands in one bin.
    """
    data = np.asarray(list(values), dtype=np.float64)
    if data.size == 0:
        raise NoDataError(f"no successful results carry {measure}")
    lo = float(np.min(data))
    hi = float(np.max(data))
    if lo == hi:
        lo -= 0.025
        hi += 0.025
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(data, bins=edges)
    return HistogramData(
        measure=measure,
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
    )


def histograms_for_results(exp: Experiment, results) -> list[HistogramData]:
    """One histogram per selected measure over the successful pairs."""
    out = []
    column = {
        Measure.RMSD: "rmsd",
        Measure.GDT_TS: "gdt_ts",
        Measure.TM_SCORE: "tm_score",
        Measure.Q_SCORE: "q_score",
    }
    for measure in MEASURE_ORDER:
        if measure not in exp.config.measures:
            continue
        values = [
            getattr(r.values, column[measure])
            for r in results
            if not r.errored and getattr(r.values, column[measure]) is not None
        ]
        if values:
            out.append(histogram(values, measure.value))
    return out


def histograms_document(histograms) -> bytes:
    """JSON document of histogram edges and counts for plotting clients."""
    doc = [
        {
            "measure": h.measure,
            "bin_edges": list(h.bin_edges),
            "counts": list(h.counts),
        }
        for h in histograms
    ]
    return json.dumps(doc, indent=2).encode("utf-8")


# --- store serialization -------------------------------------------------

def experiment_to_dict(exp: Experiment) -> dict:
    return {
        "id": exp.id,
        "label": exp.config.label,
        "measures": [m.value for m in MEASURE_ORDER if m in exp.config.measures],
        "mode": exp.config.mode.value,
        "scale": exp.config.scale.value,
        "created_at": exp.created_at,
        "structures": [
            {"id": s.id, "name": s.name, "digest": s.digest, "length": s.length}
            for s in exp.structures
        ],
        "state": exp.state.value,
        "pairs": [list(p) for p in exp.pairs],
        "completed_pairs": exp.completed_pairs,
        "error_pairs": exp.error_pairs,
        "recorded_mask": format(exp.recorded_mask, "x"),
        "distribution_done": exp.distribution_done,
    }


def experiment_from_dict(doc: dict) -> Experiment:
    config = ExperimentConfig(
        label=doc["label"],
        measures=parse_measures(doc["measures"]),
        mode=ComparisonMode(doc["mode"]),
        scale=ScaleMode(doc["scale"]),
    )
    return Experiment(
        id=doc["id"],
        config=config,
        created_at=doc["created_at"],
        structures=tuple(
            StructureRef(s["id"], s["name"], s["digest"], s["length"])
            for s in doc["structures"]
        ),
        state=ExperimentState(doc["state"]),
        pairs=tuple((p[0], p[1]) for p in doc["pairs"]),
        completed_pairs=doc["completed_pairs"],
        error_pairs=doc["error_pairs"],
        recorded_mask=int(doc["recorded_mask"], 16),
        distribution_done=doc["distribution_done"],
    )


def result_to_dict(res: ComparisonResult) -> dict:
    doc = {
        "pair_index": res.pair_index,
        "id_a": res.id_a,
        "id_b": res.id_b,
        "name_a": res.name_a,
        "name_b": res.name_b,
        "warning": res.warning,
    }
    if res.values is not None:
        v = res.values
        doc["values"] = {
            "matched_len": v.matched_len,
            "ref_len": v.ref_len,
            "rmsd": v.rmsd,
            "gdt_ts": v.gdt_ts,
            "tm_score": v.tm_score,
            "q_score": v.q_score,
        }
    if res.error is not None:
        doc["error"] = {"code": res.error.code, "message": res.error.message}
    return doc


def result_from_dict(doc: dict) -> ComparisonResult:
    values = None
    if "values" in doc:
        values = MeasureValues(**doc["values"])
    error = None
    if "error" in doc:
        error = PairError(code=doc["error"]["code"], message=doc["error"]["message"])
    return ComparisonResult(
        pair_index=doc["pair_index"],
        id_a=doc["id_a"],
        id_b=doc["id_b"],
        name_a=doc["name_a"],
        name_b=doc["name_b"],
        values=values,
        error=error,
        warning=doc.get("warning"),
    )
