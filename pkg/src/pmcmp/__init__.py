"""Distributed comparison of protein structural models.

Evaluates sets of models of one protein against a target (1:N) or against
each other (N:N) with RMSD, GDT_TS, TM-score and Q-score on the common
residue subset, behind a token-bucket task scheduler, a batch-job REST
service and a CLI.
"""

from .engine import Engine
from .errors import PmCmpError
from .matching import ResidueMatch, match_residues
from .measures import (
    ComparisonMode,
    Measure,
    MeasureValues,
    ScaleMode,
    compare_pair,
    gdt_ts,
    q_score,
    reference_length,
    tm_score,
)
from .model_io import CaAtom, ResidueKey, StructureModel, model_digest, parse_pdb
from .superpose import RigidTransform, SuperpositionResult, kabsch_superpose, rmsd_on_subset

__version__ = "0.1.0"

__all__ = [
    "CaAtom",
    "ComparisonMode",
    "Engine",
    "Measure",
    "MeasureValues",
    "PmCmpError",
    "ResidueKey",
    "ResidueMatch",
    "RigidTransform",
    "ScaleMode",
    "StructureModel",
    "SuperpositionResult",
    "compare_pair",
    "gdt_ts",
    "kabsch_superpose",
    "match_residues",
    "model_digest",
    "parse_pdb",
    "q_score",
    "reference_length",
    "rmsd_on_subset",
    "tm_score",
    "__version__",
]
