"""Exception taxonomy shared by the engine, the CLI and the HTTP service.

Every error carries a stable ``code`` string; the service maps codes to HTTP
statuses and the results file records them for failed pairs.
"""


class PmCmpError(Exception):
    code = "INTERNAL"


class ComparisonError(PmCmpError):
    """Deterministic per-pair failure: recorded on the pair, never retried."""

    code = "COMPARISON_ERROR"


class FormatError(ComparisonError):
    code = "FORMAT_ERROR"


class MultiChainError(ComparisonError):
    code = "MULTI_CHAIN"


class NoCommonResiduesError(ComparisonError):
    code = "NO_COMMON_RESIDUES"


class ChainMismatchError(ComparisonError):
    code = "CHAIN_MISMATCH"


class MixedProteinError(ComparisonError):
    code = "MIXED_PROTEINS"


class TooFewResiduesError(ComparisonError):
    code = "TOO_FEW_RESIDUES"


class TooFewStructuresError(PmCmpError):
    code = "TOO_FEW_STRUCTURES"


class CapExceededError(PmCmpError):
    code = "CAP_EXCEEDED"


class DuplicateResultError(PmCmpError):
    code = "DUPLICATE_RESULT"


class StateError(PmCmpError):
    code = "STATE_ERROR"


class NoDataError(PmCmpError):
    code = "NO_DATA"


class StoreError(PmCmpError):
    code = "STORE_ERROR"


class NotFoundError(StoreError):
    code = "NOT_FOUND"


class EntityTooLargeError(StoreError):
    code = "ENTITY_TOO_LARGE"


class ConflictRetryExhausted(StoreError):
    code = "CONFLICT_RETRY_EXHAUSTED"
