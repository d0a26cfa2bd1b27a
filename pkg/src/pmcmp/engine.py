"""Facade wiring store, cache, queue, bucket and workers into one engine.

The HTTP service and the CLI both drive this class, so the two front ends
produce byte-identical results files for the same inputs and configuration.
"""

from __future__ import annotations

import time
import uuid

from . import experiment as exp_mod
from .config import EngineConfig
from .errors import (
    EntityTooLargeError,
    StateError,
    StoreError,
    TooFewStructuresError,
)
from .measures import ComparisonMode, ScaleMode, parse_measures
from .model_io import model_digest, parse_pdb
from .scheduler import (
    StructureCache,
    Task,
    TaskKind,
    TaskQueue,
    TaskRunner,
    TokenBucket,
    WorkerPool,
    chunk_task_id,
    result_key,
)
from .store import STRUCTURE_BODY_LIMIT, FileStore, Kind


def _new_id() -> str:
    return uuid.uuid4().hex[:12]


class Engine:
    def __init__(
        self,
        data_dir,
        config: EngineConfig | None = None,
        store: FileStore | None = None,
    ):
        self.config = config or EngineConfig()
        self.store = store if store is not None else FileStore(data_dir)
        self.cache = StructureCache(self.config.cache_capacity)
        self.queue = TaskQueue(self.store)
        self.bucket = TokenBucket(self.config.bucket_size, self.config.queue_rate)
        self.runner = TaskRunner(self.store, self.cache, self.queue, self.config)
        self.pool = WorkerPool(
            self.queue,
            self.bucket,
            self.runner,
            workers=self.config.workers,
            max_retries=self.config.max_retries,
        )
        self._started = False

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if not self._started:
            self.pool.start()
            self._started = True

    def stop(self, drain: bool = True) -> None:
        if self._started:
            self.pool.stop(drain=drain)
            self._started = False

    def __enter__(self) -> "Engine":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- experiment workflow -------------------------------------------------

    def create_experiment(
        self, label: str, measures, mode: ComparisonMode, scale: ScaleMode
    ) -> str:
        config = exp_mod.ExperimentConfig(
            label=label,
            measures=measures if isinstance(measures, frozenset) else parse_measures(measures),
            mode=mode,
            scale=scale,
        )
        exp = exp_mod.Experiment(
            id=_new_id(),
            config=config,
            created_at=time.time(),
        )
        self.store.put_json(Kind.EXPERIMENT, exp.id, exp_mod.experiment_to_dict(exp))
        return exp.id

    def experiment(self, exp_id: str) -> exp_mod.Experiment:
        return exp_mod.experiment_from_dict(self.store.get_json(Kind.EXPERIMENT, exp_id))

    def add_structure(self, exp_id: str, filename: str, body: bytes) -> exp_mod.StructureRef:
        """Parse eagerly and persist one uploaded structure.

        Parse problems surface here, at upload time, not when the run later
        needs the model.
        """
        exp = self.experiment(exp_id)  # NotFoundError for unknown ids
        if exp.state not in (
            exp_mod.ExperimentState.SETUP,
            exp_mod.ExperimentState.UPLOADING,
        ):
            raise StateError(
                f"experiment {exp_id} is {exp.state.value}; uploads are closed"
            )
        if len(body) > STRUCTURE_BODY_LIMIT:
            raise EntityTooLargeError(
                f"{filename}: {len(body)} bytes exceeds the "
                f"{STRUCTURE_BODY_LIMIT}-byte structure limit"
            )
        name = filename.rsplit("/", 1)[-1]
        if "." in name:
            name = name.rsplit(".", 1)[0]
        model = parse_pdb(body, name)
        digest = model_digest(model)

        ref_holder: list[exp_mod.StructureRef] = []

        def mutate(doc: dict) -> dict:
            current = exp_mod.experiment_from_dict(doc)
            if current.state not in (
                exp_mod.ExperimentState.SETUP,
                exp_mod.ExperimentState.UPLOADING,
            ):
                raise StateError(
                    f"experiment {exp_id} is {current.state.value}; uploads are closed"
                )
            ref = exp_mod.StructureRef(
                id=f"{exp_id}-s{len(current.structures):04d}",
                name=name,
                digest=digest,
                length=model.declared_length,
            )
            ref_holder.clear()
            ref_holder.append(ref)
            doc["structures"] = doc["structures"] + [
                {
                    "id": ref.id,
                    "name": ref.name,
                    "digest": ref.digest,
                    "length": ref.length,
                }
            ]
            doc["state"] = exp_mod.ExperimentState.UPLOADING.value
            return doc

        self.store.update_experiment_atomic(exp_id, mutate)
        ref = ref_holder[0]
        self.store.put(Kind.STRUCTURE, ref.id, body)
        self.cache.put(digest, model)
        return ref

    def start_experiment(self, exp_id: str) -> int:
        """Generate pairs, flip to Running and enqueue the first chunk.

        Returns the total pair count; the comparison itself happens on the
        worker pool, so this comes back immediately.
        """
        def mutate(doc: dict) -> dict:
            current = exp_mod.experiment_from_dict(doc)
            if current.state is not exp_mod.ExperimentState.UPLOADING:
                if current.state is exp_mod.ExperimentState.SETUP:
                    raise TooFewStructuresError(
                        f"experiment {exp_id} has no structures"
                    )
                raise StateError(
                    f"experiment {exp_id} is {current.state.value}; already started"
                )
            pairs = exp_mod.generate_pairs(
                range(len(current.structures)), current.config.mode
            )
            doc["pairs"] = [list(p) for p in pairs]
            doc["state"] = exp_mod.ExperimentState.RUNNING.value
            return doc

        updated = self.store.update_experiment_atomic(exp_id, mutate)
        self.queue.put(
            Task(
                kind=TaskKind.DISTRIBUTE_CHUNK,
                task_id=chunk_task_id(exp_id, 0),
                payload={"exp_id": exp_id, "cursor": 0},
            )
        )
        return len(updated["pairs"])

    def status_line(self, exp_id: str) -> str:
        return exp_mod.status_line(self.experiment(exp_id))

    def results(self, exp_id: str) -> list[exp_mod.ComparisonResult]:
        exp = self.experiment(exp_id)
        out = []
        for pair_index in range(exp.total_pairs):
            doc = self.store.get_json(Kind.RESULT, result_key(exp_id, pair_index))
            out.append(exp_mod.result_from_dict(doc))
        return out

    def results_bytes(self, exp_id: str) -> bytes:
        exp = self.experiment(exp_id)
        if exp.state not in exp_mod.TERMINAL_STATES:
            raise StateError(
                f"experiment {exp_id} is {exp.state.value}; results are not ready"
            )
        return exp_mod.results_file(exp, self.results(exp_id))

    def histograms_bytes(self, exp_id: str) -> bytes:
        exp = self.experiment(exp_id)
        if exp.state not in exp_mod.TERMINAL_STATES:
            raise StateError(
                f"experiment {exp_id} is {exp.state.value}; results are not ready"
            )
        hists = exp_mod.histograms_for_results(exp, self.results(exp_id))
        return exp_mod.histograms_document(hists)

    def wait_until_done(
        self, exp_id: str, timeout: float = 300.0, poll: float = 0.05
    ) -> exp_mod.Experiment:
        deadline = time.monotonic() + timeout
        while True:
            try:
                exp = self.experiment(exp_id)
            except StoreError:
                # a transiently failing store should not abort the wait
                exp = None
            if exp is not None and exp.state in exp_mod.TERMINAL_STATES:
                return exp
            if time.monotonic() > deadline:
                state = exp.state.value if exp is not None else "unknown"
                raise TimeoutError(
                    f"experiment {exp_id} still {state} after {timeout}s"
                )
            time.sleep(poll)

    def schedule_cleanup(self, retention_days: float | None = None) -> None:
        self.queue.put(
            Task(
                kind=TaskKind.CLEANUP_EXPIRED,
                task_id=f"cleanup-{_new_id()}",
                payload={
                    "now": time.time(),
                    "retention_days": (
                        self.config.retention_days
                        if retention_days is None
                        else retention_days
                    ),
                },
            )
        )
