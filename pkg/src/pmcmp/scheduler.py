"""Token-bucket gated task queue, structure cache and worker pool.

Comparison work is cut into small tasks: one ComparePair task per pair,
DistributeChunk tasks that enqueue pairs in bounded batches (each batch
scheduling its successor, so distribution resumes from a cursor), and
CleanupExpired for retention. Workers take the oldest task, gated by the
token bucket; transient failures requeue the task up to the retry budget,
after which an error result is recorded so the experiment still terminates
with partial results.
"""

from __future__ import annotations

import collections
import enum
import logging
import threading
import time
from dataclasses import dataclass, field

from . import experiment as exp_mod
from .config import EngineConfig
from .errors import (
    ComparisonError,
    DuplicateResultError,
    NotFoundError,
    StateError,
    StoreError,
)
from .matching import match_residues
from .measures import ComparisonMode, Measure, ScaleMode, compare_pair, parse_measures
from .model_io import StructureModel, parse_pdb
from .store import FileStore, Kind

logger = logging.getLogger("pmcmp.scheduler")


class TaskKind(enum.Enum):
    COMPARE_PAIR = "compare_pair"
    DISTRIBUTE_CHUNK = "distribute_chunk"
    CLEANUP_EXPIRED = "cleanup_expired"


@dataclass
class Task:
    kind: TaskKind
    task_id: str
    payload: dict
    attempts: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "task_id": self.task_id,
            "payload": self.payload,
            "attempts": self.attempts,
        }

    @staticmethod
    def from_dict(doc: dict) -> "Task":
        return Task(
            kind=TaskKind(doc["kind"]),
            task_id=doc["task_id"],
            payload=doc["payload"],
            attempts=doc.get("attempts", 0),
        )


class TokenBucket:
    """Classic token bucket: capacity tokens, steady refill, one per task.

    In any window of length T the number of successful acquisitions is
    bounded by ``capacity + refill_rate * T``.
    """

    def __init__(self, capacity: int, refill_rate: float, now: float | None = None):
        if capacity < 1 or refill_rate <= 0:
            raise ValueError("capacity must be >= 1 and refill_rate > 0")
        self.capacity = capacity
        self.refill_rate = refill_rate
        self.tokens = float(capacity)
        self.last_refill = time.monotonic() if now is None else now
        self._lock = threading.Lock()

    def try_acquire(self, now: float | None = None) -> bool:
        now = time.monotonic() if now is None else now
        with self._lock:
            if now > self.last_refill:
                self.tokens = min(
                    float(self.capacity),
                    self.tokens + self.refill_rate * (now - self.last_refill),
                )
            self.last_refill = max(self.last_refill, now)
            if self.tokens >= 1.0:
                self.tokens -= 1.0
                return True
            return False


def obeys_bucket_bound(times, capacity: int, rate: float, slack: float = 1e-6) -> bool:
    """Check a dispatch log against ``count <= capacity + rate * T`` for
    every window [t_i, t_j]."""
    ts = sorted(times)
    for i in range(len(ts)):
        for j in range(i, len(ts)):
            window = ts[j] - ts[i]
            if j - i + 1 > capacity + rate * window + slack:
                return False
    return True


class StructureCache:
    """Bounded LRU map from model digest to parsed structure."""

    def __init__(self, capacity: int = 256):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._entries: collections.OrderedDict[str, StructureModel] = (
            collections.OrderedDict()
        )
        self.hits = 0
        self.misses = 0

    def get(self, digest: str) -> StructureModel | None:
        with self._lock:
            model = self._entries.get(digest)
            if model is None:
                self.misses += 1
                return None
            self._entries.move_to_end(digest)
            self.hits += 1
            return model

    def put(self, digest: str, model: StructureModel) -> None:
        with self._lock:
            self._entries[digest] = model
            self._entries.move_to_end(digest)
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)

    def __len__(self) -> int:
        return len(self._entries)


class TaskQueue:
    """FIFO queue with pending-task persistence and id-based dedupe.

    Persistence is best-effort: the in-memory queue is authoritative while
    the process lives, and persisted pending tasks allow a restarted process
    to resume.
    """

    def __init__(self, store: FileStore | None = None):
        self._store = store
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self._items: collections.deque[Task] = collections.deque()
        self._pending_ids: set[str] = set()
        self._seq = 0

    def put(self, task: Task) -> bool:
        """Enqueue unless a task with the same id is already pending."""
        with self._lock:
            if task.task_id in self._pending_ids:
                return False
            self._pending_ids.add(task.task_id)
            self._items.append(task)
            self._seq += 1
            seq = self._seq
            self._not_empty.notify()
        self._persist(task, seq)
        return True

    def _persist(self, task: Task, seq: int) -> None:
        if self._store is None:
            return
        try:
            doc = task.to_dict()
            doc["seq"] = seq
            self._store.put_json(Kind.TASK, task.task_id, doc)
        except StoreError:
            logger.warning("could not persist pending task %s", task.task_id)

    def take(self, timeout: float | None = None) -> Task | None:
        with self._not_empty:
            if not self._items and timeout:
                self._not_empty.wait(timeout)
            if not self._items:
                return None
            return self._items.popleft()

    def requeue(self, task: Task) -> None:
        with self._lock:
            self._items.append(task)
            self._not_empty.notify()

    def done(self, task: Task) -> None:
        with self._lock:
            self._pending_ids.discard(task.task_id)
        if self._store is not None:
            try:
                self._store.delete(Kind.TASK, task.task_id)
            except StoreError:
                logger.warning("could not clear persisted task %s", task.task_id)

    def recover(self) -> int:
        """Reload persisted pending tasks (ordered by enqueue sequence)."""
        if self._store is None:
            return 0
        keys, _ = self._store.list_by_kind(Kind.TASK)
        docs = []
        for key in keys:
            try:
                docs.append(self._store.get_json(Kind.TASK, key))
            except StoreError:
                continue
        docs.sort(key=lambda d: d.get("seq", 0))
        count = 0
        for doc in docs:
            task = Task.from_dict(doc)
            with self._lock:
                if task.task_id in self._pending_ids:
                    continue
                self._pending_ids.add(task.task_id)
                self._items.append(task)
                self._not_empty.notify()
            count += 1
        return count

    def pending_count(self) -> int:
        with self._lock:
            return len(self._pending_ids)


def compare_task_id(exp_id: str, pair_index: int) -> str:
    return f"{exp_id}-p{pair_index:05d}"


def chunk_task_id(exp_id: str, cursor: int) -> str:
    return f"{exp_id}-c{cursor:05d}"


def result_key(exp_id: str, pair_index: int) -> str:
    return f"{exp_id}-p{pair_index:05d}"


class TaskRunner:
    """Executes tasks against the store, cache and queue."""

    def __init__(
        self,
        store: FileStore,
        cache: StructureCache,
        queue: TaskQueue,
        config: EngineConfig | None = None,
    ):
        self.store = store
        self.cache = cache
        self.queue = queue
        self.config = config or EngineConfig()

    # -- model access ------------------------------------------------------

    def fetch_model(self, structure_id: str, name: str, digest: str) -> StructureModel:
        model = self.cache.get(digest)
        if model is not None:
            return model
        body = self.store.get(Kind.STRUCTURE, structure_id)
        model = parse_pdb(body, name)
        self.cache.put(digest, model)
        return model

    # -- task dispatch -------------------------------------------------------

    def run(self, task: Task) -> None:
        if task.kind is TaskKind.COMPARE_PAIR:
            self._run_compare(task)
        elif task.kind is TaskKind.DISTRIBUTE_CHUNK:
            self._run_distribute(task)
        elif task.kind is TaskKind.CLEANUP_EXPIRED:
            self._run_cleanup(task)
        else:
            raise ValueError(f"unknown task kind {task.kind}")

    def _run_compare(self, task: Task) -> None:
        p = task.payload
        pair_index = p["pair_index"]
        exp_id = p["exp_id"]
        result = None
        try:
            model_a = self.fetch_model(p["id_a"], p["name_a"], p["digest_a"])
            model_b = self.fetch_model(p["id_b"], p["name_b"], p["digest_b"])
            warning = None
            match = match_residues(model_a, model_b)
            if match.name_mismatches:
                warning = (
                    f"{match.name_mismatches} matched residues disagree on "
                    "residue name"
                )
            values = compare_pair(
                model_a,
                model_b,
                parse_measures(p["measures"]),
                ScaleMode(p["scale"]),
                ComparisonMode(p["mode"]),
                p.get("target_len"),
            )
            result = exp_mod.ComparisonResult(
                pair_index=pair_index,
                id_a=p["id_a"],
                id_b=p["id_b"],
                name_a=p["name_a"],
                name_b=p["name_b"],
                values=values,
                warning=warning,
            )
        except ComparisonError as exc:
            result = exp_mod.ComparisonResult(
                pair_index=pair_index,
                id_a=p["id_a"],
                id_b=p["id_b"],
                name_a=p["name_a"],
                name_b=p["name_b"],
                error=exp_mod.PairError(code=exc.code, message=str(exc)),
            )
        self._persist_and_record(exp_id, result)

    def _persist_and_record(self, exp_id: str, result) -> None:
        self.store.put_json(
            Kind.RESULT,
            result_key(exp_id, result.pair_index),
            exp_mod.result_to_dict(result),
        )
        self.record_pair(exp_id, result.pair_index, result.errored)

    def record_pair(self, exp_id: str, pair_index: int, errored: bool) -> None:
        def mutate(doc: dict) -> dict:
            exp = exp_mod.experiment_from_dict(doc)
            updated = exp_mod.record_result(exp, pair_index, errored)
            return exp_mod.experiment_to_dict(updated)

        try:
            self.store.update_experiment_atomic(exp_id, mutate)
        except DuplicateResultError:
            # a retried task whose earlier attempt already recorded the pair
            pass

    def _run_distribute(self, task: Task) -> None:
        p = task.payload
        exp_id = p["exp_id"]
        cursor = p["cursor"]
        exp = exp_mod.experiment_from_dict(self.store.get_json(Kind.EXPERIMENT, exp_id))
        if exp.state is not exp_mod.ExperimentState.RUNNING:
            raise StateError(f"experiment {exp_id} is {exp.state.value}, not running")
        if cursor < 0 or cursor > exp.total_pairs:
            raise ValueError(f"cursor {cursor} out of range")

        config = exp.config
        measures = [m.value for m in exp_mod.MEASURE_ORDER if m in config.measures]
        target_len = None
        if config.mode is ComparisonMode.ONE_VS_ALL:
            target_len = exp.structures[0].length
        end = min(cursor + self.config.chunk_budget, exp.total_pairs)
        for pair_index in range(cursor, end):
            ia, ib = exp.pairs[pair_index]
            ref_a = exp.structures[ia]
            ref_b = exp.structures[ib]
            self.queue.put(
                Task(
                    kind=TaskKind.COMPARE_PAIR,
                    task_id=compare_task_id(exp_id, pair_index),
                    payload={
                        "exp_id": exp_id,
                        "pair_index": pair_index,
                        "id_a": ref_a.id,
                        "id_b": ref_b.id,
                        "name_a": ref_a.name,
                        "name_b": ref_b.name,
                        "digest_a": ref_a.digest,
                        "digest_b": ref_b.digest,
                        "measures": measures,
                        "mode": config.mode.value,
                        "scale": config.scale.value,
                        "target_len": target_len,
                    },
                )
            )
        if end < exp.total_pairs:
            self.queue.put(
                Task(
                    kind=TaskKind.DISTRIBUTE_CHUNK,
                    task_id=chunk_task_id(exp_id, end),
                    payload={"exp_id": exp_id, "cursor": end},
                )
            )
        else:
            def mark_done(doc: dict) -> dict:
                doc["distribution_done"] = True
                return doc

            self.store.update_experiment_atomic(exp_id, mark_done)

    def _run_cleanup(self, task: Task) -> None:
        now = task.payload.get("now", time.time())
        retention = task.payload.get("retention_days", self.config.retention_days)
        horizon = now - retention * 86400.0
        cursor = None
        expired = []
        while True:
            keys, cursor = self.store.list_by_kind(Kind.EXPERIMENT, cursor, limit=100)
            for key in keys:
                try:
                    doc = self.store.get_json(Kind.EXPERIMENT, key)
                except NotFoundError:
                    continue
                if doc.get("created_at", now) < horizon:
                    expired.append(key)
            if cursor is None:
                break
        for exp_id in expired:
            for kind in (Kind.RESULT, Kind.STRUCTURE, Kind.TASK):
                keys, _ = self.store.list_by_kind(kind, prefix=exp_id)
                for key in keys:
                    self.store.delete(kind, key)
            self.store.delete(Kind.EXPERIMENT, exp_id)
            logger.info("expired experiment %s cleaned up", exp_id)

    # -- terminal failure path ------------------------------------------------

    def record_exhausted(self, task: Task, exc: Exception) -> None:
        """Persist an error result after the retry budget is spent.

        Best effort with its own bounded retry loop so a transiently failing
        store cannot leave the experiment hanging short of one pair.
        """
        if task.kind is not TaskKind.COMPARE_PAIR:
            logger.error(
                "task %s failed after %d attempts: %s",
                task.task_id,
                task.attempts,
                exc,
            )
            return
        p = task.payload
        result = exp_mod.ComparisonResult(
            pair_index=p["pair_index"],
            id_a=p["id_a"],
            id_b=p["id_b"],
            name_a=p["name_a"],
            name_b=p["name_b"],
            error=exp_mod.PairError(
                code="TASK_FAILED",
                message=f"failed after {task.attempts} attempts: {exc}",
            ),
        )
        for _ in range(50):
            try:
                self._persist_and_record(p["exp_id"], result)
                return
            except Exception:
                time.sleep(0.01)
        logger.error("could not record failure of task %s", task.task_id)


class WorkerPool:
    """Fixed pool of worker threads draining the queue through the bucket.

    Results are ordered by pair generation order downstream, so any worker
    count yields byte-identical results files. ``dispatch_log`` records the
    monotonic time of every dispatched task for offline bound checking.
    """

    def __init__(
        self,
        queue: TaskQueue,
        bucket: TokenBucket,
        runner: TaskRunner,
        workers: int = 4,
        max_retries: int = 3,
        poll_interval: float = 0.05,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.queue = queue
        self.bucket = bucket
        self.runner = runner
        self.workers = workers
        self.max_retries = max_retries
        self.poll_interval = poll_interval
        self.dispatch_log: list[float] = []
        self._log_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    def start(self) -> None:
        if self._threads:
            raise RuntimeError("pool already started")
        self._stop.clear()
        for i in range(self.workers):
            thread = threading.Thread(
                target=self._loop, name=f"pmcmp-worker-{i}", daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def stop(self, drain: bool = True, timeout: float = 30.0) -> None:
        """Signal shutdown; in-flight tasks complete, pending stay persisted."""
        self._stop.set()
        deadline = time.monotonic() + timeout
        for thread in self._threads:
            thread.join(max(0.0, deadline - time.monotonic()))
        self._threads = []
        if not drain:
            return

    def _loop(self) -> None:
        wait = min(self.poll_interval, 0.5 / self.bucket.refill_rate)
        while not self._stop.is_set():
            task = self.queue.take(timeout=self.poll_interval)
            if task is None:
                continue
            while not self.bucket.try_acquire():
                if self._stop.is_set():
                    self.queue.requeue(task)
                    return
                time.sleep(wait)
            with self._log_lock:
                self.dispatch_log.append(time.monotonic())
            self._execute(task)

    def _execute(self, task: Task) -> None:
        try:
            self.runner.run(task)
        except ComparisonError:
            # deterministic pair failures are recorded by the runner itself
            logger.exception("unexpected comparison error from task %s", task.task_id)
            self.queue.done(task)
        except StateError:
            # the experiment moved on (e.g. terminal); the task is moot
            logger.warning("dropping task %s: stale state", task.task_id)
            self.queue.done(task)
        except Exception as exc:
            task.attempts += 1
            if task.attempts <= self.max_retries:
                self.queue.requeue(task)
            else:
                self.runner.record_exhausted(task, exc)
                self.queue.done(task)
        else:
            self.queue.done(task)
