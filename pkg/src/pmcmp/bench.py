"""Benchmark harness: kernel backend comparison and pool throughput.

``pmcmp bench`` times the numba-compiled kernels against the pure-numpy
fallback (each measured in a subprocess so the backend selection stays
clean) and then drives synthetic experiments through the full scheduler at
one or more worker counts, checking the dispatch log against the
token-bucket bound.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from . import _kernels
from .config import EngineConfig
from .engine import Engine
from .measures import ComparisonMode, ScaleMode
from .scheduler import obeys_bucket_bound


def synthetic_trace(n_residues: int, rng: np.random.Generator) -> np.ndarray:
    """Random CA-like trace: ~3.8 A steps with mild directional drift."""
    steps = rng.normal(size=(n_residues, 3))
    steps /= np.linalg.norm(steps, axis=1, keepdims=True)
    for i in range(1, n_residues):
        steps[i] = 0.6 * steps[i - 1] + 0.4 * steps[i]
        steps[i] /= np.linalg.norm(steps[i])
    return np.cumsum(3.8 * steps, axis=0)


def trace_to_pdb(coords: np.ndarray, chain: str = "A", start_res: int = 1) -> bytes:
    lines = []
    for i, (x, y, z) in enumerate(coords):
        serial = i + 1
        resseq = start_res + i
        lines.append(
            f"ATOM  {serial:>5d}  CA  ALA {chain}{resseq:>4d}    "
            f"{x:>8.3f}{y:>8.3f}{z:>8.3f}  1.00  0.00           C"
        )
    lines.append("END")
    return ("\n".join(lines) + "\n").encode("ascii")


def synthetic_model_set(
    count: int, n_residues: int, noise: float = 1.0, seed: int = 0
) -> list[bytes]:
    """A target trace plus noisy copies, as PDB bytes."""
    rng = np.random.default_rng(seed)
    target = synthetic_trace(n_residues, rng)
    models = [trace_to_pdb(target)]
    for _ in range(count - 1):
        models.append(trace_to_pdb(target + rng.normal(scale=noise, size=target.shape)))
    return models


# -- kernel timings ------------------------------------------------------------

def kernel_timings(residues: int = 115, repeats: int = 5) -> dict:
    """Time each kernel on a fixed synthetic pair; returns seconds per call."""
    rng = np.random.default_rng(7)
    a = synthetic_trace(residues, rng)
    b = a + rng.normal(scale=1.5, size=a.shape)
    _kernels.warmup()

    timings = {"backend": "numba" if _kernels.NUMBA_ENABLED else "numpy"}

    start = time.perf_counter()
    for _ in range(200 * repeats):
        _kernels.kabsch_fit(a, b)
    timings["kabsch_fit"] = (time.perf_counter() - start) / (200 * repeats)

    start = time.perf_counter()
    for _ in range(repeats):
        _kernels.gdt_max_counts(
            a, b, _kernels.GDT_CUTOFFS, _kernels.SEED_WINDOWS, _kernels.MAX_REFIT_ROUNDS
        )
    timings["gdt_search"] = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for _ in range(repeats):
        _kernels.tm_best_sum(a, b, 3.9, _kernels.SEED_WINDOWS, _kernels.MAX_REFIT_ROUNDS)
    timings["tm_search"] = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for _ in range(repeats):
        _kernels.q_raw_score(a, b)
    timings["q_score"] = (time.perf_counter() - start) / repeats

    return timings


def kernel_timings_subprocess(numba_enabled: bool, residues: int = 115) -> dict:
    """Run :func:`kernel_timings` in a child with the backend pinned."""
    env = dict(os.environ)
    env["PMCMP_NUMBA"] = "1" if numba_enabled else "0"
    out = subprocess.run(
        [sys.executable, "-m", "pmcmp.bench", "--kernels-json", "--residues", str(residues)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout)


def compare_backends(residues: int = 115) -> list[str]:
    """Human-readable comparison of the numba and numpy kernel paths."""
    lines = [f"kernel timings on a {residues}-residue pair (seconds/call):"]
    numba_t = kernel_timings_subprocess(True, residues)
    numpy_t = kernel_timings_subprocess(False, residues)
    if numba_t["backend"] != "numba":
        lines.append("numba unavailable; both runs used the numpy fallback")
    for name in ("kabsch_fit", "gdt_search", "tm_search", "q_score"):
        ratio = numpy_t[name] / numba_t[name] if numba_t[name] else float("nan")
        lines.append(
            f"  {name:<12s} numba {numba_t[name]:.6f}s   numpy {numpy_t[name]:.6f}s"
            f"   ({ratio:.1f}x)"
        )
    return lines


# -- pool throughput -------------------------------------------------------------

def run_pool_bench(
    pairs: int,
    workers: int,
    residues: int = 60,
    queue_rate: float = 100.0,
    bucket_size: int = 1_000_000,
    measures: tuple[str, ...] = ("RMSD", "GDT_TS", "TM-score", "Q-score"),
    seed: int = 1,
) -> dict:
    """One-vs-all synthetic experiment of exactly ``pairs`` comparisons."""
    bodies = synthetic_model_set(pairs + 1, residues, seed=seed)
    config = EngineConfig(
        queue_rate=queue_rate, bucket_size=bucket_size, workers=workers
    )
    with tempfile.TemporaryDirectory(prefix="pmcmp-bench-") as tmp:
        engine = Engine(tmp, config)
        exp_id = engine.create_experiment(
            "bench", list(measures), ComparisonMode.ONE_VS_ALL, ScaleMode.MATCH_LENGTH
        )
        for i, body in enumerate(bodies):
            engine.add_structure(exp_id, f"model_{i:04d}.pdb", body)
        _kernels.warmup()
        with engine:
            start = time.perf_counter()
            engine.start_experiment(exp_id)
            exp = engine.wait_until_done(exp_id, timeout=3600.0)
            elapsed = time.perf_counter() - start
            log = list(engine.pool.dispatch_log)
        return {
            "workers": workers,
            "pairs": exp.total_pairs,
            "elapsed": elapsed,
            "pairs_per_second": exp.total_pairs / elapsed,
            "errors": exp.error_pairs,
            "bound_ok": obeys_bucket_bound(log, bucket_size, queue_rate),
        }


def main(argv=None) -> int:
    # internal entry point used by the subprocess backend comparison
    import argparse

    parser = argparse.ArgumentParser(prog="python -m pmcmp.bench")
    parser.add_argument("--kernels-json", action="store_true")
    parser.add_argument("--residues", type=int, default=115)
    args = parser.parse_args(argv)
    if args.kernels_json:
        print(json.dumps(kernel_timings(args.residues)))
        return 0
    parser.error("nothing to do (use pmcmp bench for the full harness)")
    return 2


if __name__ == "__main__":
    sys.exit(main())
