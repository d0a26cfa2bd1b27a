import json
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from conftest import ca_trace
from pmcmp import _kernels

NUMPY_BACKEND_SCRIPT = textwrap.dedent(
    """
    import json
    import numpy as np
    from pmcmp import _kernels

    assert not _kernels.NUMBA_ENABLED
    rng = np.random.default_rng(90125)
    out = []
    for _ in range(6):
        n = int(rng.integers(4, 30))
        a = rng.uniform(-12.0, 12.0, size=(n, 3))
        b = a + rng.normal(scale=1.0, size=(n, 3))
        rot, trans, rmsd = _kernels.kabsch_fit(a, b)
        counts = _kernels.gdt_max_counts(
            a, b, _kernels.GDT_CUTOFFS, _kernels.SEED_WINDOWS, 10
        )
        tm = _kernels.tm_best_sum(a, b, 2.0, _kernels.SEED_WINDOWS, 10)
        q = _kernels.q_raw_score(a, b)
        out.append({
            "rmsd": float(rmsd),
            "rotation": [float(x) for x in rot.ravel()],
            "translation": [float(x) for x in trans],
            "counts": [int(c) for c in counts],
            "tm": float(tm),
            "q": float(q),
        })
    print(json.dumps(out))
    """
)


def test_env_flag_selects_numpy_fallback():
    env = dict(os.environ)
    env["PMCMP_NUMBA"] = "0"
    result = subprocess.run(
        [sys.executable, "-c",
         "from pmcmp import _kernels; print(_kernels.NUMBA_ENABLED)"],
        env=env, capture_output=True, text=True, check=True, timeout=120,
    )
    assert result.stdout.strip() == "False"


@pytest.mark.skipif(not _kernels.NUMBA_ENABLED, reason="numba backend disabled")
def test_numba_and_numpy_paths_agree():
    env = dict(os.environ)
    env["PMCMP_NUMBA"] = "0"
    result = subprocess.run(
        [sys.executable, "-c", NUMPY_BACKEND_SCRIPT],
        env=env, capture_output=True, text=True, check=True, timeout=300,
    )
    fallback = json.loads(result.stdout)

    rng = np.random.default_rng(90125)
    for case in fallback:
        n = int(rng.integers(4, 30))
        a = rng.uniform(-12.0, 12.0, size=(n, 3))
        b = a + rng.normal(scale=1.0, size=(n, 3))
        rot, trans, rmsd = _kernels.kabsch_fit(a, b)
        counts = _kernels.gdt_max_counts(
            a, b, _kernels.GDT_CUTOFFS, _kernels.SEED_WINDOWS, 10
        )
        tm = _kernels.tm_best_sum(a, b, 2.0, _kernels.SEED_WINDOWS, 10)
        q = _kernels.q_raw_score(a, b)
        assert rmsd == pytest.approx(case["rmsd"], abs=1e-12)
        assert np.abs(rot.ravel() - np.array(case["rotation"])).max() <= 1e-12
        assert np.abs(trans - np.array(case["translation"])).max() <= 1e-12
        assert [int(c) for c in counts] == case["counts"]
        assert tm == pytest.approx(case["tm"], abs=1e-12)
        assert q == pytest.approx(case["q"], abs=1e-12)


def test_gdt_counts_monotone_in_cutoff(rng):
    a = ca_trace(20, rng)
    b = a + rng.normal(scale=1.0, size=a.shape)
    counts = _kernels.gdt_max_counts(a, b, _kernels.GDT_CUTOFFS,
                                     _kernels.SEED_WINDOWS, 10)
    assert list(counts) == sorted(counts)
    assert counts[-1] <= 20


def test_warmup_is_idempotent():
    _kernels.warmup()
    _kernels.warmup()
