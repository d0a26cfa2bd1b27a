import json
import time

import httpx
import numpy as np
import pytest

from conftest import ca_trace, pdb_bytes
from pmcmp.config import EngineConfig
from pmcmp.engine import Engine
from pmcmp.service import ServiceThread, parse_multipart

MEASURE_VOCAB = ["RMSD", "GDT_TS", "TM-score", "Q-score"]


@pytest.fixture
def service(tmp_path):
    config = EngineConfig(queue_rate=100.0, bucket_size=1000, workers=2)
    with ServiceThread(Engine(tmp_path / "data", config)) as svc:
        with httpx.Client(base_url=svc.address, timeout=30.0) as client:
            yield svc, client


def setup_experiment(client, label="api-test", measures=MEASURE_VOCAB,
                     mode="all against all", scale="match length"):
    response = client.post(
        "/experiments/setup",
        data={"label": label, "measures": measures, "mode": mode, "scale": scale},
    )
    return response


def upload(client, exp_id, name, body):
    return client.post(
        f"/experiments/structures/{exp_id}",
        files={"file": (name, body, "application/octet-stream")},
    )


def model_bodies(count, n_residues=8, seed=0, noise=0.4):
    rng = np.random.default_rng(seed)
    base = ca_trace(n_residues, rng)
    out = [pdb_bytes(base)]
    for _ in range(count - 1):
        out.append(pdb_bytes(base + rng.normal(scale=noise, size=base.shape)))
    return out


def run_workflow(client, bodies, **kwargs):
    exp_id = setup_experiment(client, **kwargs).headers["Location"].rsplit("/", 1)[-1]
    for i, body in enumerate(bodies):
        response = upload(client, exp_id, f"m{i}.pdb", body)
        assert response.status_code == 200
    assert client.get(f"/experiments/start/{exp_id}").status_code == 200
    deadline = time.monotonic() + 120.0
    while True:
        status = client.get(f"/experiments/status/{exp_id}").text.strip()
        if status.startswith("finished"):
            break
        assert time.monotonic() < deadline, f"stuck at {status}"
        time.sleep(0.05)
    return exp_id, status


# -- endpoint conformance, one test per interface row -----------------------------


def test_setup_returns_303_redirect(service):
    _, client = service
    response = setup_experiment(client)
    assert response.status_code == 303
    location = response.headers["Location"]
    assert location.startswith("/experiments/structures/")
    assert location.rsplit("/", 1)[-1]


def test_upload_returns_html_link(service):
    _, client = service
    exp_id = setup_experiment(client).headers["Location"].rsplit("/", 1)[-1]
    body = model_bodies(1)[0]
    response = upload(client, exp_id, "model_x.pdb", body)
    assert response.status_code == 200
    assert response.headers["Content-Type"].startswith("text/html")
    assert response.text == f'<a href="/experiments/structures/{exp_id}">model_x</a>'


def test_start_returns_200_ok(service):
    _, client = service
    exp_id = setup_experiment(client).headers["Location"].rsplit("/", 1)[-1]
    for i, body in enumerate(model_bodies(2)):
        upload(client, exp_id, f"m{i}.pdb", body)
    response = client.get(f"/experiments/start/{exp_id}")
    assert response.status_code == 200
    assert response.text.strip() == "OK"


def test_status_is_plain_text(service):
    _, client = service
    exp_id = setup_experiment(client).headers["Location"].rsplit("/", 1)[-1]
    response = client.get(f"/experiments/status/{exp_id}")
    assert response.status_code == 200
    assert response.headers["Content-Type"].startswith("text/plain")
    assert response.text.strip() == "setup"
    upload(client, exp_id, "m.pdb", model_bodies(1)[0])
    assert client.get(f"/experiments/status/{exp_id}").text.strip() == (
        "uploading 1 structures"
    )


def test_download_returns_results_file(service):
    _, client = service
    exp_id, status = run_workflow(client, model_bodies(3), label="download me")
    assert status == "finished"
    response = client.get(f"/experiments/download/{exp_id}")
    assert response.status_code == 200
    assert response.headers["Content-Type"].startswith("text/tab-separated-values")
    assert response.headers["Content-Disposition"] == (
        'attachment; filename="download_me.tsv"'
    )
    rows = [l for l in response.text.splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 3  # header + N(N-1)/2 pairs


# -- full workflow property ------------------------------------------------------


def test_full_workflow_pair_counts(service):
    _, client = service
    exp_id, _ = run_workflow(client, model_bodies(5), mode="all against all")
    body = client.get(f"/experiments/download/{exp_id}").text
    assert len([l for l in body.splitlines() if not l.startswith("#")]) == 1 + 10

    exp_id, _ = run_workflow(client, model_bodies(5, seed=1), mode="first against all")
    body = client.get(f"/experiments/download/{exp_id}").text
    assert len([l for l in body.splitlines() if not l.startswith("#")]) == 1 + 4


def test_histograms_variant(service):
    _, client = service
    exp_id, _ = run_workflow(client, model_bodies(4),
                             measures=["RMSD", "TM-score"])
    response = client.get(f"/experiments/download/{exp_id}", params={"histograms": "1"})
    assert response.status_code == 200
    doc = json.loads(response.text)
    assert [h["measure"] for h in doc] == ["RMSD", "TM-score"]
    for hist in doc:
        assert len(hist["bin_edges"]) == 21
        assert len(hist["counts"]) == 20
        assert sum(hist["counts"]) == 6


# -- error paths ---------------------------------------------------------------


def test_setup_validation_errors(service):
    _, client = service
    response = client.post("/experiments/setup", data={
        "label": "x", "mode": "all against all", "scale": "match length"})
    assert response.status_code == 400
    assert response.json()["code"] == "EMPTY_MEASURES"

    response = client.post("/experiments/setup", data={
        "label": "x", "measures": "LDDT", "mode": "all against all",
        "scale": "match length"})
    assert response.status_code == 400
    assert response.json()["code"] == "UNKNOWN_MEASURE"

    response = client.post("/experiments/setup", data={
        "label": "x", "measures": "RMSD", "mode": "pairwise",
        "scale": "match length"})
    assert response.status_code == 400
    assert response.json()["code"] == "UNKNOWN_MODE"

    response = client.post("/experiments/setup", data={
        "label": "x", "measures": "RMSD", "mode": "all against all",
        "scale": "sideways"})
    assert response.status_code == 400
    assert response.json()["code"] == "UNKNOWN_SCALE"

    response = client.post("/experiments/setup", data={
        "label": "", "measures": "RMSD", "mode": "all against all",
        "scale": "match length"})
    assert response.status_code == 400
    assert response.json()["code"] == "MISSING_LABEL"


def test_measures_accept_repeated_fields_and_commas(service):
    _, client = service
    response = client.post("/experiments/setup", data={
        "label": "x", "measures": ["RMSD", "TM-score"],
        "mode": "all against all", "scale": "match length"})
    assert response.status_code == 303
    response = client.post("/experiments/setup", data={
        "label": "x", "measures": "RMSD,Q-score",
        "mode": "all against all", "scale": "match length"})
    assert response.status_code == 303


def test_unknown_experiment_404(service):
    _, client = service
    assert client.get("/experiments/status/deadbeef").status_code == 404
    assert client.get("/experiments/start/deadbeef").status_code == 404
    assert client.get("/experiments/download/deadbeef").status_code == 404
    assert upload(client, "deadbeef", "m.pdb", b"x").status_code == 404
    assert client.get("/experiments/nonsense/x").status_code == 404


def test_upload_errors(service):
    _, client = service
    exp_id = setup_experiment(client).headers["Location"].rsplit("/", 1)[-1]

    response = upload(client, exp_id, "bad.pdb", b"this is not a pdb\n")
    assert response.status_code == 400
    assert response.json()["code"] == "FORMAT_ERROR"

    response = upload(client, exp_id, "big.pdb", b"x" * (1_048_576 + 1))
    assert response.status_code == 413

    response = client.post(f"/experiments/structures/{exp_id}",
                           data={"file": "not multipart"})
    assert response.status_code == 400


def test_upload_after_start_conflicts(service):
    _, client = service
    exp_id, _ = run_workflow(client, model_bodies(2))
    response = upload(client, exp_id, "late.pdb", model_bodies(1)[0])
    assert response.status_code == 409


def test_start_errors(service):
    _, client = service
    exp_id = setup_experiment(client).headers["Location"].rsplit("/", 1)[-1]
    response = client.get(f"/experiments/start/{exp_id}")
    assert response.status_code == 400
    assert response.json()["code"] == "TOO_FEW_STRUCTURES"

    upload(client, exp_id, "only.pdb", model_bodies(1)[0])
    response = client.get(f"/experiments/start/{exp_id}")
    assert response.status_code == 400
    assert response.json()["code"] == "TOO_FEW_STRUCTURES"

    exp_id, _ = run_workflow(client, model_bodies(2, seed=3))
    response = client.get(f"/experiments/start/{exp_id}")
    assert response.status_code == 409


def test_download_before_finish_conflicts(service):
    _, client = service
    exp_id = setup_experiment(client).headers["Location"].rsplit("/", 1)[-1]
    response = client.get(f"/experiments/download/{exp_id}")
    assert response.status_code == 409
    body = response.json()
    assert body["code"] == "NOT_FINISHED"
    assert "setup" in body["message"]


def test_status_responds_quickly_during_large_run(tmp_path):
    config = EngineConfig(queue_rate=100.0, bucket_size=1000, workers=2)
    with ServiceThread(Engine(tmp_path / "busy", config)) as svc:
        with httpx.Client(base_url=svc.address, timeout=30.0) as client:
            rng = np.random.default_rng(31)
            base = ca_trace(50, rng)
            exp_id = setup_experiment(
                client, measures=["GDT_TS", "TM-score"]
            ).headers["Location"].rsplit("/", 1)[-1]
            upload(client, exp_id, "m0.pdb", pdb_bytes(base))
            for i in range(1, 25):
                noisy = base + rng.normal(scale=1.0, size=base.shape)
                upload(client, exp_id, f"m{i}.pdb", pdb_bytes(noisy))
            client.get(f"/experiments/start/{exp_id}")
            # the run takes many seconds; status polls must not block on it
            latencies = []
            for _ in range(5):
                start = time.perf_counter()
                response = client.get(f"/experiments/status/{exp_id}")
                latencies.append(time.perf_counter() - start)
                assert response.status_code == 200
                time.sleep(0.2)
            assert response.text.startswith(("running", "finished"))
    assert max(latencies) < 0.1, f"status latencies: {latencies}"


def test_multipart_parser_round_trip():
    boundary = "xyzBOUNDARY"
    body = (
        f"--{boundary}\r\n"
        'Content-Disposition: form-data; name="file"; filename="m.pdb"\r\n'
        "Content-Type: application/octet-stream\r\n\r\n"
        "ATOM line one\r\nATOM line two\r\n"
        f"\r\n--{boundary}\r\n"
        'Content-Disposition: form-data; name="note"\r\n\r\n'
        "hello"
        f"\r\n--{boundary}--\r\n"
    ).encode()
    parts = parse_multipart(body, f'multipart/form-data; boundary="{boundary}"')
    assert parts[0][0] == "file"
    assert parts[0][1] == "m.pdb"
    assert parts[0][2] == b"ATOM line one\r\nATOM line two\r\n"
    assert parts[1][0] == "note"
    assert parts[1][2] == b"hello"
