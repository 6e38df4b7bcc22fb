import json
import threading

import pytest
import requests

from platy.pipeline import run_pipeline
from platy.service import ServiceSetupError, ReviewService, make_server, parse_bind

from tests.synth import write_pipeline_fixture


@pytest.fixture()
def live_service(tmp_path, monkeypatch):
    """A review service over a 3-flag fixture, bound to an ephemeral port."""
    config = write_pipeline_fixture(
        tmp_path, seed=11, planted_leaks=3, policy="remove-duplicates-only"
    )
    run_pipeline(config, until="audit")
    monkeypatch.setenv("PLATY_BIND", "127.0.0.1:0")
    server = make_server(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    try:
        yield f"http://{host}:{port}", config
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


def test_parse_bind():
    assert parse_bind("0.0.0.0:8080") == ("0.0.0.0", 8080)
    with pytest.raises(ServiceSetupError):
        parse_bind("8080")
    with pytest.raises(ServiceSetupError):
        parse_bind("host:port")


def test_service_requires_audit_artifacts(tmp_path):
    config = write_pipeline_fixture(tmp_path, seed=12)
    with pytest.raises(ServiceSetupError):
        ReviewService(config)


def test_queue_is_descending_by_score(live_service):
    base, _ = live_service
    items = requests.get(f"{base}/api/queue?status=pending").json()
    assert len(items) == 3
    scores = [item["score"] for item in items]
    assert scores == sorted(scores, reverse=True)
    for item in items:
        assert item["status"] == "pending"
        assert item["train"]["instruction"]
        assert item["test"]["question"]
        assert item["suggestion"]["category"] in (
            "duplicate", "gray-area", "similar-but-different"
        )


def test_post_then_get_reads_own_write(live_service):
    base, _ = live_service
    items = requests.get(f"{base}/api/queue").json()
    flag_id = items[0]["flag_id"]
    resp = requests.post(
        f"{base}/api/decisions",
        json={"flag_id": flag_id, "category": "duplicate", "reviewer": "alice"},
    )
    assert resp.status_code == 201
    assert resp.json()["category"] == "duplicate"

    flag = requests.get(f"{base}/api/flags/{flag_id}").json()
    assert flag["status"] == "decided"
    assert flag["decision"]["category"] == "duplicate"
    assert flag["decision"]["reviewer"] == "alice"

    progress = requests.get(f"{base}/api/progress").json()
    assert progress["decided"] == 1
    assert progress["pending"] == 2
    assert progress["per_category"]["duplicate"] == 1


def test_concurrent_posts_one_wins(live_service):
    base, _ = live_service
    flag_id = requests.get(f"{base}/api/queue").json()[-1]["flag_id"]
    barrier = threading.Barrier(2)
    results = []

    def submit(reviewer):
        barrier.wait()
        resp = requests.post(
            f"{base}/api/decisions",
            json={"flag_id": flag_id, "category": "gray-area", "reviewer": reviewer},
        )
        results.append(resp)

    threads = [threading.Thread(target=submit, args=(f"rev{i}",)) for i in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    codes = sorted(r.status_code for r in results)
    assert codes == [201, 409]
    conflict = next(r for r in results if r.status_code == 409)
    assert conflict.json()["existing"]["category"] == "gray-area"


def test_decisions_survive_restart(live_service):
    base, config = live_service
    items = requests.get(f"{base}/api/queue").json()
    flag_id = items[0]["flag_id"]
    requests.post(
        f"{base}/api/decisions",
        json={"flag_id": flag_id, "category": "similar-but-different", "reviewer": "bob"},
    )
    # a fresh service instance replays the durable log
    rebuilt = ReviewService(config)
    assert rebuilt.state.decisions[flag_id].category == "similar-but-different"


def test_leak_report_endpoint(live_service):
    base, _ = live_service
    items = requests.get(f"{base}/api/queue").json()
    requests.post(
        f"{base}/api/decisions",
        json={"flag_id": items[0]["flag_id"], "category": "duplicate", "reviewer": "a"},
    )
    report = requests.get(f"{base}/api/report").json()
    assert report["total"] == 1
    assert sum(report["per_source"].values()) == 1


def test_error_responses(live_service):
    base, _ = live_service
    # unknown flag
    resp = requests.post(
        f"{base}/api/decisions",
        json={"flag_id": "missing", "category": "duplicate", "reviewer": "a"},
    )
    assert resp.status_code == 404
    assert "error" in resp.json()
    # malformed payloads
    resp = requests.post(f"{base}/api/decisions", json={"flag_id": "x"})
    assert resp.status_code == 400
    resp = requests.post(
        f"{base}/api/decisions",
        data=b"not json",
        headers={"Content-Type": "application/json"},
    )
    assert resp.status_code == 400
    resp = requests.post(
        f"{base}/api/decisions",
        json={"flag_id": "x", "category": "nonsense", "reviewer": "a"},
    )
    assert resp.status_code == 400
    # unknown routes
    assert requests.get(f"{base}/api/nope").status_code == 404
    assert requests.get(f"{base}/api/flags/unknown").status_code == 404
    assert requests.get(f"{base}/api/queue?status=tuesday").status_code == 400
    assert requests.post(f"{base}/api/queue").status_code == 404


def test_static_ui_serving(tmp_path, monkeypatch):
    config = write_pipeline_fixture(tmp_path, seed=13, planted_leaks=1)
    run_pipeline(config, until="audit")
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>review</body></html>", encoding="utf-8")
    config.ui_dir = str(ui)
    monkeypatch.setenv("PLATY_BIND", "127.0.0.1:0")
    server = make_server(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    try:
        resp = requests.get(f"http://{host}:{port}/")
        assert resp.status_code == 200
        assert "review" in resp.text
        assert "text/html" in resp.headers["Content-Type"]
        # path traversal is refused
        bad = requests.get(f"http://{host}:{port}/../manifest.json")
        assert bad.status_code == 404
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
