"""Acceptance suite: one test per criterion, each with its stated tolerance.

Every test here checks the library against an independent oracle (exhaustive
scans, replay, analytic values) and enforces the runtime budget where one is
stated.  The terminal summary prints one ACCEPTANCE line per criterion.
"""

import json
import os
import random
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import requests

from platy.corpus import QuestionRecord, format_alpaca, load_records, normalize_text
from platy.decontam import (
    ContaminationFlag,
    DecisionLog,
    TriageDecision,
    TriageState,
    apply_removal_policy,
    audit,
    leak_report,
    record_decision,
    replay,
)
from platy.adapterlab import LoraAdapter, WeightMatrix, adapter_forward, merge_adapter
from platy.corpus import DatasetManifest, ManifestEntry
from platy.pipeline import STAGE_DIRS, run_pipeline
from platy.report import average, change_in_percent, percent_change, EvalScores
from platy.similarity import LexicalEmbedder, exact_duplicates, near_duplicates, resolve_duplicates

from tests.synth import make_audit_fixture, make_dedup_corpus, write_pipeline_fixture


def test_dedup_oracle_equivalence():
    """near_duplicates == brute force on 5 corpora; resolve keeps the verbose member."""
    sizes = [500, 613, 741, 876, 1000]
    for seed, n in enumerate(sizes):
        start = time.monotonic()
        records, components = make_dedup_corpus(seed, n)

        got = near_duplicates(records, 0.80)

        emb = LexicalEmbedder().fit(normalize_text(r.instruction) for r in records)
        vectors = {r.id: emb.embed(normalize_text(r.instruction)) for r in records}
        expected = {}
        for i in range(len(records)):
            for j in range(i + 1, len(records)):
                a, b = records[i].id, records[j].id
                score = float(np.dot(vectors[a], vectors[b]))
                if score > 0.80:
                    expected[(min(a, b), max(a, b))] = score

        assert {(p.id_a, p.id_b) for p in got} == set(expected)
        for p in got:
            assert abs(p.score - expected[(p.id_a, p.id_b)]) <= 1e-9

        result = resolve_duplicates(records, exact_duplicates(records), got)
        by_id = {r.id: r for r in records}
        survivor_ids = {r.id for r in result.survivors}
        for comp in components:
            keep = min(comp, key=lambda rid: (-len(normalize_text(by_id[rid].output)), rid))
            assert comp & survivor_ids == {keep}
        assert len(result.survivors) + len(result.removed) == len(records)

        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"corpus of {n} took {elapsed:.1f}s"


def test_contamination_audit_oracle():
    """100x50 fixture with 7 planted leaks: exact flag set, 93 survivors, < 10 s."""
    start = time.monotonic()
    train, benchmarks, planted = make_audit_fixture(101, n_train=100, n_test=50, n_leaks=7)
    flags = audit(train, benchmarks, 0.80)

    texts = [normalize_text(r.instruction) for r in train]
    bench_rows = [(b.name, q) for b in benchmarks for q in b.questions]
    emb = LexicalEmbedder().fit(texts + [normalize_text(q.text) for _, q in bench_rows])
    expected = set()
    for rec in train:
        v = emb.embed(normalize_text(rec.instruction))
        for bench_name, q in bench_rows:
            if float(np.dot(v, emb.embed(normalize_text(q.text)))) > 0.80:
                expected.add((rec.id, bench_name, q.id))

    assert {(f.train_id, f.benchmark, f.test_id) for f in flags} == expected
    assert {(f.train_id, f.test_id) for f in flags} == planted

    cleaned = apply_removal_policy(train, flags, {}, "remove-all-flagged")
    assert len(cleaned) == 93

    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"audit took {elapsed:.1f}s"


def test_triage_state_machine_properties(tmp_path):
    """1,000 random decision sequences: at-most-once, replay == live, duplicate-only counting."""
    categories = ["duplicate", "gray-area", "similar-but-different"]
    rng = random.Random(2026)
    for run in range(1000):
        n_flags = rng.randint(3, 10)
        flags = [
            ContaminationFlag(f"flag{i}", f"train{i}", "bench", f"q{i}", 0.9,
                              train_source=f"src{i % 3}")
            for i in range(n_flags)
        ]
        log_path = tmp_path / f"log{run % 8}.jsonl"
        log_path.unlink(missing_ok=True)
        log = DecisionLog(log_path)
        state = TriageState.from_flags(flags)

        accepted = {}
        for _ in range(rng.randint(1, 2 * n_flags)):
            flag_id = f"flag{rng.randrange(n_flags + 2)}"  # sometimes unknown
            decision = TriageDecision(flag_id, rng.choice(categories),
                                      f"rev{rng.randrange(3)}", f"t{run}")
            try:
                record_decision(state, decision, log)
            except Exception:
                continue
            assert flag_id not in accepted, "second decision was accepted"
            accepted[flag_id] = decision

        assert state.decisions == accepted  # at most one decision per flag

        rebuilt = replay(flags, log)
        assert rebuilt.decisions == state.decisions
        assert rebuilt.progress() == state.progress()

        manifest = DatasetManifest([ManifestEntry(f"src{i}", "MIT") for i in range(3)])
        report = leak_report(state.decisions, flags, manifest)
        want = {f"src{i}": 0 for i in range(3)}
        for flag in flags:
            decision = accepted.get(flag.flag_id)
            if decision is not None and decision.category == "duplicate":
                want[flag.train_source] += 1
        assert report.per_source == want
        assert report.total == sum(want.values())


def test_adapter_merge_equivalence():
    """1,000 random shapes: merge-then-multiply == forward, B=0 exact, alpha-linear."""
    start = time.monotonic()
    rng = np.random.default_rng(424242)
    ranks = [1, 2, 4, 16]
    for trial in range(1000):
        d = int(rng.integers(2, 65))
        k = int(rng.integers(2, 65))
        r = ranks[trial % 4]
        w = WeightMatrix("m", rng.normal(size=(d, k)))
        a = rng.normal(size=(r, k))
        b = rng.normal(size=(d, r))
        alpha = float(rng.uniform(0.5, 32.0))
        x = rng.normal(size=k)
        adapter = LoraAdapter("m", r, alpha, a, b)

        merged_path = merge_adapter(w, adapter).values @ x
        forward_path = adapter_forward(w, adapter, x)
        assert np.all(
            np.abs(merged_path - forward_path) <= 1e-9 * (1.0 + np.abs(forward_path))
        )

        zero = LoraAdapter("m", r, alpha, a, np.zeros((d, r)))
        assert np.array_equal(merge_adapter(w, zero).values, w.values)

        c = float(rng.uniform(0.25, 8.0))
        delta = (
            merge_adapter(w, LoraAdapter("m", r, 2 * c, a, b)).values
            - merge_adapter(w, LoraAdapter("m", r, c, a, b)).values
        )
        assert np.all(np.abs(delta - (c / r) * (b @ a)) <= 1e-12)

    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"1000 trials took {elapsed:.1f}s"


def test_published_number_regression():
    """Published leaderboard and delta-table arithmetic reproduces within +/- 0.02."""
    suite = ["arc_challenge", "hellaswag", "mmlu", "truthfulqa_mc"]

    top70 = EvalScores("m", dict(zip(suite, (71.84, 87.94, 70.48, 62.26))))
    assert abs(average(top70, suite) - 73.13) <= 0.02

    top13 = EvalScores("m", dict(zip(suite, (62.71, 82.29, 58.30, 52.52))))
    assert abs(average(top13, suite) - 63.96) <= 0.02

    assert abs(change_in_percent(49.61, 52.52) - 2.91) <= 0.02
    assert abs(percent_change(49.61, 52.52) - 5.87) <= 0.02
    assert abs(change_in_percent(68.34, 71.16) - 2.82) <= 0.02


def test_alpaca_formatting_byte_exact():
    """Emitted prompts match the two templates byte for byte."""
    with_input = (
        "Below is an instruction that describes a task, paired with an input\n"
        "that provides further context. Write a response that appropriately \n"
        "completes the request.\n"
        "\n"
        "### Instruction:\n"
        "Name the largest planet.\n"
        "\n"
        "### Input:\n"
        "Choose A, B, C, or D\n"
        "\n"
        "### Response:\n"
    )
    without_input = (
        "Below is an instruction that describes a task. Write a response that \n"
        "appropriately completes the request.\n"
        "\n"
        "### Instruction:\n"
        "Name the largest planet.\n"
        "\n"
        "### Response:\n"
    )
    rec_with = QuestionRecord.create(
        instruction="Name the largest planet.", input="Choose A, B, C, or D", output="A"
    )
    rec_without = QuestionRecord.create(instruction="Name the largest planet.", output="Jupiter")
    assert format_alpaca(rec_with).encode("utf-8") == with_input.encode("utf-8")
    assert format_alpaca(rec_without).encode("utf-8") == without_input.encode("utf-8")


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _wait_for(url: str, timeout: float = 15.0) -> None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            requests.get(url, timeout=1.0)
            return
        except requests.ConnectionError:
            time.sleep(0.1)
    raise TimeoutError(f"service at {url} never came up")


def test_pipeline_determinism_and_resume(tmp_path):
    """Byte-identical reruns; SIGKILL mid-triage loses no acknowledged decision."""
    # determinism across fresh directories
    config_a = write_pipeline_fixture(tmp_path / "a", seed=97, planted_leaks=2)
    config_b = write_pipeline_fixture(tmp_path / "b", seed=97, planted_leaks=2)
    run_pipeline(config_a)
    run_pipeline(config_b)

    def artifact_bytes(out_dir):
        apply_dir = Path(out_dir) / STAGE_DIRS["apply"]
        return {
            str(p.relative_to(apply_dir)): p.read_bytes()
            for p in sorted(apply_dir.rglob("*"))
            if p.is_file() and p.name != "stage.json"
        }

    assert artifact_bytes(config_a.out_dir) == artifact_bytes(config_b.out_dir)
    cleaned = artifact_bytes(config_a.out_dir)["cleaned.jsonl"]
    assert cleaned  # non-trivial output

    # kill-and-restart mid-triage
    config = write_pipeline_fixture(
        tmp_path / "kill", seed=98, planted_leaks=3, policy="remove-duplicates-only"
    )
    manifest = run_pipeline(config)
    assert manifest["status"] == "awaiting-triage"
    pending = manifest["pending_flags"]
    assert len(pending) == 3

    config_path = tmp_path / "kill" / "config.json"
    config.save(config_path)
    port = _free_port()
    env = dict(os.environ, PLATY_BIND=f"127.0.0.1:{port}")
    env.pop("PLATY_LOG_DIR", None)
    cmd = [sys.executable, "-m", "platy.cli", "--config", str(config_path), "serve"]
    base = f"http://127.0.0.1:{port}"

    proc = subprocess.Popen(cmd, env=env, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        _wait_for(f"{base}/api/progress")
        for flag_id, category in zip(pending[:2], ("duplicate", "gray-area")):
            resp = requests.post(
                f"{base}/api/decisions",
                json={"flag_id": flag_id, "category": category, "reviewer": "alice"},
            )
            assert resp.status_code == 201  # acknowledged == durable
    finally:
        proc.send_signal(signal.SIGKILL)
        proc.wait(timeout=10)

    proc = subprocess.Popen(cmd, env=env, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        _wait_for(f"{base}/api/progress")
        progress = requests.get(f"{base}/api/progress").json()
        assert progress["decided"] == 2
        assert progress["per_category"]["duplicate"] == 1
        assert progress["per_category"]["gray-area"] == 1
        resp = requests.post(
            f"{base}/api/decisions",
            json={"flag_id": pending[2], "category": "similar-but-different",
                  "reviewer": "alice"},
        )
        assert resp.status_code == 201
    finally:
        proc.terminate()
        proc.wait(timeout=10)

    manifest = run_pipeline(config)
    assert manifest["status"] == "complete"
    cleaned_records = load_records(Path(config.out_dir) / STAGE_DIRS["apply"] / "cleaned.jsonl")
    report = (Path(config.out_dir) / STAGE_DIRS["apply"] / "leak_report.csv").read_text()
    assert "total,1" in report  # only the duplicate decision counts
    survivors = load_records(Path(config.out_dir) / STAGE_DIRS["dedup"] / "survivors.jsonl")
    assert len(cleaned_records) == len(survivors) - 1  # only the duplicate was removed
