# Walkthrough: the staged pipeline end to end on a generated fixture, with
# content-addressed caching and the triage gate.
#
# Run with:  python3 demos/full_pipeline.py

import json
import tempfile
from pathlib import Path

from platy import PipelineConfig, run_pipeline
from platy.decontam import DecisionLog, TriageDecision, utc_now
from platy.pipeline import STAGE_DIRS, BenchmarkSpec, SourceSpec

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)

    # a tiny source set: one record is a verbatim copy of a benchmark question
    bench_questions = [
        {"id": "b1", "question": "What is the boiling point of water at sea level?",
         "answer": "100 C"},
        {"id": "b2", "question": "Name the powerhouse of the cell.", "answer": "mitochondria"},
    ]
    (root / "bench.jsonl").write_text(
        "".join(json.dumps(q) + "\n" for q in bench_questions), encoding="utf-8")

    records = [
        {"instruction": "What is the boiling point of water at sea level?",
         "output": "At sea level water boils at 100 degrees Celsius."},
        {"instruction": "Prove that the sum of two even numbers is even.",
         "output": "Let a=2m and b=2n; a+b = 2(m+n), which is even."},
        {"instruction": "prove that the sum of two even   numbers is even.",
         "output": "2m+2n=2(m+n)."},
        {"instruction": "Name a primary color.", "output": "Red."},
    ]
    (root / "train.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")

    config = PipelineConfig(
        sources=[SourceSpec("demo-set", "MIT", str(root / "train.jsonl"))],
        benchmarks=[BenchmarkSpec("demo-bench", str(root / "bench.jsonl"))],
        out_dir=str(root / "out"),
        removal_policy="remove-duplicates-only",
    )

    manifest = run_pipeline(config)
    print("first run:", manifest["status"])
    for stage, meta in manifest["stages"].items():
        print(f"  {stage}: {meta['in_count']} -> {meta['out_count']}")

    # the planted copy produced a flag, and remove-duplicates-only blocks
    # until every flag is decided
    pending = manifest["pending_flags"]
    print("pending flags:", pending)

    log = DecisionLog(config.decisions_log_path())
    log.append(TriageDecision(pending[0], "duplicate", reviewer="demo", timestamp=utc_now()))

    manifest = run_pipeline(config)
    print("\nafter triage:", manifest["status"])
    cached = [stage for stage, meta in manifest["stages"].items() if meta["cached"]]
    print("stages served from cache:", ", ".join(cached))

    out = Path(config.out_dir) / STAGE_DIRS["apply"]
    print("\nleak report:")
    print((out / "leak_report.txt").read_text())
    print("cleaned records:")
    for line in (out / "cleaned.jsonl").read_text().splitlines():
        print(" ", json.loads(line)["instruction"])
