"""Build a 5-flag triage fixture and run the pipeline through the audit stage.

Usage: python3 fixture.py <workdir>
Writes <workdir>/config.json and the audit artifacts under <workdir>/out.
"""

import json
import sys
from pathlib import Path

from platy.pipeline import BenchmarkSpec, PipelineConfig, SourceSpec, run_pipeline

QUESTIONS = [
    ("b0", "How many edges does a complete graph with 10 vertices have?", "45"),
    ("b1", "What is the largest organ of the human body?", "C: skin"),
    ("b2", "Which of the following is not an input in photosynthesis?", "B: oxygen"),
    ("b3", "Jane's quiz scores were 98, 97, 92, 85 and 93. What was her mean score?", "B: 93"),
    ("b4", "What color is the sun when viewed from space?", "white"),
    ("b5", "Name the closest planet to the sun.", "Mercury"),
    ("b6", "What is the chemical formula of table salt?", "NaCl"),
    ("b7", "State the Pythagorean theorem for right triangles.", "a^2 + b^2 = c^2"),
]

FILLERS = [
    "Compute the determinant of a 3x3 identity matrix.",
    "Prove that the square root of 2 is irrational.",
    "Differentiate x^3 with respect to x.",
    "Balance the equation H2 + O2 -> H2O.",
    "Explain what a binary search tree is.",
    "Convert 100 degrees Fahrenheit to Celsius.",
    "What is the integral of 1/x?",
    "Define the term 'entropy' in thermodynamics.",
]


def main(workdir: str) -> None:
    root = Path(workdir)
    root.mkdir(parents=True, exist_ok=True)

    with open(root / "bench.jsonl", "w", encoding="utf-8") as fh:
        for qid, text, answer in QUESTIONS:
            fh.write(json.dumps({"id": qid, "question": text, "answer": answer}) + "\n")

    records = []
    # five verbatim copies of benchmark questions become the five flags
    for _, text, answer in QUESTIONS[:5]:
        records.append({"instruction": text, "output": f"worked answer: {answer}"})
    for text in FILLERS:
        records.append({"instruction": text, "output": "some answer"})
    with open(root / "train.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

    config = PipelineConfig(
        sources=[SourceSpec("fixture-set", "MIT", str(root / "train.jsonl"))],
        benchmarks=[BenchmarkSpec("fixture-bench", str(root / "bench.jsonl"))],
        out_dir=str(root / "out"),
        removal_policy="remove-duplicates-only",
        ui_dir=str(Path(__file__).resolve().parent.parent / "dist"),
    )
    manifest = run_pipeline(config, until="audit")
    flags = manifest["stages"]["audit"]["out_count"]
    if flags != 5:
        raise SystemExit(f"expected 5 flags, audit produced {flags}")
    config.save(root / "config.json")
    print(root / "config.json")


if __name__ == "__main__":
    main(sys.argv[1])
