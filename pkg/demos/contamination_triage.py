# Walkthrough: audit a train set against benchmark questions, triage the
# flags, and build the leak report.
#
# Run with:  python3 demos/contamination_triage.py

import tempfile
from pathlib import Path

from platy import (
    BenchmarkQuestion,
    BenchmarkSet,
    DatasetManifest,
    DecisionLog,
    ManifestEntry,
    QuestionRecord,
    TriageDecision,
    TriageState,
    apply_removal_policy,
    audit,
    leak_report,
    record_decision,
    replay,
    suggest_category,
)
from platy.decontam import utc_now

train = [
    QuestionRecord.create(
        instruction="Jane's quiz scores were 98, 97, 92, 85 and 93. What was her mean score?",
        output="Her mean score was (98+97+92+85+93)/5 = 93.",
        source="math-set",
    ),
    QuestionRecord.create(
        instruction="What is the largest organ of the human body?",
        output="C: epidermis",
        source="science-set",
    ),
    QuestionRecord.create(
        instruction="Translate 'good morning' into French.",
        output="Bonjour",
        source="math-set",
    ),
]

benchmark = BenchmarkSet("quiz-bench", [
    BenchmarkQuestion("q1",
                      "Jane's quiz scores were 98, 97, 92, 85 and 93. What was her mean score?",
                      answer="B: 93"),
    BenchmarkQuestion("q2", "What is the largest organ of the human body?", answer="C: skin"),
    BenchmarkQuestion("q3", "Which planet is closest to the sun?", answer="Mercury"),
])

flags = audit(train, [benchmark], threshold=0.80)
print(f"{len(flags)} flag(s) above the 0.80 threshold\n")

by_id = {r.id: r for r in train}
questions = {q.id: q for q in benchmark.questions}
for flag in flags:
    rec, q = by_id[flag.train_id], questions[flag.test_id]
    category, rationale = suggest_category(flag, rec, q)
    print(f"flag {flag.flag_id} score={flag.score:.3f}")
    print(f"  train: {rec.instruction[:70]!r} -> {rec.output!r}")
    print(f"  test:  {q.text[:70]!r} -> {q.answer!r}")
    print(f"  suggestion: {category} ({rationale})\n")

# Decisions are append-only and replayable; the suggestion never
# auto-commits, a human picks the category.
with tempfile.TemporaryDirectory() as tmp:
    log = DecisionLog(Path(tmp) / "decisions.jsonl")
    state = TriageState.from_flags(flags)
    for flag, category in zip(flags, ("duplicate", "gray-area")):
        record_decision(
            state,
            TriageDecision(flag.flag_id, category, reviewer="demo", timestamp=utc_now()),
            log,
        )
    print("progress:", state.progress())

    rebuilt = replay(flags, log)
    print("replay matches live state:", rebuilt.decisions == state.decisions)

    manifest = DatasetManifest([
        ManifestEntry("math-set", "MIT"),
        ManifestEntry("science-set", "apache-2.0"),
    ])
    report = leak_report(state.decisions, flags, manifest)
    print("\nleak report (only duplicate-category decisions count):")
    print(report.render_table())

    # The cautious default removes every flagged record regardless of category.
    cleaned = apply_removal_policy(train, flags, state.decisions, "remove-all-flagged")
    print(f"remove-all-flagged: {len(train)} -> {len(cleaned)} records")
    cleaned = apply_removal_policy(train, flags, state.decisions, "remove-duplicates-only")
    print(f"remove-duplicates-only: {len(train)} -> {len(cleaned)} records")
