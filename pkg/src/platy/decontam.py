"""Benchmark contamination audit, three-way human triage, and leak reporting.

Train questions scoring above the similarity threshold against any benchmark
test question become flags.  Flags are triaged by a human into one of three
categories (duplicate, gray-area, similar-but-different); only ``duplicate``
counts as true contamination in the leak report.  Decisions persist in an
append-only log whose replay reproduces the in-memory state exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import ConfigError, DatasetManifest, QuestionRecord, normalize_text
from .similarity import DEFAULT_THRESHOLD, EmbedderSpec, make_embedder

CATEGORIES = ("duplicate", "gray-area", "similar-but-different")
POLICIES = frozenset({"remove-all-flagged", "remove-duplicates-only"})

# Above this score two questions are treated as the same question when
# suggesting a triage category.
SAME_QUESTION_SCORE = 0.99


class UnknownFlagError(KeyError):
    pass


class AlreadyDecidedError(ValueError):
    def __init__(self, flag_id: str, existing: "TriageDecision"):
        super().__init__(
            f"flag {flag_id} already decided as {existing.category!r} "
            f"by {existing.reviewer!r} at {existing.timestamp}"
        )
        self.existing = existing


class PendingFlagsError(RuntimeError):
    def __init__(self, pending_ids: Sequence[str]):
        super().__init__(
            f"{len(pending_ids)} flag(s) still pending: {', '.join(sorted(pending_ids))}"
        )
        self.pending_ids = list(pending_ids)


@dataclass(frozen=True)
class BenchmarkQuestion:
    id: str
    text: str
    answer: str | None = None


@dataclass
class BenchmarkSet:
    name: str
    questions: list[BenchmarkQuestion]

    def __post_init__(self) -> None:
        ids = [q.id for q in self.questions]
        if len(ids) != len(set(ids)):
            raise ConfigError(f"benchmark {self.name!r} has duplicate question ids")

    @classmethod
    def load(cls, path: str | Path, name: str | None = None) -> "BenchmarkSet":
        """Read line-delimited {id, question, answer?} records."""
        questions = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "id" not in obj or "question" not in obj:
                    raise ValueError(f"{path}:{line_no}: benchmark record needs id and question")
                questions.append(
                    BenchmarkQuestion(str(obj["id"]), obj["question"], obj.get("answer"))
                )
        return cls(name or Path(path).stem, questions)


def flag_id_for(train_id: str, benchmark: str, test_id: str) -> str:
    payload = json.dumps([train_id, benchmark, test_id])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ContaminationFlag:
    """A train/test pair scoring above the audit threshold, awaiting triage."""

    flag_id: str
    train_id: str
    benchmark: str
    test_id: str
    score: float
    train_source: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "flag_id": self.flag_id,
                "train_id": self.train_id,
                "benchmark": self.benchmark,
                "test_id": self.test_id,
                "score": self.score,
                "train_source": self.train_source,
            },
            sort_keys=True,
        )

    @classmethod
    def from_dict(cls, obj: dict) -> "ContaminationFlag":
        return cls(
            flag_id=obj["flag_id"],
            train_id=obj["train_id"],
            benchmark=obj["benchmark"],
            test_id=obj["test_id"],
            score=float(obj["score"]),
            train_source=obj.get("train_source", ""),
        )


@dataclass(frozen=True)
class TriageDecision:
    flag_id: str
    category: str
    reviewer: str
    timestamp: str
    note: str | None = None

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}, got {self.category!r}")

    def to_json(self) -> str:
        obj = {
            "flag_id": self.flag_id,
            "category": self.category,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
        }
        if self.note is not None:
            obj["note"] = self.note
        return json.dumps(obj, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "TriageDecision":
        return cls(
            flag_id=obj["flag_id"],
            category=obj["category"],
            reviewer=obj["reviewer"],
            timestamp=obj["timestamp"],
            note=obj.get("note"),
        )


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def audit(
    train: Sequence[QuestionRecord],
    benchmarks: Sequence[BenchmarkSet],
    threshold: float = DEFAULT_THRESHOLD,
    spec: EmbedderSpec | None = None,
) -> list[ContaminationFlag]:
    """Flag every (train record, benchmark question) pair with cosine > threshold.

    Question stems only (choices excluded on the benchmark side, instruction
    text on the train side).  Flags come back sorted by descending score,
    ties broken by (train_id, benchmark, test_id), so the audit is
    deterministic end to end.
    """
    if not benchmarks:
        raise ConfigError("audit requires at least one benchmark set")
    for bench in benchmarks:
        if not bench.questions:
            raise ConfigError(f"benchmark {bench.name!r} has no questions")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if not train:
        return []

    train_texts = [normalize_text(r.instruction) for r in train]
    bench_rows: list[tuple[str, BenchmarkQuestion]] = [
        (bench.name, q) for bench in benchmarks for q in bench.questions
    ]
    test_texts = [normalize_text(q.text) for _, q in bench_rows]

    embedder = make_embedder(spec or EmbedderSpec())
    embedder.fit(train_texts + test_texts)
    train_matrix = embedder.embed_many(train_texts)
    test_matrix = embedder.embed_many(test_texts)
    scores = train_matrix @ test_matrix.T

    flags: list[ContaminationFlag] = []
    for i, rec in enumerate(train):
        for j, (bench_name, question) in enumerate(bench_rows):
            score = float(min(1.0, max(-1.0, scores[i, j])))
            if score > threshold:
                flags.append(
                    ContaminationFlag(
                        flag_id=flag_id_for(rec.id, bench_name, question.id),
                        train_id=rec.id,
                        benchmark=bench_name,
                        test_id=question.id,
                        score=score,
                        train_source=rec.source,
                    )
                )
    flags.sort(key=lambda f: (-f.score, f.train_id, f.benchmark, f.test_id))
    return flags


class DecisionLog:
    """Append-only JSONL decision log; the durable source of truth."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, decision: TriageDecision) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(decision.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_all(self) -> list[TriageDecision]:
        if not self.path.exists():
            return []
        decisions = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    decisions.append(TriageDecision.from_dict(json.loads(line)))
        return decisions


@dataclass
class TriageState:
    """In-memory view of the triage queue: flags plus at-most-one decision each."""

    flags: dict[str, ContaminationFlag] = field(default_factory=dict)
    decisions: dict[str, TriageDecision] = field(default_factory=dict)

    @classmethod
    def from_flags(cls, flags: Iterable[ContaminationFlag]) -> "TriageState":
        return cls(flags={f.flag_id: f for f in flags})

    def status(self, flag_id: str) -> str:
        if flag_id not in self.flags:
            raise UnknownFlagError(flag_id)
        return "decided" if flag_id in self.decisions else "pending"

    def pending(self) -> list[ContaminationFlag]:
        return [f for fid, f in self.flags.items() if fid not in self.decisions]

    def decided(self) -> list[ContaminationFlag]:
        return [f for fid, f in self.flags.items() if fid in self.decisions]

    def check(self, decision: TriageDecision) -> None:
        """Raise unless the decision can be committed."""
        if decision.flag_id not in self.flags:
            raise UnknownFlagError(decision.flag_id)
        if decision.flag_id in self.decisions:
            raise AlreadyDecidedError(decision.flag_id, self.decisions[decision.flag_id])

    def apply(self, decision: TriageDecision) -> None:
        self.check(decision)
        self.decisions[decision.flag_id] = decision

    def progress(self) -> dict:
        per_category = {c: 0 for c in CATEGORIES}
        for d in self.decisions.values():
            per_category[d.category] += 1
        return {
            "pending": len(self.flags) - len(self.decisions),
            "decided": len(self.decisions),
            "per_category": per_category,
        }


def record_decision(
    state: TriageState, decision: TriageDecision, log: DecisionLog | None = None
) -> TriageState:
    """Validate, persist (log first), then apply a decision.

    Unknown flags and second decisions are rejected before anything is
    written, so the log never contains an invalid entry.
    """
    state.check(decision)
    if log is not None:
        log.append(decision)
    state.apply(decision)
    return state


def replay(flags: Iterable[ContaminationFlag], log: DecisionLog) -> TriageState:
    """Rebuild state from the durable log; equals the live state it mirrors.

    Decisions referencing flags that no longer exist (an audit rerun with
    different parameters can retire flags) are skipped; a second decision
    for a live flag still raises, since the single-writer log must never
    contain one.
    """
    state = TriageState.from_flags(flags)
    for decision in log.read_all():
        if decision.flag_id not in state.flags:
            continue
        state.apply(decision)
    return state


def apply_removal_policy(
    train: Sequence[QuestionRecord],
    flags: Sequence[ContaminationFlag],
    decisions: Mapping[str, TriageDecision],
    policy: str = "remove-all-flagged",
) -> list[QuestionRecord]:
    """Drop flagged records per policy, preserving input order.

    ``remove-all-flagged`` errs on the side of caution and needs no
    decisions; ``remove-duplicates-only`` requires every flag decided and
    drops only the duplicate-category ones.
    """
    if policy not in POLICIES:
        raise ConfigError(f"policy must be one of {sorted(POLICIES)}, got {policy!r}")
    if policy == "remove-all-flagged":
        drop_ids = {f.train_id for f in flags}
    else:
        pending = [f.flag_id for f in flags if f.flag_id not in decisions]
        if pending:
            raise PendingFlagsError(pending)
        drop_ids = {
            f.train_id for f in flags if decisions[f.flag_id].category == "duplicate"
        }
    return [r for r in train if r.id not in drop_ids]


@dataclass
class LeakReport:
    """Per-source counts of duplicate-category decisions; the Table-1 column."""

    per_source: dict[str, int]
    total: int

    def render_table(self) -> str:
        headers = ("Dataset Name", "# Leaked Questions")
        rows = [(name, str(count)) for name, count in self.per_source.items()]
        rows.append(("Total", str(self.total)))
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        def fmt(cols: tuple[str, str]) -> str:
            return "  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()
        lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
        lines.extend(fmt(r) for r in rows)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["dataset,leaked_questions"]
        lines.extend(f"{name},{count}" for name, count in self.per_source.items())
        lines.append(f"total,{self.total}")
        return "\n".join(lines) + "\n"


def leak_report(
    decisions: Mapping[str, TriageDecision],
    flags: Sequence[ContaminationFlag],
    manifest: DatasetManifest,
) -> LeakReport:
    """Count duplicate-category decisions per source dataset.

    Only ``duplicate`` contributes; gray-area and similar-but-different
    flags never count, whatever the removal policy did with them.
    """
    by_flag = {f.flag_id: f for f in flags}
    counts = {name: 0 for name in manifest.names()}
    for decision in decisions.values():
        if decision.category != "duplicate":
            continue
        flag = by_flag.get(decision.flag_id)
        if flag is None:
            continue
        counts[flag.train_source] = counts.get(flag.train_source, 0) + 1
    return LeakReport(per_source=counts, total=sum(counts.values()))


def suggest_category(
    flag: ContaminationFlag,
    train_record: QuestionRecord,
    test_question: BenchmarkQuestion,
) -> tuple[str, str]:
    """Non-binding triage suggestion; the final call is always human.

    Essentially-identical questions with matching answers look like true
    duplicates.  Questions that merely resemble each other but answer
    differently look similar-but-different.  Everything else (including
    identical questions whose answers differ, which may be synonyms) lands
    in the gray area.
    """
    train_answer = normalize_text(train_record.output)
    test_answer = normalize_text(test_question.answer) if test_question.answer else None
    same_question = flag.score >= SAME_QUESTION_SCORE
    if test_answer is not None and same_question and train_answer == test_answer:
        return (
            "duplicate",
            f"similarity {flag.score:.2f} with identical normalized answers",
        )
    if test_answer is not None and not same_question and train_answer != test_answer:
        return (
            "similar-but-different",
            f"similarity {flag.score:.2f} but the answers differ",
        )
    if test_answer is None:
        return ("gray-area", f"similarity {flag.score:.2f}; benchmark answer unavailable")
    if same_question:
        return (
            "gray-area",
            f"similarity {flag.score:.2f} with differing answers (possible synonyms)",
        )
    return ("gray-area", f"similarity {flag.score:.2f} with matching answers")
