"""Canonical record model: ingestion, keyword filtering, and prompt formatting.

Source datasets arrive as line-delimited JSON records with at least an
``instruction`` and ``output`` field.  Records are stamped with the source
dataset's name and license and given a stable content-derived id so that
dedup bookkeeping survives re-runs.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

ORIGINS = frozenset({"human", "llm-generated"})
FILTER_MODES = frozenset({"keep-matching", "drop-matching"})
FILTER_SCOPES = frozenset({"instruction-only", "all-fields"})

# Illustrative keyword set for STEM/logic filtering.  This is example
# configuration, not a canonical list; callers supply their own.
EXAMPLE_STEM_KEYWORDS = [
    "theorem", "proof", "integral", "derivative", "equation", "algebra",
    "geometry", "probability", "matrix", "vector", "molecule", "atom",
    "physics", "chemistry", "biology", "algorithm", "logic", "prime",
]

# Prompt templates, frozen byte-for-byte (including line breaks and the
# trailing spaces on the wrapped header lines).
ALPACA_TEMPLATE_WITH_INPUT = (
    "Below is an instruction that describes a task, paired with an input\n"
    "that provides further context. Write a response that appropriately \n"
    "completes the request.\n"
    "\n"
    "### Instruction:\n"
    "{instruction}\n"
    "\n"
    "### Input:\n"
    "{input}\n"
    "\n"
    "### Response:\n"
)

ALPACA_TEMPLATE_NO_INPUT = (
    "Below is an instruction that describes a task. Write a response that \n"
    "appropriately completes the request.\n"
    "\n"
    "### Instruction:\n"
    "{instruction}\n"
    "\n"
    "### Response:\n"
)


class ConfigError(ValueError):
    """Invalid configuration (empty keyword list, bad mode, ...)."""


def normalize_text(text: str) -> str:
    """Canonicalize text: NFKC + lowercase to a fixpoint, collapse whitespace.

    A single NFKC-then-lower pass is not idempotent (e.g. U+03D3 normalizes
    to an uppercase letter), so the transform is repeated until stable.
    """
    prev = None
    out = text
    while out != prev:
        prev = out
        out = unicodedata.normalize("NFKC", out).lower()
    return " ".join(out.split())


def record_id(instruction: str, input: str, output: str, source: str) -> str:
    """Stable id: content hash of the normalized fields plus source name."""
    payload = json.dumps(
        [normalize_text(instruction), normalize_text(input), normalize_text(output), source],
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class QuestionRecord:
    """One instruction-tuning example with provenance."""

    id: str
    instruction: str
    input: str
    output: str
    source: str
    license: str
    origin: str = "human"

    @classmethod
    def create(
        cls,
        instruction: str,
        output: str,
        input: str = "",
        source: str = "",
        license: str = "",
        origin: str = "human",
    ) -> "QuestionRecord":
        if not normalize_text(instruction):
            raise ValueError("instruction is empty after normalization")
        if origin not in ORIGINS:
            raise ValueError(f"origin must be one of {sorted(ORIGINS)}, got {origin!r}")
        return cls(
            id=record_id(instruction, input, output, source),
            instruction=instruction,
            input=input,
            output=output,
            source=source,
            license=license,
            origin=origin,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "instruction": self.instruction,
                "input": self.input,
                "output": self.output,
                "source": self.source,
                "license": self.license,
                "origin": self.origin,
            },
            ensure_ascii=False,
            sort_keys=True,
        )


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    license: str
    leaked_count: int = 0


@dataclass
class DatasetManifest:
    """Datasets, licenses, and leaked-question counts."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries]
        if len(names) != len(set(names)):
            raise ConfigError("manifest dataset names must be unique")
        for e in self.entries:
            if e.leaked_count < 0:
                raise ConfigError(f"negative leaked_count for {e.name}")

    def get(self, name: str) -> ManifestEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def with_leak_counts(self, per_source: dict[str, int]) -> "DatasetManifest":
        """New manifest with leaked counts replaced by `per_source` tallies."""
        return DatasetManifest(
            [replace(e, leaked_count=per_source.get(e.name, 0)) for e in self.entries]
        )

    def render_table(self) -> str:
        headers = ("Dataset Name", "License Type", "# Leaked Questions")
        rows = [(e.name, e.license, str(e.leaked_count)) for e in self.entries]
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
                  for i, h in enumerate(headers)]
        def fmt(cols: tuple[str, str, str]) -> str:
            return "  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()
        lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
        lines.extend(fmt(r) for r in rows)
        return "\n".join(lines) + "\n"


@dataclass
class KeywordFilterSpec:
    """Case-insensitive substring filter over normalized record text."""

    keywords: list[str]
    mode: str = "keep-matching"
    scope: str = "instruction-only"

    def __post_init__(self) -> None:
        self.keywords = [normalize_text(k) for k in self.keywords]

    def validate(self) -> None:
        if not self.keywords or any(not k for k in self.keywords):
            raise ConfigError("active keyword filter requires a non-empty keyword list")
        if self.mode not in FILTER_MODES:
            raise ConfigError(f"mode must be one of {sorted(FILTER_MODES)}, got {self.mode!r}")
        if self.scope not in FILTER_SCOPES:
            raise ConfigError(f"scope must be one of {sorted(FILTER_SCOPES)}, got {self.scope!r}")


@dataclass(frozen=True)
class IngestDiagnostic:
    line_no: int
    error: str
    line: str


@dataclass
class IngestResult:
    records: list[QuestionRecord]
    diagnostics: list[IngestDiagnostic]


def _parse_line(line: str, line_no: int, entry: ManifestEntry) -> QuestionRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    for key in ("instruction", "output"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
        if not isinstance(obj[key], str):
            raise ValueError(f"field {key!r} is not a string")
    input_text = obj.get("input", "")
    if not isinstance(input_text, str):
        raise ValueError("field 'input' is not a string")
    origin = obj.get("origin", "human")
    if origin not in ORIGINS:
        raise ValueError(f"unknown origin {origin!r}")
    if not normalize_text(obj["instruction"]):
        raise ValueError("instruction is empty after normalization")
    return QuestionRecord.create(
        instruction=obj["instruction"],
        input=input_text,
        output=obj["output"],
        source=entry.name,
        license=entry.license,
        origin=origin,
    )


def ingest(stream: Iterable[str], entry: ManifestEntry) -> IngestResult:
    """Parse line-delimited records, stamping source and license.

    Malformed lines become per-line diagnostics instead of being silently
    dropped; blank lines are skipped.
    """
    records: list[QuestionRecord] = []
    diagnostics: list[IngestDiagnostic] = []
    for line_no, line in enumerate(stream, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            records.append(_parse_line(stripped, line_no, entry))
        except ValueError as exc:
            diagnostics.append(IngestDiagnostic(line_no, str(exc), stripped[:200]))
    return IngestResult(records, diagnostics)


def serialize(records: Iterable[QuestionRecord]) -> Iterator[str]:
    """Records back to line-delimited JSON (inverse of ingest for valid records)."""
    for rec in records:
        yield rec.to_json()


def write_records(path, records: Iterable[QuestionRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for line in serialize(records):
            fh.write(line + "\n")
            n += 1
    return n


def load_records(path) -> list[QuestionRecord]:
    """Read records previously written by ``write_records`` (all fields present)."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                QuestionRecord(
                    id=obj["id"],
                    instruction=obj["instruction"],
                    input=obj.get("input", ""),
                    output=obj["output"],
                    source=obj.get("source", ""),
                    license=obj.get("license", ""),
                    origin=obj.get("origin", "human"),
                )
            )
    return records


def keyword_filter(records: list[QuestionRecord], spec: KeywordFilterSpec) -> list[QuestionRecord]:
    """Keep (or drop) records containing at least one keyword, order preserved."""
    spec.validate()

    def matches(rec: QuestionRecord) -> bool:
        if spec.scope == "instruction-only":
            fields = [rec.instruction]
        else:
            fields = [rec.instruction, rec.input, rec.output]
        text = " ".join(normalize_text(f) for f in fields)
        return any(k in text for k in spec.keywords)

    keep = spec.mode == "keep-matching"
    return [r for r in records if matches(r) == keep]


def format_alpaca(record: QuestionRecord) -> str:
    """Render the record as a prompt, byte-exact against the fixed templates.

    An empty input selects the no-input template; substitution is plain text
    replacement so braces in the record text pass through untouched.
    """
    if record.input:
        head, rest = ALPACA_TEMPLATE_WITH_INPUT.split("{instruction}")
        mid, tail = rest.split("{input}")
        return head + record.instruction + mid + record.input + tail
    head, tail = ALPACA_TEMPLATE_NO_INPUT.split("{instruction}")
    return head + record.instruction + tail
