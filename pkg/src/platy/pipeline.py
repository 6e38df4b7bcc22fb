"""End-to-end staged pipeline with content-addressed stage caching.

Stages run in order (ingest, filter, dedup, audit, apply); each stage
persists its outputs plus a key derived from its inputs and the relevant
config subset, so reruns skip work that is already done and resume from the
last completed stage.  The run manifest is rewritten atomically at every
stage boundary.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import corpus, decontam, similarity
from .corpus import (
    ConfigError,
    DatasetManifest,
    KeywordFilterSpec,
    ManifestEntry,
    format_alpaca,
)
from .decontam import BenchmarkSet, DecisionLog, replay
from .similarity import EmbedderSpec

STAGE_ORDER = ("ingest", "filter", "dedup", "audit", "apply")
STAGE_DIRS = {
    "ingest": "10_ingest",
    "filter": "20_filter",
    "dedup": "30_dedup",
    "audit": "40_audit",
    "apply": "50_apply",
}


@dataclass(frozen=True)
class SourceSpec:
    name: str
    license: str
    path: str


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    path: str


@dataclass
class PipelineConfig:
    """Everything a run needs; round-trips through its JSON file form."""

    sources: list[SourceSpec]
    benchmarks: list[BenchmarkSpec]
    out_dir: str
    keyword_filter: KeywordFilterSpec | None = None
    similarity_threshold: float = 0.80
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    removal_policy: str = "remove-all-flagged"
    bind: str = "127.0.0.1:8707"
    ui_dir: str = ""

    def validate(self, check_paths: bool = False) -> None:
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ConfigError(
                f"similarity_threshold must be in (0, 1], got {self.similarity_threshold}"
            )
        if self.removal_policy not in decontam.POLICIES:
            raise ConfigError(f"unknown removal policy {self.removal_policy!r}")
        if not self.sources:
            raise ConfigError("config needs at least one source dataset")
        names = [s.name for s in self.sources]
        if len(names) != len(set(names)):
            raise ConfigError("source dataset names must be unique")
        if self.keyword_filter is not None:
            self.keyword_filter.validate()
        if check_paths:
            missing = [s.path for s in self.sources if not Path(s.path).exists()]
            missing += [b.path for b in self.benchmarks if not Path(b.path).exists()]
            if missing:
                raise ConfigError(f"input paths do not exist: {', '.join(missing)}")

    def to_dict(self) -> dict:
        return {
            "sources": [
                {"name": s.name, "license": s.license, "path": s.path} for s in self.sources
            ],
            "benchmarks": [{"name": b.name, "path": b.path} for b in self.benchmarks],
            "out_dir": self.out_dir,
            "keyword_filter": (
                None
                if self.keyword_filter is None
                else {
                    "keywords": self.keyword_filter.keywords,
                    "mode": self.keyword_filter.mode,
                    "scope": self.keyword_filter.scope,
                }
            ),
            "similarity_threshold": self.similarity_threshold,
            "embedder": {
                "kind": self.embedder.kind,
                "dim": self.embedder.dim,
                "char_ngram": self.embedder.char_ngram,
                "endpoint": self.embedder.endpoint,
            },
            "removal_policy": self.removal_policy,
            "bind": self.bind,
            "ui_dir": self.ui_dir,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        kf = obj.get("keyword_filter")
        emb = obj.get("embedder", {})
        return cls(
            sources=[SourceSpec(s["name"], s.get("license", ""), s["path"])
                     for s in obj["sources"]],
            benchmarks=[BenchmarkSpec(b["name"], b["path"])
                        for b in obj.get("benchmarks", [])],
            out_dir=obj["out_dir"],
            keyword_filter=(
                None if kf is None
                else KeywordFilterSpec(kf["keywords"], kf.get("mode", "keep-matching"),
                                       kf.get("scope", "instruction-only"))
            ),
            similarity_threshold=obj.get("similarity_threshold", 0.80),
            embedder=EmbedderSpec(
                kind=emb.get("kind", "builtin-lexical"),
                dim=emb.get("dim", similarity.DEFAULT_DIM),
                char_ngram=emb.get("char_ngram", 3),
                endpoint=emb.get("endpoint", ""),
            ),
            removal_policy=obj.get("removal_policy", "remove-all-flagged"),
            bind=obj.get("bind", "127.0.0.1:8707"),
            ui_dir=obj.get("ui_dir", ""),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def dataset_manifest(self) -> DatasetManifest:
        return DatasetManifest([ManifestEntry(s.name, s.license) for s in self.sources])

    def decisions_log_path(self) -> Path:
        log_dir = os.environ.get("PLATY_LOG_DIR", "").strip()
        base = Path(log_dir) if log_dir else Path(self.out_dir)
        return base / "decisions.jsonl"


def _hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def write_flags(path: Path, flags) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for flag in flags:
            fh.write(flag.to_json() + "\n")


def load_flags(path: str | Path) -> list[decontam.ContaminationFlag]:
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                flags.append(decontam.ContaminationFlag.from_dict(json.loads(line)))
    return flags


class PipelineRunner:
    """Executes stages against an output directory, reusing cached results."""

    def __init__(self, config: PipelineConfig):
        config.validate(check_paths=True)
        self.config = config
        self.out = Path(config.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()

    # -- manifest ------------------------------------------------------------

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            with open(self.manifest_path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        return {"stages": {}}

    def _write_manifest(self) -> None:
        tmp = self.manifest_path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.manifest_path)

    # -- stage plumbing --------------------------------------------------------

    def _stage_dir(self, stage: str) -> Path:
        return self.out / STAGE_DIRS[stage]

    def _stage_meta_path(self, stage: str) -> Path:
        return self._stage_dir(stage) / "stage.json"

    def _cached(self, stage: str, key: str) -> dict | None:
        meta_path = self._stage_meta_path(stage)
        if not meta_path.exists():
            return None
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("key") != key:
            return None
        for name in meta.get("outputs", []):
            if not (self._stage_dir(stage) / name).exists():
                return None
        return meta

    def _run_stage(self, stage: str, key: str, fn: Callable[[Path], dict]) -> dict:
        meta = self._cached(stage, key)
        cached = meta is not None
        if not cached:
            stage_dir = self._stage_dir(stage)
            if stage_dir.exists():
                shutil.rmtree(stage_dir)
            stage_dir.mkdir(parents=True)
            started = decontam.utc_now()
            result = fn(stage_dir)
            meta = {
                "key": key,
                "outputs": result["outputs"],
                "in_count": result["in_count"],
                "out_count": result["out_count"],
                "started": started,
                "finished": decontam.utc_now(),
            }
            with open(self._stage_meta_path(stage), "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)
        record = dict(meta)
        record["cached"] = cached
        self.manifest["stages"][stage] = record
        self.manifest["completed_through"] = stage
        self._write_manifest()
        return record

    # -- stages ----------------------------------------------------------------

    def _ingest_key(self) -> str:
        return _hash_obj({
            "stage": "ingest",
            "sources": [(s.name, s.license, _hash_file(s.path)) for s in self.config.sources],
        })

    def _stage_ingest(self, stage_dir: Path) -> dict:
        records = []
        diagnostics = []
        in_count = 0
        for source in self.config.sources:
            entry = ManifestEntry(source.name, source.license)
            with open(source.path, "r", encoding="utf-8") as fh:
                lines = [ln for ln in fh]
            in_count += sum(1 for ln in lines if ln.strip())
            result = corpus.ingest(lines, entry)
            records.extend(result.records)
            diagnostics.extend(
                {"source": source.name, "line_no": d.line_no, "error": d.error, "line": d.line}
                for d in result.diagnostics
            )
        corpus.write_records(stage_dir / "records.jsonl", records)
        with open(stage_dir / "diagnostics.jsonl", "w", encoding="utf-8") as fh:
            for diag in diagnostics:
                fh.write(json.dumps(diag, sort_keys=True, ensure_ascii=False) + "\n")
        return {
            "outputs": ["records.jsonl", "diagnostics.jsonl"],
            "in_count": in_count,
            "out_count": len(records),
        }

    def _stage_filter(self, prev_key: str) -> tuple[str, Callable[[Path], dict]]:
        kf = self.config.keyword_filter
        key = _hash_obj({
            "stage": "filter",
            "prev": prev_key,
            "spec": None if kf is None else [kf.keywords, kf.mode, kf.scope],
        })

        def run(stage_dir: Path) -> dict:
            records = corpus.load_records(self._stage_dir("ingest") / "records.jsonl")
            kept = records if kf is None else corpus.keyword_filter(records, kf)
            corpus.write_records(stage_dir / "records.jsonl", kept)
            return {
                "outputs": ["records.jsonl"],
                "in_count": len(records),
                "out_count": len(kept),
            }

        return key, run

    def _stage_dedup(self, prev_key: str) -> tuple[str, Callable[[Path], dict]]:
        key = _hash_obj({
            "stage": "dedup",
            "prev": prev_key,
            "threshold": self.config.similarity_threshold,
            "embedder": self.config.embedder.identity,
        })

        def run(stage_dir: Path) -> dict:
            records = corpus.load_records(self._stage_dir("filter") / "records.jsonl")
            groups = similarity.exact_duplicates(records)
            pairs = similarity.near_duplicates(
                records, self.config.similarity_threshold, self.config.embedder
            )
            result = similarity.resolve_duplicates(records, groups, pairs)
            corpus.write_records(stage_dir / "survivors.jsonl", result.survivors)
            corpus.write_records(stage_dir / "removed.jsonl", result.removed)
            with open(stage_dir / "resolution_log.jsonl", "w", encoding="utf-8") as fh:
                for entry in result.log:
                    fh.write(json.dumps(
                        {"removed_id": entry.removed_id, "survivor_id": entry.survivor_id,
                         "reason": entry.reason},
                        sort_keys=True) + "\n")
            return {
                "outputs": ["survivors.jsonl", "removed.jsonl", "resolution_log.jsonl"],
                "in_count": len(records),
                "out_count": len(result.survivors),
            }

        return key, run

    def _stage_audit(self, prev_key: str) -> tuple[str, Callable[[Path], dict]]:
        key = _hash_obj({
            "stage": "audit",
            "prev": prev_key,
            "benchmarks": [(b.name, _hash_file(b.path)) for b in self.config.benchmarks],
            "threshold": self.config.similarity_threshold,
            "embedder": self.config.embedder.identity,
        })

        def run(stage_dir: Path) -> dict:
            records = corpus.load_records(self._stage_dir("dedup") / "survivors.jsonl")
            benchmarks = [BenchmarkSet.load(b.path, b.name) for b in self.config.benchmarks]
            flags = decontam.audit(
                records, benchmarks, self.config.similarity_threshold, self.config.embedder
            )
            write_flags(stage_dir / "flags.jsonl", flags)
            return {
                "outputs": ["flags.jsonl"],
                "in_count": len(records),
                "out_count": len(flags),
            }

        return key, run

    def _stage_apply(self, prev_key: str) -> tuple[str, Callable[[Path], dict]]:
        log_path = self.config.decisions_log_path()
        key = _hash_obj({
            "stage": "apply",
            "prev": prev_key,
            "policy": self.config.removal_policy,
            "decisions": _hash_file(log_path) if log_path.exists() else "",
        })

        def run(stage_dir: Path) -> dict:
            records = corpus.load_records(self._stage_dir("dedup") / "survivors.jsonl")
            flags = load_flags(self._stage_dir("audit") / "flags.jsonl")
            state = replay(flags, DecisionLog(log_path))
            cleaned = decontam.apply_removal_policy(
                records, flags, state.decisions, self.config.removal_policy
            )
            corpus.write_records(stage_dir / "cleaned.jsonl", cleaned)

            prompts_dir = stage_dir / "alpaca"
            prompts_dir.mkdir()
            for rec in cleaned:
                with open(prompts_dir / f"{rec.id}.txt", "w", encoding="utf-8", newline="") as fh:
                    fh.write(format_alpaca(rec))

            report = decontam.leak_report(
                state.decisions, flags, self.config.dataset_manifest()
            )
            (stage_dir / "leak_report.txt").write_text(report.render_table(), encoding="utf-8")
            (stage_dir / "leak_report.csv").write_text(report.to_csv(), encoding="utf-8")
            manifest = self.config.dataset_manifest().with_leak_counts(report.per_source)
            (stage_dir / "dataset_manifest.txt").write_text(
                manifest.render_table(), encoding="utf-8"
            )
            return {
                "outputs": ["cleaned.jsonl", "alpaca", "leak_report.txt",
                            "leak_report.csv", "dataset_manifest.txt"],
                "in_count": len(records),
                "out_count": len(cleaned),
            }

        return key, run

    # -- orchestration ----------------------------------------------------------

    def pending_flag_ids(self) -> list[str]:
        flags_path = self._stage_dir("audit") / "flags.jsonl"
        if not flags_path.exists():
            return []
        flags = load_flags(flags_path)
        state = replay(flags, DecisionLog(self.config.decisions_log_path()))
        return [f.flag_id for f in state.pending()]

    def run(self, until: str = "apply") -> dict:
        if until not in STAGE_ORDER:
            raise ConfigError(f"unknown stage {until!r}; stages are {STAGE_ORDER}")
        # the manifest describes this run; stage.json files on disk stay the
        # cache authority, so cached stages reappear here as they are walked
        self.manifest["stages"] = {}
        self.manifest["started"] = decontam.utc_now()
        self.manifest["config"] = self.config.to_dict()
        self.manifest["embedder"] = self.config.embedder.identity
        self.manifest["status"] = "running"
        self.manifest["run_id"] = self._ingest_key()[:16]
        self.manifest.pop("failed_stage", None)
        self._write_manifest()

        stop_at = STAGE_ORDER.index(until)
        current = "ingest"
        try:
            key = self._ingest_key()
            self._run_stage("ingest", key, self._stage_ingest)
            for stage in STAGE_ORDER[1:stop_at + 1]:
                current = stage
                if stage == "apply":
                    # Triage gate: the fine-grained policy needs every flag decided.
                    pending = self.pending_flag_ids()
                    if self.config.removal_policy == "remove-duplicates-only" and pending:
                        self.manifest["status"] = "awaiting-triage"
                        self.manifest["pending_flags"] = pending
                        self.manifest["finished"] = decontam.utc_now()
                        self._write_manifest()
                        return self.manifest
                builder = getattr(self, f"_stage_{stage}")
                key, fn = builder(key)
                self._run_stage(stage, key, fn)
        except Exception:
            self.manifest["status"] = "failed"
            self.manifest["failed_stage"] = current
            self.manifest["finished"] = decontam.utc_now()
            self._write_manifest()
            raise

        self.manifest["status"] = "complete" if until == "apply" else f"through-{until}"
        self.manifest.pop("pending_flags", None)
        self.manifest["finished"] = decontam.utc_now()
        self._write_manifest()
        return self.manifest


def run_pipeline(config: PipelineConfig, until: str = "apply") -> dict:
    """Run (or resume) the pipeline; returns the run manifest."""
    return PipelineRunner(config).run(until)
