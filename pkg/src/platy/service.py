"""HTTP review service for the contamination triage queue.

Serves flagged train/test pairs with texts and a non-binding suggestion,
accepts exactly one decision per flag (conflicts get 409 with the earlier
decision), and appends every accepted decision to the durable log before
acknowledging.  Also serves the static review UI when one is built.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import decontam
from .corpus import QuestionRecord
from .decontam import (
    AlreadyDecidedError,
    BenchmarkQuestion,
    BenchmarkSet,
    DecisionLog,
    TriageDecision,
    UnknownFlagError,
    replay,
    suggest_category,
)
from .pipeline import STAGE_DIRS, PipelineConfig, load_flags

DEFAULT_BIND = "127.0.0.1:8707"


class ServiceSetupError(RuntimeError):
    pass


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ServiceSetupError(f"bind address must be host:port, got {bind!r}")
    return host, int(port)


class ReviewService:
    """Triage state plus the record/benchmark texts needed to display pairs."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        out = Path(config.out_dir)
        flags_path = out / STAGE_DIRS["audit"] / "flags.jsonl"
        if not flags_path.exists():
            raise ServiceSetupError(
                f"no audit flags at {flags_path}; run the audit stage first"
            )
        survivors_path = out / STAGE_DIRS["dedup"] / "survivors.jsonl"
        if not survivors_path.exists():
            raise ServiceSetupError(f"missing dedup survivors at {survivors_path}")

        from .corpus import load_records

        self.flags = load_flags(flags_path)
        self.records: dict[str, QuestionRecord] = {
            r.id: r for r in load_records(survivors_path)
        }
        self.questions: dict[tuple[str, str], BenchmarkQuestion] = {}
        for spec in config.benchmarks:
            bench = BenchmarkSet.load(spec.path, spec.name)
            for q in bench.questions:
                self.questions[(bench.name, q.id)] = q
        self.log = DecisionLog(config.decisions_log_path())
        self.state = replay(self.flags, self.log)
        self.lock = threading.Lock()

    def queue_item(self, flag: decontam.ContaminationFlag) -> dict:
        record = self.records.get(flag.train_id)
        question = self.questions.get((flag.benchmark, flag.test_id))
        item = {
            "flag_id": flag.flag_id,
            "train_id": flag.train_id,
            "benchmark": flag.benchmark,
            "test_id": flag.test_id,
            "score": flag.score,
            "status": "decided" if flag.flag_id in self.state.decisions else "pending",
            "train": None,
            "test": None,
            "suggestion": None,
            "decision": None,
        }
        if record is not None:
            item["train"] = {
                "instruction": record.instruction,
                "output": record.output,
                "source": record.source,
            }
        if question is not None:
            item["test"] = {
                "question": question.text,
                "answer": question.answer,
                "benchmark": flag.benchmark,
            }
        if record is not None and question is not None:
            category, rationale = suggest_category(flag, record, question)
            item["suggestion"] = {"category": category, "rationale": rationale}
        decision = self.state.decisions.get(flag.flag_id)
        if decision is not None:
            item["decision"] = {
                "category": decision.category,
                "reviewer": decision.reviewer,
                "timestamp": decision.timestamp,
                "note": decision.note,
            }
        return item

    def queue(self, status: str = "pending") -> list[dict]:
        items = [self.queue_item(f) for f in self.flags]
        if status != "all":
            items = [i for i in items if i["status"] == status]
        return items  # flags are already stored in descending-score order

    def decide(self, payload: dict) -> TriageDecision:
        """Validate, persist, and apply one decision; at-most-once per flag."""
        for key in ("flag_id", "category", "reviewer"):
            if key not in payload or not isinstance(payload[key], str) or not payload[key]:
                raise ValueError(f"decision payload needs a non-empty string {key!r}")
        note = payload.get("note")
        if note is not None and not isinstance(note, str):
            raise ValueError("note must be a string when present")
        decision = TriageDecision(
            flag_id=payload["flag_id"],
            category=payload["category"],
            reviewer=payload["reviewer"],
            timestamp=payload.get("timestamp") or decontam.utc_now(),
            note=note,
        )
        with self.lock:
            self.state.check(decision)
            self.log.append(decision)
            self.state.apply(decision)
        return decision

    def leak_report(self) -> dict:
        report = decontam.leak_report(
            self.state.decisions, self.flags, self.config.dataset_manifest()
        )
        return {"per_source": report.per_source, "total": report.total}

    def progress(self) -> dict:
        return self.state.progress()


class ReviewHandler(BaseHTTPRequestHandler):
    service: ReviewService
    ui_dir: Path | None = None

    # -- helpers -------------------------------------------------------------

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str, **extra) -> None:
        self._send_json(status, {"error": message, **extra})

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        pass  # keep the test output quiet; decisions are logged durably anyway

    # -- routes ----------------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802
        url = urlparse(self.path)
        if url.path == "/api/queue":
            params = parse_qs(url.query)
            status = params.get("status", ["pending"])[0]
            if status not in ("pending", "decided", "all"):
                self._send_error_json(400, f"unknown status filter {status!r}")
                return
            self._send_json(200, self.service.queue(status))
        elif url.path.startswith("/api/flags/"):
            flag_id = url.path[len("/api/flags/"):]
            flag = self.service.state.flags.get(flag_id)
            if flag is None:
                self._send_error_json(404, f"unknown flag {flag_id!r}")
                return
            self._send_json(200, self.service.queue_item(flag))
        elif url.path == "/api/report":
            self._send_json(200, self.service.leak_report())
        elif url.path == "/api/progress":
            self._send_json(200, self.service.progress())
        else:
            self._serve_static(url.path)

    def do_POST(self) -> None:  # noqa: N802
        url = urlparse(self.path)
        if url.path != "/api/decisions":
            self._send_error_json(404, f"no POST route {url.path!r}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(payload, dict):
                raise ValueError("decision payload must be a JSON object")
            decision = self.service.decide(payload)
        except UnknownFlagError as exc:
            self._send_error_json(404, f"unknown flag {exc.args[0]!r}")
        except AlreadyDecidedError as exc:
            self._send_error_json(
                409,
                str(exc),
                existing={
                    "category": exc.existing.category,
                    "reviewer": exc.existing.reviewer,
                    "timestamp": exc.existing.timestamp,
                    "note": exc.existing.note,
                },
            )
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_error_json(400, str(exc))
        else:
            self._send_json(
                201,
                {
                    "flag_id": decision.flag_id,
                    "category": decision.category,
                    "reviewer": decision.reviewer,
                    "timestamp": decision.timestamp,
                    "note": decision.note,
                },
            )

    # -- static UI ---------------------------------------------------------------

    def _serve_static(self, path: str) -> None:
        if self.ui_dir is None:
            self._send_error_json(404, f"no route {path!r}")
            return
        rel = path.lstrip("/") or "index.html"
        root = self.ui_dir.resolve()
        target = (self.ui_dir / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            self._send_error_json(404, f"no file {path!r}")
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(config: PipelineConfig) -> ThreadingHTTPServer:
    """Bind the review service; PLATY_BIND overrides the configured address."""
    service = ReviewService(config)
    bind = os.environ.get("PLATY_BIND", "").strip() or config.bind or DEFAULT_BIND
    host, port = parse_bind(bind)

    handler = type("BoundReviewHandler", (ReviewHandler,), {
        "service": service,
        "ui_dir": Path(config.ui_dir) if config.ui_dir else None,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve(config: PipelineConfig) -> None:
    server = make_server(config)
    host, port = server.server_address[:2]
    print(f"review service listening on http://{host}:{port}/", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
