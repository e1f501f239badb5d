"""Run a selection policy over task suites and aggregate the results.

Output directory layout::

    run.json                       manifest: config, pool checksum, accuracies,
                                   macro means, call counts, transcript index
    transcripts/<digest>.transcript.json
    report.md, report.csv, report.json
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from .backend import Backend
from .config import RunConfig
from .errors import BackendError, DatasetError, MetaReasonError
from .metrics import audit_reference_tables, fmt3
from .pool import Pool
from .report import MetricReport, emit_report
from .selector import RouteSettings, Transcript, route_and_solve, run_fixed
from .tasks.datasets import DEFAULT_RUBRIC, fixture_path, grade, load_dataset
from .tasks.types import TASK_ORDER, Example, TaskKind, Verdict

logger = logging.getLogger(__name__)

MANIFEST = "run.json"
TRANSCRIPTS = "transcripts"


@dataclass(frozen=True)
class ExampleRecord:
    example_id: str
    kind: TaskKind
    transcript: str
    verdict: Verdict

    def to_dict(self) -> dict:
        return {"example_id": self.example_id, "kind": self.kind.value,
                "transcript": self.transcript, "verdict": self.verdict.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> ExampleRecord:
        return cls(data["example_id"], TaskKind(data["kind"]), data["transcript"],
                   Verdict.from_dict(data["verdict"]))


@dataclass
class BenchmarkRun:
    config: dict
    pool_checksum: str
    label: str
    records: list[ExampleRecord] = field(default_factory=list)
    accuracies: dict[TaskKind, Fraction] = field(default_factory=dict)
    call_counts: dict[str, int] = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    status: str = "complete"

    def metric_report(self) -> MetricReport:
        report = MetricReport(self.label, dict(self.accuracies))
        if self.status != "complete":
            report.flags.append("incomplete run: accuracies cover processed examples only")
        return report

    def manifest(self) -> dict:
        report = self.metric_report() if self.accuracies else None
        return {
            "status": self.status,
            "label": self.label,
            "config": self.config,
            "pool_checksum": self.pool_checksum,
            "started": self.started,
            "finished": self.finished,
            "accuracies": {k.value: fmt3(v) for k, v in self.accuracies.items()},
            "accuracies_exact": {k.value: str(v) for k, v in self.accuracies.items()},
            "macro_arithmetic": fmt3(report.macro_arithmetic) if report else None,
            "macro_harmonic": fmt3(report.macro_harmonic) if report else None,
            "call_counts": self.call_counts,
            "records": [r.to_dict() for r in self.records],
            "reference_audit": audit_reference_tables(),
        }


def task_accuracies(records: list[ExampleRecord]) -> dict[TaskKind, Fraction]:
    """Mean verdict score per task; independent of record order."""
    totals: dict[TaskKind, list[Fraction]] = {}
    for r in records:
        totals.setdefault(r.kind, []).append(r.verdict.score)
    return {k: sum(v, Fraction(0)) / len(v) for k in TASK_ORDER if (v := totals.get(k))}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_examples(config: RunConfig) -> list[Example]:
    examples = []
    for spec in config.tasks:
        path = spec.path or fixture_path(spec.kind)
        try:
            loaded = load_dataset(path, spec.kind)
        except OSError as exc:
            raise DatasetError(f"cannot read {path}: {exc}") from exc
        examples += loaded[: spec.limit] if spec.limit else loaded
    return examples


def _policy_label(config: RunConfig) -> str:
    return config.fixed_method or config.policy


def _count_calls(records: list[ExampleRecord], transcripts: dict[str, Transcript],
                 pool_size: int) -> dict[str, int]:
    counts: Counter[str] = Counter()
    for r in records:
        t = transcripts[r.example_id]
        per = Counter(c.purpose for c in t.call_log)
        counts["scoring"] += per["scoring"]
        counts["execution"] += per["execution"]
        counts["cached"] += sum(c.cached for c in t.call_log)
        if t.decision is not None:
            counts["scoring_retries"] += per["scoring"] - pool_size
        counts["judge"] += len(r.verdict.judge_calls)
    counts["policy_calls"] = counts["scoring"] - counts["scoring_retries"] + counts["execution"]
    keys = ("scoring", "execution", "judge", "scoring_retries", "cached", "policy_calls")
    return {k: counts[k] for k in keys}


class _Runner:
    def __init__(self, config: RunConfig, backend: Backend | None, pool: Pool):
        self.config = config
        self.backend = backend
        self.pool = pool
        self.settings: RouteSettings = config.backend.route_settings()
        self.rubric = (config.rubric_path.read_text(encoding="utf-8")
                       if config.rubric_path else DEFAULT_RUBRIC)
        self.judge_model = config.backend.judge_model or config.backend.model
        self.prior: dict[str, tuple[Transcript, Verdict]] = {}
        if config.policy == "oracle_replay":
            self.prior = _load_prior(Path(config.replay_from))

    def process(self, ex: Example) -> tuple[Transcript, Verdict]:
        if self.config.policy == "oracle_replay":
            if ex.id not in self.prior:
                raise DatasetError(f"{ex.id}: not present in {self.config.replay_from}")
            transcript, old = self.prior[ex.id]
            if ex.kind is TaskKind.CODE_READABILITY:
                # model-judged: reuse the stored judgement, no backend exists here
                return transcript, old
            return transcript, grade(ex, transcript.final_output)
        if self.config.fixed_method:
            d = self.pool.get(self.config.fixed_method)
            transcript = run_fixed(self.backend, d, ex.input, self.settings)
        else:
            transcript = route_and_solve(self.backend, self.pool, ex.input, self.settings)
        verdict = grade(ex, transcript.final_output, self.backend, self.rubric, self.judge_model)
        return transcript, verdict


def _load_prior(run_dir: Path) -> dict[str, tuple[Transcript, Verdict]]:
    manifest_path = run_dir / MANIFEST
    if not manifest_path.is_file():
        raise DatasetError(f"no {MANIFEST} in {run_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    prior = {}
    for raw in manifest["records"]:
        rec = ExampleRecord.from_dict(raw)
        prior[rec.example_id] = (Transcript.read(run_dir / rec.transcript), rec.verdict)
    return prior


def run_benchmark(config: RunConfig, backend: Backend | None, pool: Pool,
                  write: bool = True) -> BenchmarkRun:
    examples = load_examples(config)
    ids = [ex.id for ex in examples]
    if len(set(ids)) != len(ids):
        raise DatasetError("example ids must be unique across configured tasks")
    runner = _Runner(config, backend, pool)
    label = _policy_label(config)
    if config.policy == "oracle_replay":
        prior_manifest = json.loads((Path(config.replay_from) / MANIFEST).read_text("utf-8"))
        label = prior_manifest.get("label", label)

    run = BenchmarkRun(config.snapshot(), pool.checksum, label, started=_now())
    results: dict[int, tuple[Transcript, Verdict]] = {}
    failure: BaseException | None = None
    with ThreadPoolExecutor(config.parallelism) as ex_pool:
        futures = {ex_pool.submit(runner.process, ex): i for i, ex in enumerate(examples)}
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        for fut in pending:
            fut.cancel()
        for fut in futures:
            if fut.cancelled() or not fut.done():
                continue
            exc = fut.exception()
            if exc is not None:
                failure = failure or exc
                continue
            results[futures[fut]] = fut.result()

    # deterministic order regardless of completion order
    ordered = sorted(results, key=lambda i: (TASK_ORDER.index(examples[i].kind), examples[i].id))
    transcripts = {}
    for i in ordered:
        ex = examples[i]
        transcript, verdict = results[i]
        transcripts[ex.id] = transcript
        name = f"{TRANSCRIPTS}/{transcript.digest}.transcript.json"
        run.records.append(ExampleRecord(ex.id, ex.kind, name, verdict))
    run.accuracies = task_accuracies(run.records)
    run.call_counts = _count_calls(run.records, transcripts, len(pool))
    run.finished = _now()
    if failure is not None:
        run.status = "incomplete"

    if write:
        write_run(run, transcripts, Path(config.output_dir))
    if failure is not None:
        if isinstance(failure, MetaReasonError):
            raise failure
        raise BackendError(f"run aborted: {failure}") from failure
    return run


def write_run(run: BenchmarkRun, transcripts: dict[str, Transcript], out: Path) -> None:
    (out / TRANSCRIPTS).mkdir(parents=True, exist_ok=True)
    for rec in run.records:
        (out / rec.transcript).write_text(transcripts[rec.example_id].to_json(), encoding="utf-8")
    (out / MANIFEST).write_text(json.dumps(run.manifest(), indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    if run.accuracies:
        report = [run.metric_report()]
        (out / "report.md").write_text(emit_report(report, "markdown"), encoding="utf-8")
        (out / "report.csv").write_text(emit_report(report, "csv"), encoding="utf-8")
        (out / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")
