"""Command-line entry point.

    metareason route --config run.toml --input "..." [--json]
    metareason bench --config run.toml [--policy fixed:tot] [--cache replay] [--json]
    metareason pool list | pool show ID [--pool-dir DIR]
    metareason replay RUN_DIR [--json]

Exit status: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .backend import CACHE_MODES
from .config import RunConfig, build_backend, config_from_snapshot, load_config
from .errors import MetaReasonError
from .harness import MANIFEST, run_benchmark
from .metrics import fmt3
from .pool import default_pool, load_pool
from .report import emit_report
from .selector import route_and_solve

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


class _StoreOnce(argparse.Action):
    """Rejects a second occurrence of the same option."""

    def __call__(self, parser, namespace, values, option_string=None):
        if getattr(namespace, f"_seen_{self.dest}", False):
            raise UsageError(f"{option_string} given more than once")
        setattr(namespace, f"_seen_{self.dest}", True)
        setattr(namespace, self.dest, values)


@dataclass(frozen=True)
class Command:
    name: str
    config: Path | None = None
    input: str | None = None
    input_file: Path | None = None
    policy: str | None = None
    cache: str | None = None
    pool_action: str | None = None
    method_id: str | None = None
    pool_dir: Path | None = None
    run_dir: Path | None = None
    json: bool = False


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metareason", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    route = sub.add_parser("route", help="score the pool for one input and run the winner")
    route.add_argument("--config", type=Path, required=True, action=_StoreOnce)
    src = route.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="task input text")
    src.add_argument("--input-file", type=Path, help="file holding the task input")
    route.add_argument("--json", action="store_true", help="print the transcript as JSON")

    bench = sub.add_parser("bench", help="run a policy over the configured tasks")
    bench.add_argument("--config", type=Path, required=True, action=_StoreOnce)
    bench.add_argument("--policy", action=_StoreOnce, help="mrp | fixed:<method id> | oracle_replay")
    bench.add_argument("--cache", choices=CACHE_MODES, action=_StoreOnce)
    bench.add_argument("--json", action="store_true", help="print report.json instead of markdown")

    pool = sub.add_parser("pool", help="inspect the reasoning pool")
    pool.add_argument("action", choices=("list", "show"))
    pool.add_argument("method_id", nargs="?")
    pool.add_argument("--pool-dir", type=Path)

    replay = sub.add_parser("replay", help="re-grade a finished run offline")
    replay.add_argument("run_dir", type=Path)
    replay.add_argument("--json", action="store_true")
    return parser


def parse_args(argv: list[str]) -> Command:
    ns = _build_parser().parse_args(argv)
    if ns.command == "pool" and ns.action == "show" and not ns.method_id:
        raise UsageError("pool show needs a method id")
    if ns.command == "bench" and ns.policy is not None:
        if ns.policy not in ("mrp", "oracle_replay") and not ns.policy.startswith("fixed:"):
            raise UsageError(f"unknown policy {ns.policy!r}")
    fields = {k: v for k, v in vars(ns).items() if k in Command.__dataclass_fields__}
    if ns.command == "pool":
        fields["pool_action"] = ns.action
    return Command(name=ns.command, **{k: v for k, v in fields.items() if k != "name"})


def _route(cmd: Command, out) -> None:
    config = load_config(cmd.config)
    text = cmd.input if cmd.input is not None else cmd.input_file.read_text(encoding="utf-8")
    pool = config.load_pool()
    backend = build_backend(config)
    transcript = route_and_solve(backend, pool, text, config.backend.route_settings())
    transcript.write(Path(config.output_dir) / "transcripts")
    if cmd.json:
        out.write(transcript.to_json())
        return
    d = transcript.decision
    out.write(f"chosen: {d.chosen_method_id}{' (tie broken by pool order)' if d.tie_broken else ''}\n")
    for s in d.scores:
        flag = "" if s.parse_status == "parsed" else f"  [{s.parse_status}]"
        out.write(f"  {s.method_id:<12} {fmt3(s.value)}{flag}\n")
    out.write("\n" + transcript.final_output.rstrip("\n") + "\n")


def _bench(cmd: Command, out) -> None:
    config = load_config(cmd.config).with_overrides(cmd.policy, cmd.cache)
    pool = config.load_pool()
    run = run_benchmark(config, build_backend(config), pool)
    report = [run.metric_report()]
    out.write(emit_report(report, "json" if cmd.json else "markdown"))


def _pool(cmd: Command, out) -> None:
    pool = load_pool(cmd.pool_dir) if cmd.pool_dir else default_pool()
    if cmd.pool_action == "list":
        for i, m in enumerate(pool.methods):
            out.write(f"{i}  {m.id:<12} {m.display_name}\n")
        out.write(f"checksum {pool.checksum}\n")
        return
    try:
        m = pool.get(cmd.method_id)
    except KeyError:
        raise MetaReasonError(f"no method {cmd.method_id!r} in pool {pool.ids}") from None
    out.write(f"id: {m.id}\nname: {m.display_name}\nsource: {m.source_citation}\n\n")
    out.write(f"description:\n{m.description_prompt}\n\nexecution template:\n{m.execution_template}\n")


def _replay(cmd: Command, out) -> None:
    run_dir = cmd.run_dir
    manifest_path = run_dir / MANIFEST
    if not manifest_path.is_file():
        raise MetaReasonError(f"no {MANIFEST} in {run_dir}")
    snapshot = json.loads(manifest_path.read_text(encoding="utf-8"))["config"]
    config = config_from_snapshot(snapshot)
    config = replace(config, policy="oracle_replay", replay_from=run_dir,
                     output_dir=run_dir / "replay", cache_mode="off")
    run = run_benchmark(config, None, config.load_pool())
    out.write(emit_report([run.metric_report()], "json" if cmd.json else "markdown"))


_DISPATCH = {"route": _route, "bench": _bench, "pool": _pool, "replay": _replay}


def dispatch(cmd: Command, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        _DISPATCH[cmd.name](cmd, out)
    except (MetaReasonError, OSError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return dispatch(cmd)


if __name__ == "__main__":
    sys.exit(main())
