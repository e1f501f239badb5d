"""Run configuration, loaded from TOML.

Example::

    policy = "mrp"              # or "fixed:cot", "oracle_replay"
    output_dir = "runs/gpt4"
    parallelism = 4
    seed_note = "first pass"
    # pool_dir = "my_prompts"   # defaults to the bundled pool
    # replay_from = "runs/old"  # required for oracle_replay

    [backend]
    kind = "http"               # or "scripted" (needs script = "file.json")
    endpoint = "https://api.openai.com/v1/chat/completions"
    model = "gpt-4"
    api_key_env = "MRP_API_KEY"
    execution_temperature = 0.0

    [cache]
    mode = "record"             # record | replay | off
    dir = "cache"

    [[tasks]]
    kind = "gsm8k"
    path = "data/gsm8k.jsonl"   # omit to use the bundled fixtures
    limit = 100

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backend import CACHE_MODES, Backend, CachedBackend, HttpBackend, HttpSettings, ScriptedBackend
from .errors import ConfigError
from .pool import Pool, default_pool, load_pool
from .selector import RouteSettings
from .tasks.types import TaskKind


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    path: Path | None = None
    limit: int | None = None

    def __post_init__(self) -> None:
        if self.limit is not None and self.limit < 1:
            raise ConfigError(f"{self.kind}: example limit must be >= 1")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "http"
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = "MRP_API_KEY"
    auth_header: str = "Authorization"
    headers: dict[str, str] = field(default_factory=dict)
    timeout: float = 120.0
    max_in_flight: int = 4
    script: Path | None = None
    model: str = "gpt-4"
    judge_model: str | None = None
    scoring_temperature: float = 0.0
    execution_temperature: float = 0.0
    scoring_max_tokens: int = 512
    execution_max_tokens: int = 2048
    scoring_workers: int = 1

    def route_settings(self) -> RouteSettings:
        return RouteSettings(
            model=self.model,
            scoring_temperature=self.scoring_temperature,
            execution_temperature=self.execution_temperature,
            scoring_max_tokens=self.scoring_max_tokens,
            execution_max_tokens=self.execution_max_tokens,
            scoring_workers=self.scoring_workers,
        )


POLICIES = ("mrp", "oracle_replay")


@dataclass(frozen=True)
class RunConfig:
    tasks: tuple[TaskSpec, ...]
    policy: str = "mrp"
    backend: BackendConfig = BackendConfig()
    cache_mode: str = "off"
    cache_dir: Path = Path("cache")
    parallelism: int = 1
    output_dir: Path = Path("runs/latest")
    seed_note: str = ""
    pool_dir: Path | None = None
    replay_from: Path | None = None
    rubric_path: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ConfigError("config lists no tasks")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.cache_mode not in CACHE_MODES:
            raise ConfigError(f"cache mode must be one of {CACHE_MODES}")
        if self.policy not in POLICIES and not self.policy.startswith("fixed:"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.policy == "oracle_replay" and self.replay_from is None:
            raise ConfigError("oracle_replay needs replay_from")

    @property
    def fixed_method(self) -> str | None:
        return self.policy.split(":", 1)[1] if self.policy.startswith("fixed:") else None

    def with_overrides(self, policy: str | None = None, cache_mode: str | None = None) -> RunConfig:
        changes = {}
        if policy is not None:
            changes["policy"] = policy
        if cache_mode is not None:
            changes["cache_mode"] = cache_mode
        return replace(self, **changes) if changes else self

    def snapshot(self) -> dict:
        def plain(value):
            if isinstance(value, Path):
                return str(value)
            if isinstance(value, TaskKind):
                return value.value
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            if isinstance(value, (list, tuple)):
                return [plain(v) for v in value]
            return value

        return plain(asdict(self))

    def load_pool(self) -> Pool:
        pool = load_pool(self.pool_dir) if self.pool_dir else default_pool()
        if self.fixed_method and self.fixed_method not in pool.ids:
            raise ConfigError(f"fixed policy names {self.fixed_method!r}, not in pool {pool.ids}")
        return pool


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value).expanduser()
    return (p if p.is_absolute() else base / p).resolve()


def config_from_dict(data: dict, base: Path = Path(".")) -> RunConfig:
    try:
        tasks = tuple(
            TaskSpec(TaskKind(t["kind"]), _resolve(base, t.get("path")), t.get("limit"))
            for t in data.get("tasks", [])
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [[tasks]] entry: {exc}") from exc
    b = dict(data.get("backend", {}))
    if "script" in b:
        b["script"] = _resolve(base, b["script"])
    try:
        backend = BackendConfig(**b)
    except TypeError as exc:
        raise ConfigError(f"bad [backend] table: {exc}") from exc
    cache = data.get("cache", {})
    known = {"tasks", "backend", "cache", "policy", "parallelism", "output_dir", "seed_note",
             "pool_dir", "replay_from", "rubric_path"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return RunConfig(
        tasks=tasks,
        policy=data.get("policy", "mrp"),
        backend=backend,
        cache_mode=cache.get("mode", "off"),
        cache_dir=_resolve(base, cache.get("dir", "cache")),
        parallelism=data.get("parallelism", 1),
        output_dir=_resolve(base, data.get("output_dir", "runs/latest")),
        seed_note=data.get("seed_note", ""),
        pool_dir=_resolve(base, data.get("pool_dir")),
        replay_from=_resolve(base, data.get("replay_from")),
        rubric_path=_resolve(base, data.get("rubric_path")),
    )


def config_from_snapshot(snapshot: dict) -> RunConfig:
    """Rebuild a config from :meth:`RunConfig.snapshot` output."""
    b = dict(snapshot["backend"])
    if b.get("script"):
        b["script"] = Path(b["script"])
    opt = lambda key: Path(snapshot[key]) if snapshot.get(key) else None  # noqa: E731
    return RunConfig(
        tasks=tuple(TaskSpec(TaskKind(t["kind"]), Path(t["path"]) if t["path"] else None,
                             t["limit"]) for t in snapshot["tasks"]),
        policy=snapshot["policy"],
        backend=BackendConfig(**b),
        cache_mode=snapshot["cache_mode"],
        cache_dir=Path(snapshot["cache_dir"]),
        parallelism=snapshot["parallelism"],
        output_dir=Path(snapshot["output_dir"]),
        seed_note=snapshot["seed_note"],
        pool_dir=opt("pool_dir"),
        replay_from=opt("replay_from"),
        rubric_path=opt("rubric_path"),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, path.parent)


def build_backend(config: RunConfig) -> Backend | None:
    """Backend described by the config, wrapped in the record/replay cache.

    Replay mode never constructs the inner backend, so no network client
    exists at all.
    """
    bc = config.backend

    def inner() -> Backend:
        if bc.kind == "scripted":
            if bc.script is None:
                raise ConfigError("scripted backend needs backend.script")
            return ScriptedBackend.from_file(bc.script)
        if bc.kind == "http":
            return HttpBackend(HttpSettings(
                endpoint=bc.endpoint, api_key_env=bc.api_key_env, auth_header=bc.auth_header,
                headers=dict(bc.headers), timeout=bc.timeout, max_in_flight=bc.max_in_flight,
            ))
        raise ConfigError(f"unknown backend kind {bc.kind!r}")

    if config.policy == "oracle_replay":
        return None
    if config.cache_mode == "off":
        return inner()
    if config.cache_mode == "replay":
        return CachedBackend(config.cache_dir, None, "replay")
    return CachedBackend(config.cache_dir, inner(), "record")
