"""Registry of reasoning methods and the prompt-assembly rules used to score
and execute them.

A pool is an ordered, immutable tuple of :class:`MethodDescriptor` plus the
meta-reasoning prompt. Registration order doubles as tie-break priority for
selection, so it is never reordered.

Prompt text lives in a data directory (see ``prompts/``)::

    <id>.desc.txt      description of the method
    <id>.exec.txt      working prompt, one ``{input}`` placeholder
    meta.txt           meta-reasoning (scoring) prompt
    pool.manifest.json ordered ids plus sha256 of every file

Lines starting with ``#`` at the top of a data file are header comments and
are dropped on load.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DuplicateId, EmptySegment, InvalidDescriptor, MissingPromptFile

logger = logging.getLogger(__name__)

PLACEHOLDER = "{input}"
SEPARATOR = "\n\n"
MANIFEST_NAME = "pool.manifest.json"
META_NAME = "meta.txt"

_ID_RE = re.compile(r"^[a-z0-9_]+$")


@dataclass(frozen=True)
class MethodDescriptor:
    id: str
    display_name: str
    description_prompt: str
    execution_template: str
    source_citation: str = ""

    def __post_init__(self) -> None:
        validate_descriptor(self)


def validate_descriptor(d: MethodDescriptor) -> None:
    if not d.id or not _ID_RE.match(d.id):
        raise InvalidDescriptor(f"bad method id {d.id!r}")
    if not d.description_prompt.strip():
        raise InvalidDescriptor(f"{d.id}: empty description prompt")
    count = d.execution_template.count(PLACEHOLDER)
    if count != 1:
        raise InvalidDescriptor(
            f"{d.id}: execution template has {count} {PLACEHOLDER} placeholders, expected 1"
        )


@dataclass(frozen=True)
class Pool:
    methods: tuple[MethodDescriptor, ...] = ()
    meta_prompt: str = ""
    # sha256 over the manifest ids and file contents; empty for in-memory pools
    checksum: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        seen: set[str] = set()
        for m in self.methods:
            if m.id in seen:
                raise DuplicateId(m.id)
            seen.add(m.id)

    def __len__(self) -> int:
        return len(self.methods)

    def __iter__(self):
        return iter(self.methods)

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.methods]

    def get(self, method_id: str) -> MethodDescriptor:
        for m in self.methods:
            if m.id == method_id:
                return m
        raise KeyError(method_id)

    def index(self, method_id: str) -> int:
        return self.ids.index(method_id)


def register_method(pool: Pool, d: MethodDescriptor) -> Pool:
    """Return a new pool with ``d`` appended; the input pool is untouched."""
    validate_descriptor(d)
    if d.id in pool.ids:
        raise DuplicateId(d.id)
    return Pool(methods=pool.methods + (d,), meta_prompt=pool.meta_prompt)


@dataclass(frozen=True)
class PromptText:
    text: str
    segments: tuple[tuple[str, str], ...] = field(default=())

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.segments]

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "segments": [{"label": label, "text": text} for label, text in self.segments],
        }

    @classmethod
    def from_dict(cls, data: dict) -> PromptText:
        return cls(
            text=data["text"],
            segments=tuple((s["label"], s["text"]) for s in data["segments"]),
        )


def assemble_scoring_prompt(d: MethodDescriptor, meta: str, input: str) -> PromptText:
    """Join description, meta prompt and task input, in that order."""
    segments = (("description", d.description_prompt), ("meta", meta), ("input", input))
    for label, text in segments:
        if not text:
            raise EmptySegment(label)
    return PromptText(text=SEPARATOR.join(t for _, t in segments), segments=segments)


def assemble_execution_prompt(d: MethodDescriptor, input: str) -> PromptText:
    if not input:
        raise EmptySegment("input")
    head, tail = d.execution_template.split(PLACEHOLDER, 1)
    # plain concatenation: braces in ``input`` are never re-substituted
    text = head + input + tail
    return PromptText(text=text, segments=(("execution", text),))


# -- data directory ---------------------------------------------------------

def default_prompt_dir() -> Path:
    return Path(str(resources.files("metareason") / "prompts"))


def _read_data_file(path: Path) -> str:
    if not path.is_file():
        raise MissingPromptFile(str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    while lines and lines[0].startswith("#"):
        lines.pop(0)
    return "\n".join(lines).strip("\n")


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_pool(directory: str | Path) -> Pool:
    """Load a pool from a prompt data directory, in manifest order."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingPromptFile(str(manifest_path))
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    recorded = manifest.get("checksums", {})

    names = [META_NAME]
    pool = Pool(meta_prompt=_read_data_file(directory / META_NAME))
    for entry in manifest["methods"]:
        mid = entry["id"]
        desc_name, exec_name = f"{mid}.desc.txt", f"{mid}.exec.txt"
        names += [desc_name, exec_name]
        d = MethodDescriptor(
            id=mid,
            display_name=entry.get("display_name", mid),
            description_prompt=_read_data_file(directory / desc_name),
            execution_template=_read_data_file(directory / exec_name),
            source_citation=entry.get("source_citation", ""),
        )
        pool = register_method(pool, d)

    actual = {name: file_digest(directory / name) for name in names}
    for name, digest in actual.items():
        if recorded.get(name) not in (None, digest):
            logger.warning("prompt file %s changed since manifest was written", name)
    return Pool(pool.methods, pool.meta_prompt, checksum=_pool_checksum(pool.ids, actual))


def _pool_checksum(ids: list[str], digests: dict[str, str]) -> str:
    payload = json.dumps({"ids": ids, "files": digests}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_manifest(directory: str | Path) -> dict:
    """Refresh file checksums in an existing manifest after editing prompts."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    names = [META_NAME]
    for entry in manifest["methods"]:
        names += [f"{entry['id']}.desc.txt", f"{entry['id']}.exec.txt"]
    manifest["checksums"] = {name: file_digest(directory / name) for name in names}
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def default_pool() -> Pool:
    """The seven bundled baseline methods."""
    return load_pool(default_prompt_dir())
