from __future__ import annotations

import json
import random

import pytest

from metareason.backend import ScriptedBackend
from metareason.pool import MethodDescriptor, Pool, default_pool


def make_descriptor(mid: str, template: str = "Solve:\n{input}", desc: str | None = None):
    return MethodDescriptor(mid, mid.upper(), desc or f"description of {mid}", template)


@pytest.fixture
def pool7() -> Pool:
    return default_pool()


@pytest.fixture
def tiny_pool() -> Pool:
    return Pool((make_descriptor("a"), make_descriptor("b"), make_descriptor("c")), meta_prompt="META")


def scripted(scores=(), executions=(), judges=()) -> ScriptedBackend:
    b = ScriptedBackend()
    b.extend("scoring", scores)
    b.extend("execution", executions)
    b.extend("judge", judges)
    return b


FIXTURE_TASKS = ("gsm8k", "game24", "trivia_cw", "hotpotqa", "bigtom", "code_readability", "mmlu")
FIXTURE_EXAMPLES = 42
CODE_EXAMPLES = 6


def write_script(path, n_examples=FIXTURE_EXAMPLES, n_judged=CODE_EXAMPLES, pool_size=7, seed=0):
    """Script file with enough replies for one mrp pass over the bundled fixtures."""
    rng = random.Random(seed)
    entries = [{"purpose": "scoring", "text": f"thinking...\nSCORE: {rng.randint(0, 10)}"}
               for _ in range(n_examples * pool_size)]
    answers = ["#### 27", "Answer: (10 - 4) * (13 - 9)", "Answer: (A)", "Answer: Salzburg",
               "```\ndef f(xs):\n    return xs\n```", "Mars, Au and da Vinci"]
    entries += [{"purpose": "execution", "text": rng.choice(answers)} for _ in range(n_examples)]
    entries += [{"purpose": "judge", "text": rng.choice(["VERDICT: PASS", "VERDICT: FAIL"])}
                for _ in range(n_judged)]
    path.write_text(json.dumps(entries), encoding="utf-8")
    return path


def write_config(tmp_path, name="run.toml", cache_mode="off", parallelism=1, output="out",
                 policy="mrp", tasks=FIXTURE_TASKS, limit=None):
    script = write_script(tmp_path / "script.json")
    lines = [
        f'policy = "{policy}"',
        f'output_dir = "{output}"',
        f"parallelism = {parallelism}",
        "",
        "[backend]",
        'kind = "scripted"',
        f'script = "{script.name}"',
        "",
        "[cache]",
        f'mode = "{cache_mode}"',
        'dir = "cache"',
    ]
    for t in tasks:
        lines += ["", "[[tasks]]", f'kind = "{t}"'] + ([f"limit = {limit}"] if limit else [])
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
