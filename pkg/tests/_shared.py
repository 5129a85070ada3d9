"""Cached heavy fixtures shared by the unit and acceptance tests."""

from __future__ import annotations

import functools
import json
import tempfile
import time
from pathlib import Path

import numpy as np

from intervalchoice import cli
from intervalchoice.evolution import fixed_point, ode_solve
from intervalchoice.psi import parse_rule

ACCEPTANCE: dict = {}
_WORK = Path(tempfile.mkdtemp(prefix="intervalchoice-tests-"))


def record(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


@functools.lru_cache(maxsize=None)
def solved(rule: str, method: str = "picard"):
    r = parse_rule(rule)
    return fixed_point(r) if method == "picard" else ode_solve(r)


@functools.lru_cache(maxsize=None)
def cli_solution(rule: str, method: str = "picard") -> tuple[Path, float]:
    out = _WORK / f"solve-{rule.replace(':', '')}-{method}.csv"
    t = time.perf_counter()
    code = cli.main(["solve", "--psi", rule, "--method", method, "--out", str(out)])
    assert code == 0
    return out, time.perf_counter() - t


@functools.lru_cache(maxsize=None)
def cli_simulation(rule: str, steps: int = 10**6, seed: int = 1) -> tuple[Path, float, dict]:
    """Simulate through the CLI from a single unit interval."""
    out = _WORK / f"sim-{rule.replace(':', '')}-{steps}-{seed}"
    t = time.perf_counter()
    code = cli.main(["simulate", "--psi", rule, "--steps", str(steps), "--seed", str(seed),
                     "--init", "1.0", "--out", str(out)])
    assert code == 0
    elapsed = time.perf_counter() - t
    return out, elapsed, json.loads((out / "report.json").read_text())


def work_dir(name: str) -> Path:
    p = _WORK / name
    p.mkdir(parents=True, exist_ok=True)
    return p


def size_biased_exponential_exact(x):
    x = np.asarray(x, dtype=float)
    return 1.0 - (1.0 + x) * np.exp(-x)
