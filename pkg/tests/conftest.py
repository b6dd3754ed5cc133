from __future__ import annotations

import contextlib
import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from globalsum.graph import CayleySpec, build_family  # noqa: E402

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LOG: list[tuple[str, bool, str]] = []


def family_set() -> list[CayleySpec]:
    """complete 2..16, cycle 3..16, hypercube 1..5 and Petersen."""
    out = [CayleySpec("complete", n) for n in range(2, 17)]
    out += [CayleySpec("cycle", n) for n in range(3, 17)]
    out += [CayleySpec("hypercube", k) for k in range(1, 6)]
    out.append(CayleySpec("petersen"))
    return out


@pytest.fixture(scope="session")
def families() -> list[tuple[CayleySpec, object]]:
    return [(f, build_family(f)) for f in family_set()]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def petersen():
    return build_family(CayleySpec("petersen"))


@contextlib.contextmanager
def criterion(label: str, detail: str = ""):
    """Record one acceptance line; the body's assertions decide PASS or FAIL."""
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE_LOG.append((label, False, f"{detail} :: {type(exc).__name__}: {exc}".strip()))
        raise
    ACCEPTANCE_LOG.append((label, True, detail))


@pytest.fixture
def acceptance():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE_LOG, key=lambda e: _order(e[0])):
        line = f"{'PASS' if ok else 'FAIL'}  {label}"
        if detail:
            line += f"  [{detail.splitlines()[0][:160]}]"
        terminalreporter.write_line(line)


def _order(label: str):
    head = label.split()[0].rstrip(".")
    return (int(head) if head.isdigit() else 99, label)
