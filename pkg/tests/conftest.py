from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dialign.kb import KnowledgeBase, Triple, build_index

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def tiny_kb() -> KnowledgeBase:
    return KnowledgeBase(
        (
            Triple("rose", "IsA", "flower"),
            Triple("rose", "SymbolOf", "love"),
            Triple("piano", "UsedFor", "music"),
        ),
        "tiny",
    )


@pytest.fixture
def tiny_index(tiny_kb):
    return build_index(tiny_kb)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for key in ("passed", "failed"):
        reports.extend(r for r in terminalreporter.stats.get(key, []) if r.when == "call")
    acceptance = sorted(
        (r for r in reports if "test_acceptance" in r.nodeid),
        key=lambda r: r.nodeid,
    )
    if acceptance:
        terminalreporter.write_sep("-", "acceptance criteria")
        for r in acceptance:
            status = "PASS" if r.passed else "FAIL"
            terminalreporter.write_line(f"{status}  {r.nodeid.split('::')[-1]}")
