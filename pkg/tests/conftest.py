from __future__ import annotations

import re
from pathlib import Path

import pytest

from promptpipe import Vocab, build_tokenizer

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def vocab() -> Vocab:
    return Vocab.from_file(FIXTURES / "vocab.txt")


@pytest.fixture(scope="session")
def wordpiece(vocab):
    return build_tokenizer("wordpiece", vocab)


@pytest.fixture(scope="session")
def whitespace(vocab):
    return build_tokenizer("whitespace", vocab)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", nodeid)
            if match:
                number = int(match.group(1))
                name = match.group(2).replace("_", " ")
                status = "PASS" if outcome == "passed" else "FAIL"
                lines[number] = f"acceptance criterion {number} ({name}): {status}"
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
