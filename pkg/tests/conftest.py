from __future__ import annotations

import os
from pathlib import Path

import pytest

from planeval.gateway import Gateway, MockTransport, ModelSpec, RetryPolicy, write_transcript

GSM8K_TEST_PATH = Path(os.environ.get("PLANEVAL_GSM8K_TEST", "data/gsm8k_test.jsonl"))

requires_gsm8k = pytest.mark.skipif(
    not GSM8K_TEST_PATH.exists(),
    reason=f"real dataset file not present at {GSM8K_TEST_PATH}",
)


@pytest.fixture
def model_spec() -> ModelSpec:
    return ModelSpec(name="mock-model", endpoint_url="http://localhost/none", max_tokens=256)


@pytest.fixture
def planner_spec() -> ModelSpec:
    return ModelSpec(name="mock-planner", endpoint_url="http://localhost/none", max_tokens=256)


@pytest.fixture
def mock_gateway_factory(tmp_path):
    """Build a cached gateway over a scripted transcript; returns (gateway,
    transport) so tests can count transport calls."""

    def factory(entries, cache_name="cache", max_in_flight=8):
        transcript = write_transcript(tmp_path / f"{cache_name}_transcript.jsonl", entries)
        transport = MockTransport.load(transcript)
        gateway = Gateway(
            cache_dir=tmp_path / cache_name,
            transport=transport,
            retry=RetryPolicy(base_delay=0.0),
            max_in_flight=max_in_flight,
        )
        return gateway, transport

    return factory


_acceptance_lines: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_lines.append((name, "PASS" if report.passed else "FAIL"))
    elif report.when == "setup" and report.skipped:
        _acceptance_lines.append((name, "SKIP"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, outcome in _acceptance_lines:
        terminalreporter.write_line(f"  {outcome}: {name}")
