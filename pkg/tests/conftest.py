from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
SCRIPTS = ROOT / "scripts"

_acceptance_lines: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary."""

    def _report(criterion: str, passed: bool, detail: str = ""):
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}" + (f": {detail}" if detail else "")
        _acceptance_lines.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def setup1_script():
    from segflow.synth_oracle import load_script

    return load_script(SCRIPTS / "setup1.json")


@pytest.fixture(scope="session")
def setup2_script():
    from segflow.synth_oracle import load_script

    return load_script(SCRIPTS / "setup2.json")


@pytest.fixture(scope="session")
def setup1(setup1_script):
    from segflow.synth_oracle import generate

    return generate(setup1_script)


@pytest.fixture(scope="session")
def setup1_result(setup1):
    from segflow.pipeline import segment_demonstration

    return segment_demonstration(setup1[0])
