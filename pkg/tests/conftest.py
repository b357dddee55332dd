import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[tuple[int, str], str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion and return whether it passed."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE[(number, title)] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[key])
