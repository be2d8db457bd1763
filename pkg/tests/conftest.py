import re

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_lines():
    return _ACCEPTANCE


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Record a FAIL line for a criterion whose test raised before reporting."""
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)_(\w+)", item.name)
    if m and rep.when == "call" and rep.failed:
        number = m.group(1)
        if not any(line.startswith(f"criterion {number} ") for line in _ACCEPTANCE):
            err = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
            _ACCEPTANCE.append(f"criterion {number} FAIL  {m.group(2).replace('_', ' ')}: "
                               f"{call.excinfo.typename}: {err}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
