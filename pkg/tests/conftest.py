import numpy as np
import pytest

from postsel.ascent import batch_means_stderr


def within_mc(samples, target, k=4.0, batch=False):
    """True when every column mean of ``samples`` is within ``k`` stderrs of ``target``."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    mean = samples.mean(axis=0)
    if batch:
        se = batch_means_stderr(samples)
    else:
        se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    z = np.abs(mean - np.atleast_1d(target)) / se
    return bool(np.all(z < k)), z


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
