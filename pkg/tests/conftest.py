import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class AcceptanceLog:
    """Per-criterion results; a criterion passes when every recorded part passes."""

    def __init__(self):
        self.parts = {}

    def part(self, k: int, name: str, ok: bool, detail: str) -> bool:
        self.parts.setdefault(k, []).append((name, bool(ok), detail))
        print(f"criterion {k} [{name}]: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)

    def lines(self):
        for k in sorted(self.parts):
            ok = all(p[1] for p in self.parts[k])
            body = "; ".join(f"{n}: {'PASS' if o else 'FAIL'} {d}" for n, o, d in self.parts[k])
            yield f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {body}"


_LOG_KEY = pytest.StashKey[AcceptanceLog]()


@pytest.fixture(scope="session")
def acceptance(request):
    log = request.config.stash.get(_LOG_KEY, None)
    if log is None:
        log = AcceptanceLog()
        request.config.stash[_LOG_KEY] = log
    return log


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_LOG_KEY, None)
    if log is None or not log.parts:
        return
    terminalreporter.section("acceptance criteria")
    for line in log.lines():
        terminalreporter.write_line(line)
