import contextlib

import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


class CriterionRecorder:
    def __init__(self, results):
        self._results = results

    @contextlib.contextmanager
    def check(self, number, title):
        """Record PASS when the block completes, FAIL (and re-raise) otherwise.

        The block may append to the yielded list to add detail to the line.
        """
        detail = []
        try:
            yield detail
        except BaseException as exc:
            reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            self._emit(number, title, "FAIL", detail + [reason])
            raise
        self._emit(number, title, "PASS", detail)

    def _emit(self, number, title, verdict, detail):
        line = f"criterion {number}: {verdict}  {title}"
        if detail:
            line += "  [" + "; ".join(detail) + "]"
        self._results.append((number, line))
        print(line)


@pytest.fixture
def criterion(request):
    return CriterionRecorder(request.config.stash[_RESULTS])


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(results, key=lambda item: item[0]):
            terminalreporter.write_line(line)
