import pytest

from rcdetect.synthgen import ScenarioConfig, build_corpus

CRITERIA_LOG = []


@pytest.fixture(scope="session")
def corpus():
    # the acceptance scenario: seed 42, 5 devices, 600 s, 2 s windows
    return build_corpus(ScenarioConfig(seed=42, n_devices=5, duration_s=600, window_s=2))


@pytest.fixture(scope="session")
def dataset(corpus):
    return corpus.dataset()


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LOG:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LOG, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
