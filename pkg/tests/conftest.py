from __future__ import annotations

from pathlib import Path

import pytest

from dgaembed import datagen
from dgaembed.evaluate import ExperimentConfig, list_labels, run_incremental_experiment
from dgaembed.preprocess import Preprocessor

FIXTURES = Path(__file__).parent / "fixtures"

# filled by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


SMALL_PROFILE = dict(n_benign_hosts=30, n_bot_hosts=6, benign_pool_size=400,
                     queries_per_window=12.0, n_windows=24, dga_per_window=4, seed=11)


@pytest.fixture(scope="session")
def small_corpus() -> datagen.Corpus:
    return datagen.synth_corpus(datagen.TrafficProfile(**SMALL_PROFILE))


@pytest.fixture(scope="session")
def small_docs(small_corpus):
    return list(Preprocessor().documents(small_corpus.lines))


@pytest.fixture(scope="session")
def small_files(small_corpus, tmp_path_factory):
    return small_corpus.write(tmp_path_factory.mktemp("small"))


@pytest.fixture(scope="session")
def default_corpus() -> datagen.Corpus:
    return datagen.synth_corpus(datagen.TrafficProfile())


@pytest.fixture(scope="session")
def default_files(default_corpus, tmp_path_factory):
    return default_corpus.write(tmp_path_factory.mktemp("default"))


@pytest.fixture(scope="session")
def default_docs(default_corpus):
    return list(Preprocessor().documents(default_corpus.lines))


@pytest.fixture(scope="session")
def default_experiment(default_corpus, default_docs):
    """Incremental vs retrain on the default profile, 10 pieces, 5 epochs per batch."""
    labels = list_labels(default_corpus.blacklist, default_corpus.whitelist)
    return run_incremental_experiment(default_docs, labels, default_corpus.truth, ExperimentConfig())
