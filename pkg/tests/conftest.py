from pathlib import Path

import pytest

from typicality.corpus import dump_jsonl, generate_toy_corpus
from typicality.model import train

ROOT = Path(__file__).resolve().parents[1]
TOY_CONFIG = ROOT / "configs" / "toy.cfg"

# vocab {0, 1, eos=2}
TINY_TRAINING = [[0, 1, 0, 2], [1, 1, 2], [0, 2], [1, 0, 0, 1, 2], [0, 0, 2], [1, 2]]


@pytest.fixture(scope="session")
def toy_corpus():
    return generate_toy_corpus()


@pytest.fixture(scope="session")
def toy_jsonl(tmp_path_factory, toy_corpus):
    path = tmp_path_factory.mktemp("toy") / "toy_corpus.jsonl"
    dump_jsonl(toy_corpus, path)
    return path


@pytest.fixture(scope="session")
def toy_model(toy_corpus):
    return train(toy_corpus.tokens(), order=5, alpha=1.0)


@pytest.fixture(scope="session")
def tiny_model():
    return train(TINY_TRAINING, order=2, alpha=1.0, vocab_size=3, eos=2)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[name])
