import numpy as np
import pytest

from gpcompose.benchmark import QuestionGroup, split_train_test
from gpcompose.embeddings import EmbeddingStore
from gpcompose.synth import generate_pairs, make_synthetic

ACCEPTANCE_LINES: list[str] = []


class ScriptedRng:
    """Stand-in generator returning preset values from ``integers``/``random``."""

    def __init__(self, integers=(), randoms=()):
        self._ints = list(integers)
        self._floats = list(randoms)

    def integers(self, low, high=None, size=None):
        value = self._ints.pop(0)
        lo, hi = (0, low) if high is None else (low, high)
        assert lo <= value < hi, (value, lo, hi)
        return value

    def random(self):
        return self._floats.pop(0)


@pytest.fixture
def toy_store():
    return EmbeddingStore.from_arrays(["a", "b", "c"], [[1.0, 0.0], [0.0, 1.0], [0.9, 0.1]])


@pytest.fixture(scope="session")
def synthetic():
    """Exact-offset fixture: one relation, 40 questions, dim 16, 150 distractors."""
    store, groups = make_synthetic(generate_pairs(1, 10), dim=16, n_distractors=150, seed=3, max_questions=40)
    return store, groups[0]


@pytest.fixture(scope="session")
def synthetic_split(synthetic):
    store, group = synthetic
    return store, split_train_test(group, 0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
