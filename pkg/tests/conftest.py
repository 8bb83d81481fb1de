import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import toy  # noqa: E402


@pytest.fixture(scope="session")
def corpus():
    """The full 60-utterance toy corpus; built once per session."""
    return toy.build_corpus(n_utterances=60, seed=7)


@pytest.fixture(scope="session")
def small_corpus():
    """A 12-utterance corpus for cheaper unit tests."""
    return toy.build_corpus(n_utterances=12, seed=11)


@pytest.fixture(scope="session")
def trained_small(small_corpus):
    """Quickly trained model for unit tests that just need something sane."""
    from hmmse import hmm

    training = small_corpus.training_corpus()
    phones = sorted({ctx.center for _, labels in training for ctx in labels})
    metadata = {
        "alpha": toy.ALPHA,
        "order": toy.ORDER,
        "frame_shift": toy.FRAME_SHIFT,
        "sample_rate": toy.SAMPLE_RATE,
        "context_width": "quinphone",
    }
    model = hmm.flat_start(training, phones, metadata)
    model, _ = hmm.baum_welch(model, training, iterations=4)
    return model


@pytest.fixture(scope="session")
def trained(corpus):
    """Average voice model trained from flat start on the toy corpus."""
    from hmmse import hmm

    training = corpus.training_corpus()
    phones = sorted({ctx.center for _, labels in training for ctx in labels})
    metadata = {
        "alpha": toy.ALPHA,
        "order": toy.ORDER,
        "frame_shift": toy.FRAME_SHIFT,
        "sample_rate": toy.SAMPLE_RATE,
        "context_width": "quinphone",
    }
    model = hmm.flat_start(training, phones, metadata)
    model, history = hmm.baum_welch(model, training, iterations=10)
    return model, history
