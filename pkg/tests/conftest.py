import numpy as np
import pytest

from prpo.env import EpisodeSpec, generate_episode
from prpo.policy import PolicyParams

# filled by tests/test_acceptance.py, printed at the end of the session
CRITERIA: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    CRITERIA[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture
def spec():
    return EpisodeSpec()


@pytest.fixture
def vocab(spec):
    return spec.vocab


@pytest.fixture
def tiny_spec():
    # smallest layout the token space allows: K=4, C=2 -> 12 ids
    return EpisodeSpec(num_segments=2, segment_len=3, vocab_size=4, num_choices=2, evidence_copies=1, num_families=1)


@pytest.fixture
def episodes(spec):
    return [generate_episode(spec, s) for s in range(32)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_params(vocab, rng, scale=0.5):
    return PolicyParams(rng.normal(0.0, scale, (vocab.size, 5 * vocab.size)), vocab)
