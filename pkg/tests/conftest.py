import numpy as np
import pytest

from pibearing.dataio import Label, SynthesisSpec, synthesize


@pytest.fixture(scope="session")
def small_corpus_segments():
    segs = []
    for lab in Label:
        segs += synthesize(SynthesisSpec(lab, seed=5), 20, 10000)
    return segs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_WINDOW = 2048


@pytest.fixture(scope="session")
def small_arch():
    from pibearing.model import ArchConfig, ConvBlock

    return ArchConfig(input_len=SMALL_WINDOW, conv_blocks=(ConvBlock(4, 16, 8, 4), ConvBlock(4, 4, 1, 4)),
                      physics_units=4, head_units=(16,))


@pytest.fixture(scope="session")
def small_corpus():
    from pibearing.pipeline import Corpus

    segs = []
    for lab in Label:
        segs += synthesize(SynthesisSpec(lab, seed=21), 20, SMALL_WINDOW)
    return Corpus.from_segments(segs)


# acceptance criteria record (criterion, passed, detail) here; printed at the end of the run
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
