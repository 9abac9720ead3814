import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import ToyLang, make_corpus
from spikefst.graph import BuildReport, build_tlg


@pytest.fixture(scope="session")
def lang() -> ToyLang:
    return ToyLang(seed=7)


@pytest.fixture(scope="session")
def tlg(lang):
    report = BuildReport()
    graph = build_tlg(lang.token_fst, lang.lexicon_fst, lang.grammar_fst,
                      use_pushing=False, report=report)
    graph.build_report = report
    return graph


@pytest.fixture(scope="session")
def tlg_pushed(lang):
    report = BuildReport()
    graph = build_tlg(lang.token_fst, lang.lexicon_fst, lang.grammar_fst,
                      use_pushing=True, report=report)
    graph.build_report = report
    return graph


@pytest.fixture(scope="session")
def clean_corpus(lang):
    """The project's standing synthetic test corpus: 500 clean utterances."""
    rng = np.random.default_rng(2024)
    return make_corpus(lang, rng, n_utts=500)
