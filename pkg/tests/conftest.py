import pytest

from scanrecon.fixtures import sample_snapshot
from scanrecon.synth import CorpusConfig, generate_corpus


@pytest.fixture(scope="session")
def samples():
    return sample_snapshot()


@pytest.fixture(scope="session")
def default_corpus():
    return generate_corpus(CorpusConfig())


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(CorpusConfig(image_count=12, distinct_cves=400, hard_fp_count=6,
                                        soft_fp_count=5, seed=11))
