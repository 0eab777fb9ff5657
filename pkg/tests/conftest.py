import pytest

from medco import synthetic
from medco.memory import MemoryStores
from medco.metrics import build_icd_index
from medco.tools import RadiologistTools


@pytest.fixture
def corpus4():
    return synthetic.make_corpus(4)


@pytest.fixture
def corpus16():
    return synthetic.make_corpus(16)


@pytest.fixture
def backends4(corpus4):
    return synthetic.scripted_backends(corpus4)


@pytest.fixture
def tools4(backends4):
    return RadiologistTools(backends4)


@pytest.fixture
def memory4(backends4):
    return MemoryStores(backends4.embedder)


@pytest.fixture
def icd_index(tmp_path, backends4):
    path = synthetic.write_icd_terminology(tmp_path / "icd.csv", extra_rows=20)
    return build_icd_index(path, backends4.embedder)
