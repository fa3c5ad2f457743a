import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "fixtures"))

from corpusdata import make_tiny_data, write_tiny_corpus  # noqa: E402


@pytest.fixture
def tiny_data():
    return make_tiny_data()


@pytest.fixture
def tiny_corpus_files(tmp_path) -> dict:
    return write_tiny_corpus(tmp_path / "corpus")
