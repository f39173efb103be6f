from __future__ import annotations

import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

from trainer_helpers import SMALL_SPACE, TINY_SPACE, TINY_VECTOR, \
    decode_document  # noqa: E402


@pytest.fixture(scope="session")
def tiny_doc(tmp_path_factory):
    return decode_document(TINY_VECTOR, TINY_SPACE,
                           tmp_path_factory.mktemp("tiny"))


@pytest.fixture(scope="session")
def small_doc(tmp_path_factory):
    return decode_document(TINY_VECTOR, SMALL_SPACE,
                           tmp_path_factory.mktemp("small"))
