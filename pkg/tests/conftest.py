import importlib.resources
import random

import pytest

from restfuzz.graph import build_dependency_graph
from restfuzz.minipet import start_mock
from restfuzz.openapi import parse_spec


MINIPET_PATH = str(importlib.resources.files("restfuzz") / "fixtures" / "minipet.yaml")


@pytest.fixture(scope="session")
def minipet_text():
    with open(MINIPET_PATH, "r", encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def minipet_path():
    return MINIPET_PATH


@pytest.fixture()
def spec(minipet_text):
    return parse_spec(minipet_text)


@pytest.fixture()
def graph(spec):
    return build_dependency_graph(spec)


@pytest.fixture()
def rng():
    return random.Random(1234)


@pytest.fixture()
def mock_target():
    handle = start_mock()
    yield handle
    handle.stop()
