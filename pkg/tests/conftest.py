import json
from pathlib import Path

import pytest

from sqlrefine.schema import load_schema

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def schemas():
    out = {}
    for file in sorted((DATA_DIR / "schemas").glob("*.json")):
        catalog = load_schema(file)
        out[catalog.schema_id] = catalog
    return out


@pytest.fixture(scope="session")
def concert(schemas):
    return schemas["concert_singer"]


@pytest.fixture(scope="session")
def pets(schemas):
    return schemas["pets"]


@pytest.fixture(scope="session")
def world(schemas):
    return schemas["world"]


@pytest.fixture(scope="session")
def golden_corpus():
    with (DATA_DIR / "golden_corpus.json").open(encoding="utf-8") as fh:
        return json.load(fh)
