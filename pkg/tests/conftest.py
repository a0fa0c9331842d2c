from pathlib import Path

import pytest

from pnid2st.st.parser import parse

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
DATA = Path(__file__).resolve().parent / "data"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def fixture_unit(name: str):
    return parse(fixture_text(name))


@pytest.fixture
def root() -> Path:
    return ROOT
