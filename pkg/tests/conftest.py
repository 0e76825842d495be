import pathlib

import pytest

from bean.numerics import RoundingConfig
from bean.syntax import parse_program
from bean.typecheck import Analysis, analyze_program

PROGRAMS = pathlib.Path(__file__).resolve().parent.parent / "programs"
SCHEMAS = pathlib.Path(__file__).resolve().parent.parent / "schemas"


def analyze(source: str, main: str | None = None) -> Analysis:
    return analyze_program(parse_program(source, main))


def load_program(name: str) -> str:
    return (PROGRAMS / name).read_text()


@pytest.fixture(scope="session")
def cfg() -> RoundingConfig:
    return RoundingConfig()


@pytest.fixture(scope="session")
def program_files() -> list[pathlib.Path]:
    files = sorted(PROGRAMS.glob("*.bean"))
    assert files, "the programs/ corpus is missing"
    return files
