import io
from pathlib import Path

import pytest

from spectrend.ingest import parse_records
from spectrend.normalize import chain_normalize

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def records():
    with open(FIXTURES / "mini_spec.csv") as systems, \
            open(FIXTURES / "mini_micros.csv") as micros:
        return parse_records(systems, micros)


@pytest.fixture(scope="session")
def normalized(records):
    return chain_normalize(records)


def csv_stream(text: str) -> io.StringIO:
    """Inline CSV fixture helper; strips leading indentation."""
    lines = [ln.strip() for ln in text.strip().splitlines()]
    return io.StringIO("\n".join(lines) + "\n")
