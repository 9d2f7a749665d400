from pathlib import Path

import pytest

from treerule import sparse

ROOT = Path(__file__).resolve().parents[1]
UMLS_DIR = ROOT / "data" / "umls"


@pytest.fixture(params=sparse.available_backends())
def backend(request):
    previous = sparse.BACKEND
    sparse.use_backend(request.param)
    yield request.param
    sparse.use_backend(previous)


@pytest.fixture(scope="session")
def umls_dir():
    if not (UMLS_DIR / "train.txt").is_file():
        pytest.skip("UMLS split not present under data/umls")
    return UMLS_DIR


@pytest.fixture(scope="session")
def umls(umls_dir):
    from treerule.kg import load_split

    return load_split(umls_dir)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
