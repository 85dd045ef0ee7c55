import sys
import pytest

from merozero.analysis.kernel_model import load_fixture
from merozero.base import TruncationPolicy


# each test runs on cwd to its temp dir
@pytest.fixture(autouse=True)
def go_to_tmpdir(request):
    # Get the fixture dynamically by its name.
    tmpdir = request.getfixturevalue("tmpdir")
    # ensure local test created packages can be imported
    sys.path.insert(0, str(tmpdir))
    # Chdir only for the duration of the test.
    with tmpdir.as_cwd():
        yield


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ("MEROZERO_MAX_TERMS", "MEROZERO_TARGET_TAIL", "MEROZERO_METHOD"):
        monkeypatch.delenv(variable, raising=False)


@pytest.fixture
def policy():
    return TruncationPolicy()


@pytest.fixture
def example1():
    return load_fixture("example1")


@pytest.fixture
def example2():
    return load_fixture("example2")


@pytest.fixture
def single_pole():
    return load_fixture("single_pole")


@pytest.fixture
def half_integer_lattice():
    return load_fixture("half_integer_lattice")


@pytest.fixture
def rational_two_pole():
    return load_fixture("rational_two_pole")
