import pytest

from l2capfuzz.profiles import builtin_profile


class StubRng:
    """Scripted random source: pops queued answers in order."""

    def __init__(self, randrange_values=(), randbytes_values=()):
        self.randrange_values = list(randrange_values)
        self.randbytes_values = list(randbytes_values)

    def randrange(self, stop):
        value = self.randrange_values.pop(0)
        assert 0 <= value < stop, f"scripted draw {value} out of range({stop})"
        return value

    def randbytes(self, n):
        blob = self.randbytes_values.pop(0)
        assert len(blob) == n, f"scripted blob has {len(blob)} bytes, wanted {n}"
        return blob


@pytest.fixture
def stub_rng_factory():
    return StubRng


@pytest.fixture
def clean_profile():
    return builtin_profile("clean")


@pytest.fixture
def dos_profile():
    return builtin_profile("dos")


@pytest.fixture
def crash_profile():
    return builtin_profile("crash")
