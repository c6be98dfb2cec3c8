import pytest
from hypothesis import settings

from wtransfer import drive, propagate

settings.register_profile("wtransfer", deadline=None, max_examples=40)
settings.load_profile("wtransfer")


@pytest.fixture(scope="session")
def adiabatic_spec():
    return drive.preset("adiabatic")


@pytest.fixture(scope="session")
def nonadiabatic_spec():
    return drive.preset("nonadiabatic")


@pytest.fixture(scope="session")
def adiabatic_run(adiabatic_spec):
    return propagate.run_protocol(adiabatic_spec, "effective")


@pytest.fixture(scope="session")
def adiabatic_full_run(adiabatic_spec):
    return propagate.run_protocol(adiabatic_spec, "full", phases=False)


@pytest.fixture(scope="session")
def nonadiabatic_run(nonadiabatic_spec):
    return propagate.run_protocol(nonadiabatic_spec, "effective")


@pytest.fixture(scope="session")
def nonadiabatic_full_run(nonadiabatic_spec):
    return propagate.run_protocol(nonadiabatic_spec, "full", phases=False)


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, passed, detail)."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
