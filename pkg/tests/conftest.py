import pytest

import kato_evolve as ke


@pytest.fixture(scope="session")
def scal0():
    return ke.preset_scenario("SCAL0")


@pytest.fixture(scope="session")
def diff1():
    return ke.preset_scenario("DIFF1")


@pytest.fixture(scope="session")
def mort1():
    return ke.preset_scenario("MORT1")


@pytest.fixture(scope="session")
def qdiff():
    return ke.preset_scenario("QDIFF")
