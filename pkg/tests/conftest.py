import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hpnsim.casestudy import STUDY_RATES, relay_network, transfer_priorities
from hpnsim.scenario import Scenario


@pytest.fixture(scope="session")
def relay_net():
    return relay_network()


@pytest.fixture(scope="session")
def study_net():
    return relay_network(STUDY_RATES)


@pytest.fixture
def baseline_scenario():
    return Scenario(
        message_size=F(1000),
        deadline=F(300),
        source="P5",
        destination="P4",
        search_places=("P1", "P5"),
        label="baseline",
    )


def study_scenario(deadline, order=None):
    return Scenario(
        message_size=F(1000),
        deadline=F(deadline),
        source="P5",
        destination="P4",
        search_places=("P1", "P5"),
        priorities=transfer_priorities(order) if order else (),
        label="study",
    )


@pytest.fixture
def case_a_scenario():
    return study_scenario(500, ["T4", "T5", "T6"])


@pytest.fixture
def case_b_scenario():
    return study_scenario(500, ["T5", "T4", "T6"])


@pytest.fixture
def case_c_scenario():
    return study_scenario(500, ["T5", "T6", "T4"])
