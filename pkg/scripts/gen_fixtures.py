"""Regenerate the bundled example net and scenario files from the builders."""

from fractions import Fraction as F
from pathlib import Path

from hpnsim.casestudy import STUDY_RATES, relay_network
from hpnsim.model import save_net
from hpnsim.scenario import Scenario, save_scenario

DATA = Path(__file__).resolve().parent.parent / "src" / "hpnsim" / "data"


def main():
    DATA.mkdir(exist_ok=True)
    (DATA / "relay_net.json").write_bytes(save_net(relay_network()))

    baseline = Scenario(
        net_ref="relay",
        message_size=F(1000),
        deadline=F(300),
        source="P5",
        destination="P4",
        search_places=("P1", "P5"),
        label="baseline",
    )
    (DATA / "relay_baseline.json").write_bytes(save_scenario(baseline))

    study = Scenario(
        net_ref="relay",
        speeds=dict(STUDY_RATES),
        message_size=F(1000),
        deadline=F(500),
        source="P5",
        destination="P4",
        search_places=("P1", "P5"),
        label="priority study",
    )
    (DATA / "relay_study.json").write_bytes(save_scenario(study))
    print("wrote", sorted(p.name for p in DATA.glob("*.json")))


if __name__ == "__main__":
    main()
