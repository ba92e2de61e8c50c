import csv
import json

import pytest

from hsliouville.cli import main
from hsliouville.errors import ParseError, ValidationError
from hsliouville.scenario import (
    TRAJECTORY_COLUMNS,
    RunSection,
    Scenario,
    parse_scenario,
    serialize_scenario,
)


def test_minimal_scenario_takes_defaults():
    sc = parse_scenario("[run]\nchecks = identity_suite\n")
    assert sc.run.checks == ("identity_suite",)
    assert sc.run.epsilon == 1.0 and sc.run.samples == RunSection().samples
    assert sc.datum == Scenario().datum


def test_negative_epsilon_names_the_key():
    with pytest.raises(ValidationError) as info:
        parse_scenario("[run]\nepsilon = -1\n")
    assert info.value.key == "epsilon"


@pytest.mark.parametrize("text, key", [
    ("[run]\nbogus = 1\n", "bogus"),
    ("[nowhere]\na = 1\n", "nowhere"),
    ("[run]\nchecks = identity_suite, teleport\n", "checks"),
    ("[run]\nsamples = many\n", "samples"),
    ("[sinai]\nradius = 1.2\n", "radius"),
    ("[trajectory]\nstate = 1, 2, 3\n", "state"),
])
def test_invalid_values(text, key):
    with pytest.raises(ValidationError) as info:
        parse_scenario(text)
    assert info.value.key == key


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as info:
        parse_scenario("[run]\nepsilon = 1\nthis line has no equals sign\n")
    assert info.value.line == 3
    with pytest.raises(ParseError) as info:
        parse_scenario("epsilon = 1\n")
    assert info.value.line == 1


def test_serialize_round_trip():
    sc = parse_scenario("[run]\nchecks = sinai, bbgky\nepsilon = 0.5\nworkers = 3\n"
                        "[datum]\ncomponents = -2 0 0 1 0 0 0.4 0.4 2; 2 0 0 -1 0 0 0.4 0.4 2\n"
                        "[trajectory]\ndoubled = yes\nsheet = 2\n")
    again = parse_scenario(serialize_scenario(sc))
    assert again == sc
    assert serialize_scenario(again) == serialize_scenario(sc)


def test_cli_exit_codes(tmp_path):
    assert main(["verify", "--checks", "identity_suite", "--samples", "20000",
                 "--output", str(tmp_path / "ok")]) == 0
    doc = json.loads((tmp_path / "ok" / "report.json").read_text())
    assert doc["all_passed"] and {c["name"] for c in doc["checks"]} >= {"COLM", "sigma_involution"}
    assert main(["verify", "--checks", "divergence_theorem", "--samples", "20000", "--flip-orientation",
                 "--output", str(tmp_path / "flip")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nepsilon = -1\n")
    assert main(["verify", str(bad)]) == 2
    assert main(["verify", str(tmp_path / "missing.ini")]) == 2


def test_simulate_csv(tmp_path):
    assert main(["simulate", "--output", str(tmp_path)]) == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    times = [float(r[0]) for r in rows[1:]]
    assert 1.0 in times
    at_one = rows[1 + times.index(1.0)]
    assert float(at_one[1]) == pytest.approx(-0.5) and float(at_one[4]) == pytest.approx(0.5)


def test_sinai_and_marginal_commands(tmp_path):
    assert main(["sinai", "--output", str(tmp_path)]) == 0
    assert (tmp_path / "sinai.csv").read_text().splitlines()[0] == "t,x1,x2,v1,v2"
    sc = tmp_path / "m.ini"
    sc.write_text("[marginal]\nsamples = 20000\n")
    assert main(["marginal", str(sc), "--output", str(tmp_path)]) == 0
    est = json.loads((tmp_path / "marginal.json").read_text())["marginal"]
    assert est["value"] >= 0


def test_reports_are_byte_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    args = ["verify", "--checks", "identity_suite,chaos_witness,sinai", "--samples", "20000", "--output", "out"]
    assert main(args) == 0
    first = (tmp_path / "out" / "report.json").read_bytes()
    assert main(args + ["--workers", "1"]) == 0
    assert (tmp_path / "out" / "report.json").read_bytes() == first
