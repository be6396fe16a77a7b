import json

import pytest

import nesy_parking as nesy


def test_discretize_bands():
    assert nesy.discretize(0.0) == "VeryLow"
    assert nesy.discretize(0.2) == "Low"
    assert nesy.discretize(0.9) == "VeryHigh"
    with pytest.raises(nesy.NesyError, match="domain_error"):
        nesy.discretize(1.5)


def test_refine_renormalizes_over_plausible_classes():
    r = nesy.refine([0.28, 0.27, 0.20, 0.15, 0.10], ["VeryLow", "Low"])
    assert r[0] == pytest.approx(0.28 / 0.55)
    assert r[1] == pytest.approx(0.27 / 0.55)
    assert r[2:] == [0.0, 0.0, 0.0]
    assert nesy.refine([0, 0, 0, 0, 1], [0, 1])[:2] == [0.5, 0.5]


def test_metrics():
    assert nesy.accuracy([2, 2, 2, 2], [2, 3, 0, 2]) == 0.5
    assert nesy.accuracy_at_1([0, 1, 4, 3], [1, 1, 2, 4]) == 0.75
    with pytest.raises(nesy.NesyError):
        nesy.accuracy([1], [1, 2])


def test_config_layering():
    c = nesy.config(["seed=4"], base={"generator": {"days": 9}})
    assert c["seed"] == 4
    assert c["generator"]["days"] == 9
    assert c["experiment"]["threshold"] == 0.3
    with pytest.raises(nesy.NesyError, match="config_error"):
        nesy.config(["experiment.nope=1"])


def test_generate_through_command_line(tmp_path):
    args = ["--out", str(tmp_path), "--set", "generator.segments=1", "--set", "generator.days=3", "generate"]
    code, out, err = nesy.run(args)
    assert code == 0, err
    assert "slots.csv" in out
    manifest = json.loads((tmp_path / "manifest_generate.json").read_text())
    assert {f["path"] for f in manifest["files"]} == {
        "slots.csv", "weather.csv", "holidays.csv", "ground_truth_rules.json"}
    assert nesy.run(args)[1] == out

    code, _, err = nesy.run(["train", "--set", "bogus=1"])
    assert code == 2
    assert err.startswith("error: config_error")
