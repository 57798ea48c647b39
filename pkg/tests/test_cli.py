import json
import xml.etree.ElementTree as ET

import pytest

from roughbl import cli
from roughbl.cli import ConfigError, ExperimentConfig, ExperimentError, config_hash, main, run, validate


def cfg(experiment, **kw):
    return ExperimentConfig.from_mapping({"experiment": experiment, **kw})


@pytest.mark.parametrize("exp", cli.EXPERIMENTS)
def test_default_configs_are_valid(exp):
    assert validate(cfg(exp)) == []


def test_small_window_names_both_fields():
    diags = validate(cfg("clt", params={"window": 4.0}))
    assert any("params.window" in d and "ensemble.kappa" in d for d in diags)


def test_empty_eps_list_for_wall_law():
    assert any(d.startswith("eps:") for d in validate(cfg("wall-law", eps=[])))


@pytest.mark.parametrize("mapping,needle", [
    ({"params": {"phi": 5.0}}, "params.phi"),
    ({"params": {"mode": "euler"}}, "params.mode"),
    ({"eps": ["1/8", "1/16", "1/32"]}, "eps"),
    ({"grid": {"h": 3.0}}, "grid.h"),
    ({"seed": -1}, "seed"),
    ({"workers": 0}, "workers"),
    ({"bogus": 1}, "bogus"),
    ({"params": {"speed": 1}}, "params.speed"),
])
def test_wall_law_diagnostics(mapping, needle):
    diags = validate(cfg("wall-law", **mapping))
    assert any(needle in d for d in diags), diags


def test_coupling_window_and_green_bounds():
    assert any("n:" in d for d in validate(cfg("couple", n=[4, 62], params={"window": 64.0})))
    assert any("separations" in d for d in validate(cfg("green", grid={"half_width": 16.0})))
    assert any("grid.far_h_fine" in d for d in validate(cfg("green", grid={"far_h_fine": 2.0})))
    assert any("grid.h_fine" in d for d in validate(cfg("green", grid={"h_fine": 0.03})))
    assert validate(cfg("green")) == []
    assert any("min_samples" in d for d in validate(cfg("clt", params={"samples": 10})))


def test_unknown_experiment():
    assert validate(cfg("nope"))[0].startswith("experiment:")


def test_yaml_fractions_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("experiment: wall-law\nseed: 3\neps: ['1/8', '1/16', 0.03125, '1/64']\n")
    c = ExperimentConfig.from_file(p, seed=7, out=str(tmp_path / "o"))
    res = c.resolved()
    assert res["seed"] == 7 and res["eps"] == [0.125, 0.0625, 0.03125, 0.015625]
    assert res["params"]["phi"] == 0.1


def test_config_hash_ignores_placement():
    a = cfg("decay", out="x", workers=1).resolved()
    b = cfg("decay", out="y", workers=4).resolved()
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(cfg("decay", seed=1).resolved())


def test_run_rejects_invalid_config(tmp_path):
    with pytest.raises(ConfigError) as info:
        run(cfg("wall-law", eps=[], out=str(tmp_path)))
    assert info.value.diagnostics


def test_solver_errors_carry_experiment_context(tmp_path, monkeypatch):
    def boom(res, ctx):
        raise cli.stokes.SolverError("no convergence", 1.0)
    monkeypatch.setitem(cli.RUNNERS, "decay", boom)
    with pytest.raises(ExperimentError, match="decay"):
        run(cfg("decay", out=str(tmp_path)))


def test_kernels_check_run_and_manifest(tmp_path):
    man = run(cfg("kernels-check", out=str(tmp_path)))
    report = json.loads((tmp_path / "kernels_check.json").read_text())
    assert report["all_pass"] and report["seed"] == 0
    listed = {f["name"] for f in man.files}
    on_disk = {p.name for p in tmp_path.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    mf = json.loads((tmp_path / "manifest.json").read_text())
    assert mf["config"]["params"]["n_points"] == 20
    assert set(mf) >= {"config_hash", "version", "wall_clock", "stages", "files"}


def _csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_decay_outputs_are_reproducible_and_tagged(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(cfg("decay", seed=2, out=str(a)))
    run(cfg("decay", seed=2, out=str(b)))
    ca, cb = _csv_bytes(a), _csv_bytes(b)
    assert ca and ca == cb
    for name, data in ca.items():
        assert data.decode().startswith("# roughbl decay seed=2 config=")
    for p in a.glob("*.json"):
        assert json.loads(p.read_text())["seed"] == 2
    svg = (a / "decay.svg").read_text()
    ET.fromstring(svg)
    assert "<!-- data seed=2" in svg


def test_results_do_not_depend_on_worker_count(tmp_path):
    base = {"params": {"samples": 3, "window": 32.0}, "grid": {"top": 16.0}}
    run(cfg("alpha", out=str(tmp_path / "w1"), workers=1, **base))
    run(cfg("alpha", out=str(tmp_path / "w2"), workers=2, **base))
    assert _csv_bytes(tmp_path / "w1") == _csv_bytes(tmp_path / "w2")


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("params:\n  phi: 4.0\n")
    assert main(["wall-law", "--config", str(bad)]) == 2
    assert "params.phi" in capsys.readouterr().err
    assert main(["decay", "--check"]) == 0
    assert json.loads(capsys.readouterr().out)["heights"][0] == 0.25
    other = tmp_path / "other.yaml"
    other.write_text("experiment: clt\n")
    assert main(["decay", "--config", str(other)]) == 2
    assert main(["kernels-check", "--out", str(tmp_path / "k")]) == 0
    assert (tmp_path / "k" / "manifest.json").exists()


def test_svg_plot_embeds_data():
    svg = cli.svg_plot([("a", [1, 2, 4], [1.0, 0.5, 0.25])], title="t")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert "0.25" in svg.split("-->")[0]


def test_numeric_strings_in_sections():
    a = cfg("decay", grid={"h": "1/32"})
    assert validate(a) == [] and config_hash(a.resolved()) == config_hash(cfg("decay").resolved())
    assert any("could not be parsed" in d for d in validate(cfg("decay", grid={"h": "fine"})))
