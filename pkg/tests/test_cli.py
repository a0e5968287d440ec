import json

import numpy as np
import pytest

from vortexlab.artifacts import read_csv
from vortexlab.cli import main
from vortexlab.scenario import default_config_dict


def _write(tmp_path, name, d):
    p = tmp_path / name
    p.write_text(json.dumps(d, indent=2))
    return p


def _manifests(root):
    return [json.loads(line) for line in (root / "manifests.jsonl").read_text().splitlines()]


def _run_dir(root):
    return root / _manifests(root)[-1]["run_dir"].split("/")[-1]


def test_euler_default_steady_front(tmp_path):
    assert main(["euler", "--out", str(tmp_path)]) == 0
    run = _run_dir(tmp_path)
    header, data = read_csv(run / "front.csv")
    phi = data[:, header.index("phi")]
    assert np.max(np.abs(phi - 2.0)) < 1e-6
    man = json.loads((run / "manifest.json").read_text())
    assert man["status"] == "ok" and man["exit_code"] == 0
    assert set(man["outputs"]) == {"front.csv", "euler_slices.csv", "outer_slices.csv"}
    assert man["invariants"]["max_jump_u"] < 1e-8


def test_missing_gamma_exit_2(tmp_path, capsys):
    d = default_config_dict()
    del d["gamma"]
    code = main(["euler", "--config", str(_write(tmp_path, "s.json", d)), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "gamma" in capsys.readouterr().err
    man = _manifests(tmp_path / "o")[-1]
    assert man["status"] == "config_error" and man["exit_code"] == 2


def test_front_inside_wall_exit_2(tmp_path, capsys):
    d = default_config_dict()
    d["b"] = 0.5
    code = main(["euler", "--config", str(_write(tmp_path, "s.json", d)), "--out", str(tmp_path / "o")])
    assert code == 2 and "front inside wall" in capsys.readouterr().err


def test_resolution_guard_exit_3(tmp_path, capsys):
    code = main(["viscous", "--eps", "1e-6", "--out", str(tmp_path)])
    assert code == 3
    assert "sqrt(eps)" in capsys.readouterr().err
    man = _manifests(tmp_path)[-1]
    assert man["status"] == "ResolutionError" and man["exit_code"] == 3


def test_single_eps_verify_exit_2(tmp_path, capsys):
    assert main(["verify", "--eps", "1e-3", "--out", str(tmp_path)]) == 2
    assert "need ≥ 3 ε values to fit" in capsys.readouterr().err


def test_vortex_out_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("VORTEX_OUT", str(tmp_path / "env"))
    d = default_config_dict()
    del d["a"]
    main(["euler", "--config", str(_write(tmp_path, "s.json", d)), "--out", str(tmp_path / "flag")])
    assert (tmp_path / "env" / "manifests.jsonl").exists()
    assert not (tmp_path / "flag").exists()


@pytest.fixture(scope="module")
def rest_config(tmp_path_factory):
    d = default_config_dict()
    d["initial"] = {"preset": "rest", "V_minus": 0.0, "V_plus": 0.0}
    d["boundary_v"] = {"preset": "constant"}
    d["T"] = 0.1
    p = tmp_path_factory.mktemp("cfg") / "rest.json"
    p.write_text(json.dumps(d))
    return p


def test_rest_viscous_constant_and_deterministic(tmp_path, rest_config):
    outs = []
    for k in range(2):
        root = tmp_path / f"o{k}"
        assert main(["viscous", "--config", str(rest_config), "--eps", "1e-3", "--out", str(root)]) == 0
        run = _run_dir(root)
        outs.append((run / "trajectory_eps0.001.csv").read_bytes())
        header, data = read_csv(run / "trajectory_eps0.001.csv")
        assert np.max(np.abs(data[:, header.index("u")])) == 0.0
        assert np.max(np.abs(data[:, header.index("tau")] - 1.0)) < 1e-14
    assert outs[0] == outs[1]


def test_viscous_manifest_invariants(tmp_path):
    assert main(["viscous", "--eps", "1e-2", "--out", str(tmp_path)]) == 0
    man = _manifests(tmp_path)[-1]
    inv = man["invariants"]["0.01"]
    assert inv["wall_error"] == 0.0 and inv["geometric_defect"] < 1e-8 and inv["tau_min"] > 0
    run = _run_dir(tmp_path)
    for rel in man["outputs"]:
        assert (run / rel).exists()


def test_layers_trivial_scenario_files(tmp_path):
    d = default_config_dict()
    d["initial"] = {"preset": "steady_swirl", "V_minus": 0.5, "V_plus": 0.5}
    d["boundary_v"] = {"preset": "constant"}
    code = main(["layers", "--config", str(_write(tmp_path, "s.json", d)), "--out", str(tmp_path / "o")])
    assert code == 0
    run = _run_dir(tmp_path / "o")
    for name in ("v_B0", "v_s0"):
        _, data = read_csv(run / f"{name}.csv")
        assert np.max(np.abs(data[:, 2])) < 1e-10
    man = json.loads((run / "manifest.json").read_text())
    assert man["invariants"]["weighted_norms_finite"]


def test_layers_default_norms_finite(tmp_path):
    assert main(["layers", "--out", str(tmp_path)]) == 0
    man = _manifests(tmp_path)[-1]
    assert man["invariants"]["weighted_norms_finite"]
    assert np.isfinite(man["invariants"]["weighted_norm_max"])


def test_verify_resume_reuses_cache(tmp_path):
    d = default_config_dict()
    d["T"] = 0.05
    d["eps_list"] = [1e-2, 5e-3, 2.5e-3]
    cfg = str(_write(tmp_path, "s.json", d))
    root = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(root)]) == 0
    run = _run_dir(root)
    first = {p.name: p.read_bytes() for p in (run / "per_eps").iterdir()}
    rates = (run / "rates.csv").read_text()
    assert len(first) == 3 and (run / "summary.json").exists()
    assert main(["verify", "--config", cfg, "--out", str(root), "--resume"]) == 0
    man = _manifests(root)[-1]
    assert man["parameters"]["reused"] == sorted(d["eps_list"])
    assert {p.name: p.read_bytes() for p in (run / "per_eps").iterdir()} == first
    assert (run / "rates.csv").read_text() == rates
    assert len(_manifests(root)) == 2
