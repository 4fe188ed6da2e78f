import json
import math
from pathlib import Path

import numpy as np
import pytest

from dmol.cli import dump_json, main
from dmol.config import apply_overrides, build_problem, load_config, parse_angle
from dmol.errors import ConfigurationError

ROOT = Path(__file__).resolve().parents[1]
DISK = ROOT / "experiments" / "constant_disk.toml"


def test_parse_angle():
    assert parse_angle("3*pi/4") == pytest.approx(0.75 * math.pi)
    assert parse_angle(-1) == -1.0
    assert parse_angle("-pi") == pytest.approx(-math.pi)
    with pytest.raises(ConfigurationError):
        parse_angle("__import__('os')")


def test_overrides_do_not_mutate():
    cfg = {"mesh": {"M": 8}}
    out = apply_overrides(cfg, ["mesh.M=16", "mesh.order=2", "output.dir=\"x\""])
    assert out["mesh"] == {"M": 16, "order": 2} and out["output"]["dir"] == "x"
    assert cfg["mesh"] == {"M": 8}


def test_dump_json_float_format():
    text = dump_json({"a": 0.1, "b": [1, 2.5], "c": None, "d": "s"})
    data = json.loads(text)
    assert data == {"a": 0.1, "b": [1, 2.5], "c": None, "d": "s"}
    assert "1.0000000000000001e-01" in text and "2.5000000000000000e+00" in text


@pytest.mark.parametrize("name", ["crack_p1", "crack_p2", "star5", "rounded_square_inverse", "star3_noise", "constant_disk"])
def test_shipped_configs_build(name):
    cfg = load_config(ROOT / "experiments" / f"{name}.toml")
    bundle = build_problem(cfg)
    assert bundle.problem.M >= 8


def _write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_missing_tensors_is_a_configuration_error(tmp_path, capsys):
    cfg = _write(tmp_path, '[problem]\nshape = "star5"\n')
    assert main(["forward", str(cfg), "-o", str(tmp_path / "out")]) == 2
    assert "tensors" in capsys.readouterr().err


def test_bad_toml_and_missing_file(tmp_path):
    cfg = _write(tmp_path, "[problem\n")
    assert main(["forward", str(cfg), "-o", str(tmp_path)]) == 2
    assert main(["forward", str(tmp_path / "nope.toml"), "-o", str(tmp_path)]) == 2


def test_non_spd_tensor_rejected(tmp_path):
    cfg = _write(tmp_path, '[problem]\nshape = "circle"\ntensors = [[1, 1, 1, 5, 0, 0]]\n')
    assert main(["forward", str(cfg), "-o", str(tmp_path)]) == 2


def test_forward_constant_disk(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["forward", str(DISK), "-o", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["M"] == 32
    field = json.loads((out / "field.json").read_text())
    assert np.allclose(field["u1"], 0.5, atol=1e-9) and np.allclose(field["u2"], -2.0, atol=1e-9)
    spec = json.loads((out / "spectrum.json").read_text())
    assert len(spec["gammas"]) == 2 * 32  # two components per angular dof
    assert sorted(spec["real_gammas"])[0] == pytest.approx(0.0, abs=1e-6)


def test_forward_output_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["forward", str(DISK), "-o", str(tmp_path / d), "--set", "mesh.M=16"]) == 0
    for f in ("field.json", "spectrum.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_convergence_single_mesh_has_empty_order(tmp_path):
    cfg = ROOT / "experiments" / "crack_p1.toml"
    assert main(["convergence", str(cfg), "-o", str(tmp_path), "--M", "16"]) == 0
    rows = (tmp_path / "errors.csv").read_text().splitlines()
    assert rows[0] == "M,eig_error,eig_order,h1_rel,h1_order"
    cells = rows[1].split(",")
    assert cells[0] == "16" and cells[2] == "" and cells[4] == ""
    assert float(cells[1]) > 0 and float(cells[3]) > 0


def test_convergence_needs_exact_reference(tmp_path):
    assert main(["convergence", str(DISK), "-o", str(tmp_path), "--M", "8", "--set", 'convergence.reference="exact"']) == 2


SMALL_INVERSE = """
[problem]
shape = "star3"
interfaces = [0, "pi"]
tensors = [[8, 6, 4, 1, 1, 1], [4, 3, 2, 1, 0.5, 0.5]]
dirichlet = {kind = "constant", value = [1, 1]}
body_force = {kind = "constant", value = [1, 1]}

[measurement]
delta = 0.001
seed = 3
M_ref = 32
order_ref = 1
n_rho_panels = 16
n_ang = 64

[inverse]
m = 4
init = [6, 4.5, 3, 0.75, 0.75, 0.75]
M_forward = 16
max_iter = 5
relative_steps = true
tau0 = 0.05
"""


def test_synthesize_and_invert(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL_INVERSE)
    out = tmp_path / "run"
    assert main(["synthesize", str(cfg), "-o", str(out)]) == 0
    capsys.readouterr()
    assert (out / "measurement.npz").exists()
    assert main(["invert", str(cfg), "-o", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["iterations"] == summary["forward_solves"] <= 5
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0] == "k,J,tv,grad_inf_norm,l1_rel_error" and len(hist) == summary["iterations"] + 1
    coeffs = json.loads((out / "coefficients.json").read_text())
    assert len(coeffs["sectors"]) == 4 and set(coeffs["sectors"]["1"]) == {"a11", "a22", "a33", "a12", "a13", "a23"}


def test_synthesize_requires_divisible_angular_grid(tmp_path):
    cfg = _write(tmp_path, SMALL_INVERSE.replace("n_ang = 64", "n_ang = 30"))
    assert main(["synthesize", str(cfg), "-o", str(tmp_path)]) == 2


def test_invert_without_data(tmp_path):
    cfg = _write(tmp_path, SMALL_INVERSE)
    assert main(["invert", str(cfg), "-o", str(tmp_path / "empty")]) == 2
