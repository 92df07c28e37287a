import json
import os

import numpy as np
import pytest

from riesz_lab.cli import main
from riesz_lab.config import ConfigError, load_config, load_points, parse_config

SPHERE_INI = """
[run]
seed = 3
output_dir = out

[set]
kind = sphere
resolution = 120

[kernel]
alpha = 1.0

[field]
expression = 0.5*norm()^2   ; inline comment

[fekete]
n = 4
restarts = 3

[tdiam]
n_list = 2, 4

[tau]
n = 2
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_ini_and_json_agree(tmp_path):
    a = parse_config(SPHERE_INI)
    js = json.dumps(a.sections)
    b = parse_config(js)
    assert a.seed == b.seed == 3
    assert a.build_kernel().alpha == b.build_kernel().alpha
    x = np.array([[1.0, 1.0, 1.0]])
    assert a.build_field()(x)[0] == pytest.approx(1.5)
    assert len(a.build_mesh()) == len(b.build_mesh())


@pytest.mark.parametrize(
    "text",
    [
        "[set]\nkind = sphere\n[kernel]\nalpha = 1\n",  # no seed
        "[run]\nseed = 1\n[set]\nkind = sphere\n",  # no alpha
        "[run]\nseed = 1\n[kernel]\nalpha = 3.5\n",  # alpha >= d
        "[run]\nseed = 1\n[set]\nkind = blob\n[kernel]\nalpha = 1\n",
        "[run]\nseed = 1\n[kernel]\nalpha = 1\n[field]\nexpression = 1/(x1-x1)\n",
        "[run\nseed=1",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text).validate()


def test_seed_override_and_hash(tmp_path):
    path = _write(tmp_path, "a.ini", SPHERE_INI)
    cfg = load_config(path, seed=99)
    assert cfg.seed == 99
    assert cfg.content_hash == load_config(path).content_hash
    assert cfg.content_hash != parse_config(SPHERE_INI + "\n").content_hash


def test_load_points(tmp_path):
    p = _write(tmp_path, "pts.txt", "# header\n0 0 1, 0.5\n1 0 0 0.5  # trailing\n")
    pts, w = load_points(p, 3)
    assert pts.shape == (2, 3) and list(w) == [0.5, 0.5]
    pts, extra = load_points(p)
    assert pts.shape == (2, 4) and extra is None
    with pytest.raises(ConfigError):
        load_points(_write(tmp_path, "bad.txt", "0 0 1\n1 0\n"))
    with pytest.raises(ConfigError):
        load_points(_write(tmp_path, "empty.txt", "# nothing\n"))


def test_fekete_tetrahedron(tmp_path):
    cfg = _write(tmp_path, "s.ini", SPHERE_INI.replace("0.5*norm()^2", "0"))
    out = tmp_path / "run"
    assert main(["fekete", "--config", cfg, "--n", "4", "--out", str(out)]) == 0
    rec = json.loads((out / "fekete.json").read_text())
    X = np.array(rec["points"])
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)[np.triu_indices(4, 1)]
    assert np.allclose(D, np.sqrt(8 / 3), atol=1e-5)
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and set(man["outputs"]) == {"fekete.json"}
    assert len(man["config_sha256"]) == 64


def test_error_json_and_exit_codes(tmp_path):
    cfg = _write(tmp_path, "bad.ini", "[run]\nseed = 1\n[set]\nkind = sphere\n")
    out = tmp_path / "err"
    assert main(["equilibrium", "--config", cfg, "--out", str(out)]) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "ConfigError" and "alpha" in err["message"]
    # missing n is a config problem too
    cfg2 = _write(tmp_path, "non.ini", "[run]\nseed = 1\n[kernel]\nalpha = 1\n[set]\nresolution = 50\n")
    assert main(["fekete", "--config", cfg2, "--out", str(tmp_path / "e2")]) == 2
    assert main(["fekete", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "e3")]) == 2
    assert (tmp_path / "e3" / "error.json").exists()


def test_env_overrides_out(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "s.ini", SPHERE_INI)
    env_out = tmp_path / "from_env"
    monkeypatch.setenv("RIESZ_LAB_OUT", str(env_out))
    assert main(["tau", "--config", cfg, "--out", str(tmp_path / "ignored")]) == 0
    assert (env_out / "tau.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_relative_output_dir_follows_config(tmp_path, monkeypatch):
    monkeypatch.delenv("RIESZ_LAB_OUT", raising=False)
    cfg = _write(tmp_path, "s.ini", SPHERE_INI)
    assert main(["tau", "--config", cfg]) == 0
    assert (tmp_path / "out" / "tau.csv").exists()


def _outputs(d):
    return {f: (d / f).read_bytes() for f in sorted(os.listdir(d)) if f != "manifest.json"}


@pytest.mark.parametrize("sub", ["equilibrium", "tdiam", "tau", "gibbs-sample"])
def test_rerun_is_byte_identical(tmp_path, sub):
    text = SPHERE_INI + "\n[gibbs-sample]\nn = 3\nchains = 2\nsteps = 100\nburn_in = 20\n"
    cfg = _write(tmp_path, "s.ini", text)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([sub, "--config", cfg, "--out", str(a)]) == 0
    assert main([sub, "--config", cfg, "--out", str(b)]) == 0
    assert _outputs(a) == _outputs(b)
    ma, mb = (json.loads((x / "manifest.json").read_text()) for x in (a, b))
    ma.pop("wall_time_s"), mb.pop("wall_time_s")
    assert ma == mb


def test_seed_changes_stochastic_output(tmp_path):
    text = SPHERE_INI + "\n[gibbs-sample]\nn = 3\nchains = 2\nsteps = 100\nburn_in = 20\n"
    cfg = _write(tmp_path, "s.ini", text)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["gibbs-sample", "--config", cfg, "--out", str(a)])
    main(["gibbs-sample", "--config", cfg, "--out", str(b), "--seed", "4"])
    assert (a / "gibbs_samples.csv").read_bytes() != (b / "gibbs_samples.csv").read_bytes()


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in sorted(os.listdir(root)):
        load_config(os.path.join(root, name)).validate()
