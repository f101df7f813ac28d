import hashlib
import json

import numpy as np
import pytest

from pdedag.cli import run_cli
from pdedag.config import SamplingConfig, SolverConfig
from pdedag.datagen import generate_dataset


def _digest(path):
    digest = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            digest.update(p.name.encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()


SMALL = SolverConfig(n_x=64, n_t=11)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    generate_dataset(out, count=2, base_seed=77, solver_cfg=SMALL)
    return out


def test_gen_deterministic_directories(tmp_path):
    code1 = run_cli(["gen", "--count", "2", "--seed", "1", "--out", str(tmp_path / "a")])
    code2 = run_cli(["gen", "--count", "2", "--seed", "1", "--out", str(tmp_path / "b")])
    assert code1 == 0 and code2 == 0
    a = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir() if p.suffix == ".bin"}
    b = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir() if p.suffix == ".bin"}
    assert a == b
    assert (tmp_path / "a" / "effective_config.json").exists()


def test_unknown_flag_usage_error(capsys):
    assert run_cli(["gen", "--nope", "1"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_command_usage_error():
    assert run_cli(["frobnicate"]) == 1


def test_help_exits_zero():
    assert run_cli(["--help"]) == 0


def test_missing_dataset_is_runtime_error(tmp_path, capsys):
    code = run_cli(["eval", "--checkpoint", str(tmp_path / "nope"),
                    "--data", str(tmp_path / "alsono")])
    assert code == 2
    assert "error" in capsys.readouterr().err.lower()


def test_config_file_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gen": {"bogus_key": 1}}))
    assert run_cli(["gen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_export_plot(tmp_path, tiny_dataset):
    out = tmp_path / "plot.svg"
    assert run_cli(["export-plot", "--data", str(tiny_dataset),
                    "--sample-index", "0", "--out", str(out)]) == 0
    assert out.read_text().startswith("<svg")


def test_corrupt_checkpoint_eval_exits_two(tmp_path, tiny_dataset):
    ckpt = tmp_path / "ckpt"
    ckpt.mkdir()
    (ckpt / "manifest.json").write_text(json.dumps({
        "format_version": "1.0",
        "model_config": {"d_f": 8, "n_patches": 8},
        "param_layout": [], "n_params": 0,
    }))
    (ckpt / "params.bin").write_bytes(b"")
    code = run_cli(["eval", "--checkpoint", str(ckpt), "--data", str(tiny_dataset)])
    assert code == 2


def test_infer_writes_grid(tmp_path):
    # train nothing: a freshly initialised checkpoint is enough to exercise
    # the infer path end to end
    from pdedag.config import ModelConfig
    from pdedag.dataio import save_checkpoint
    from pdedag.model import init_model_params

    cfg = ModelConfig(d_f=8, n_patches=8, n_mod=2, d_e=16, n_layers=1, n_heads=2,
                      ffn_dim=16, feat_hidden=16, d_h=8, hyper_hidden=16)
    params = init_model_params(cfg, seed=0)
    ckpt = save_checkpoint(tmp_path / "ckpt", params, cfg)
    ic_path = tmp_path / "ic.csv"
    x = -1.0 + 2.0 * np.arange(cfg.n_x) / cfg.n_x
    np.savetxt(ic_path, np.sin(np.pi * x)[None, :], delimiter=",")
    out = tmp_path / "pred.csv"
    code = run_cli(["infer", "--checkpoint", str(ckpt), "--pde", "dt(u) + c*dx(u) = 0",
                    "--coef", "c=0.5", "--ic", str(ic_path), "--out", str(out), "--nt", "5"])
    assert code == 0
    grid = np.loadtxt(out, delimiter=",")
    assert grid.shape == (5, cfg.n_x)
    assert np.all(np.isfinite(grid))


def test_infer_bad_coef_flag_is_usage_error(tmp_path):
    from pdedag.config import ModelConfig
    from pdedag.dataio import save_checkpoint
    from pdedag.model import init_model_params

    cfg = ModelConfig(d_f=8, n_patches=8, n_mod=2, d_e=16, n_layers=1, n_heads=2,
                      ffn_dim=16, feat_hidden=16, d_h=8, hyper_hidden=16)
    ckpt = save_checkpoint(tmp_path / "ckpt", init_model_params(cfg, seed=0), cfg)
    ic_path = tmp_path / "ic.csv"
    np.savetxt(ic_path, np.zeros((1, cfg.n_x)), delimiter=",")
    code = run_cli(["infer", "--checkpoint", str(ckpt), "--pde", "dt(u) = 0",
                    "--coef", "oops", "--ic", str(ic_path), "--out", str(tmp_path / "p.csv")])
    assert code == 1
