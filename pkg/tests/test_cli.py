import json

import numpy as np
import pytest

from klsnmf import synth_blobs, write_dense_matrix
from klsnmf.cli import OUTPUT_ENV, build_parser, main, read_config
from klsnmf.data import read_matrix, write_matrix
from klsnmf.experiment import blob_centers

BLOB_ARGS = ["--blobs", "3", "--per-cluster", "15", "--noise-sd", "1", "--separation", "10"]


def test_solve_blobs(tmp_path, capsys):
    assert main(["solve", *BLOB_ARGS, "--lam", "0.001", "--radius", "1", "--out", str(tmp_path)]) == 0
    for name in ("W.txt", "G.txt", "trace.tsv", "result.json"):
        assert (tmp_path / name).exists()
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["config"]["k"] == 3
    assert 0 < result["metrics"]["accuracy"] <= 1
    assert read_matrix(tmp_path / "G.txt").shape == (45, 3)
    assert "accuracy" in capsys.readouterr().out


def test_solve_data_file(tmp_path):
    data = synth_blobs(blob_centers(2, 10.0), 10, 1.0, seed=2)
    path = tmp_path / "d.txt"
    write_dense_matrix(path, data)
    out = tmp_path / "out"
    assert main(["solve", "--data", str(path), "--labels", "--kernel", "linear", "--out", str(out)]) == 0
    assert json.loads((out / "result.json").read_text())["config"]["kernel"] == "linear"


def test_solve_precomputed_kernel(tmp_path):
    write_matrix(tmp_path / "K.txt", np.eye(5) * 0.5 + 0.5)
    out = tmp_path / "out"
    assert main(["solve", "--kernel", "precomputed", "--kernel-file", str(tmp_path / "K.txt"),
                 "-k", "2", "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert "metrics" not in result and len(result["labels"]) == 5


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["solve", *BLOB_ARGS, "--max-iterations", "5"]) == 0
    assert (tmp_path / "env" / "result.json").exists()


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nlam = 0.5\nmax-iterations = 7\nno_guard = yes\n")
    out = tmp_path / "out"
    assert main(["solve", *BLOB_ARGS, "--lam", "0.001", "--config", str(cfg), "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["config"]["lam"] == 0.5
    assert result["config"]["max_iterations"] == 7
    assert result["config"]["descent_guard"] is False


def test_read_config_rejects_garbage(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lam 0.5\n")
    with pytest.raises(Exception):
        read_config(cfg)


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["solve", *BLOB_ARGS, "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_experiment_writes_tables(tmp_path):
    out = tmp_path / "exp"
    rc = main(["experiment", *BLOB_ARGS, "--n-values", "2", "--subsets", "2", "--lambdas", "0.001",
               "--radii", "1", "10", "--baseline", "--traces", "--out", str(out)])
    assert rc == 0
    lines = (out / "results.jsonl").read_text().splitlines()
    assert len(lines) == 2 * 2 + 2
    assert "best over grid" in (out / "summary.txt").read_text()
    assert len(list((out / "traces").glob("*.tsv"))) == 6


def test_traces_command(tmp_path, capsys):
    out = tmp_path / "tr"
    assert main(["traces", *BLOB_ARGS, "--subsets", "1", "--out", str(out)]) == 0
    files = list((out / "traces").glob("*.tsv"))
    assert [f.name for f in files] == ["klsnmf_N3_s0_lam0.001_r1.tsv"]


def test_missing_data_source(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path)]) == 2
    assert "--data" in capsys.readouterr().err


def test_bad_data_file(tmp_path, capsys):
    path = tmp_path / "d.txt"
    path.write_text("1 2 0\n1 x 1\n")
    assert main(["solve", "--data", str(path), "--labels", "--out", str(tmp_path)]) == 2
    assert "row 2" in capsys.readouterr().err


def test_fetch_data_file_url(tmp_path, capsys):
    src = tmp_path / "toy.data"
    src.write_text("1 0 0 1\n0 1 1 0\n")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"toy": {"url": src.as_uri(), "sha256": None, "format": "onehot",
                                            "n_features": 2, "n_classes": 2}}))
    assert main(["fetch-data", "toy", "--dest", str(tmp_path / "c"), "--manifest", str(manifest)]) == 0
    assert (tmp_path / "c" / "toy.txt").exists()


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
