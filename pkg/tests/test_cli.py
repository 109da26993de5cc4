import csv
import io
import pathlib

import numpy as np
import pytest

from gemst import cli
from gemst.cifar import write_batch

TOY = str(pathlib.Path(__file__).resolve().parents[1] / "configs" / "cifar_toy.cfg")


@pytest.fixture
def weights(tmp_path):
    path = tmp_path / "w.gstw"
    assert cli.main(["init", "--config", TOY, "--seed", "42", "--out", str(path)]) == 0
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_init_is_deterministic(tmp_path, weights):
    other = tmp_path / "w2.gstw"
    assert run("init", "--config", TOY, "--seed", 42, "--out", other) == 0
    assert other.read_bytes() == weights.read_bytes()


def test_run_writes_identical_logits(tmp_path, weights, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("run", "--config", TOY, "--weights", weights, "--input-seed", 3, "--batch", 2, "--out", a) == 0
    assert run("run", "--config", TOY, "--weights", weights, "--input-seed", 3, "--batch", 2, "--threads", 2,
               "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(io.StringIO(a.read_text())))
    assert rows[0] == ["item"] + [f"class_{k}" for k in range(10)] and len(rows) == 3
    assert "top5" in capsys.readouterr().out


def test_run_on_cifar_batch(tmp_path, weights, capsys):
    rng = np.random.default_rng(0)
    write_batch(tmp_path / "test_batch.bin", [3, 7], rng.integers(0, 256, (2, 32, 32, 3)))
    out = tmp_path / "l.csv"
    assert run("run", "--config", TOY, "--weights", weights, "--cifar", tmp_path, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and len(lines[1].split(",")) == 11
    assert "label=7" in capsys.readouterr().out


def test_run_on_npy(tmp_path, weights):
    np.save(tmp_path / "x.npy", np.zeros((32, 32, 3)))
    assert run("run", "--config", TOY, "--weights", weights, "--input", tmp_path / "x.npy") == 0


def test_profile_csv_deterministic(tmp_path, weights):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("profile", "--config", TOY, "--weights", weights, "--fill", 1.0, "--batch", 2, "--out", a) == 0
    assert run("profile", "--config", TOY, "--weights", weights, "--fill", 1.0, "--batch", 2, "--threads", 8,
               "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    assert {r["module_kind"] for r in rows} >= {"stem", "sconv", "gw_ssa", "downsample", "header"}
    for r in rows:
        assert int(r["sops"]) <= int(r["sop_upper_bound"])
        if r["module_kind"] not in ("stem", "header"):
            assert int(r["sop_upper_bound"]) > 0


def test_exit_codes(tmp_path, weights, capsys):
    assert run("run", "--config", TOY, "--weights", tmp_path / "missing.gstw") == cli.EXIT_WEIGHTS
    assert "not found" in capsys.readouterr().err
    (tmp_path / "bad.gstw").write_bytes(b"nope")
    assert run("run", "--config", TOY, "--weights", tmp_path / "bad.gstw") == cli.EXIT_WEIGHTS
    assert run("run", "--preset", "small", "--weights", weights) == cli.EXIT_WEIGHTS  # config mismatch
    (tmp_path / "bad.cfg").write_text("nonsense = 1\n")
    assert run("params", "--config", tmp_path / "bad.cfg") == cli.EXIT_CONFIG
    assert run("params") == cli.EXIT_CONFIG
    (tmp_path / "x.npy").write_bytes(b"junk")
    assert run("run", "--config", TOY, "--weights", weights, "--input", tmp_path / "x.npy") == cli.EXIT_INPUT
    np.save(tmp_path / "y.npy", np.zeros((8, 8, 3)))
    assert run("run", "--config", TOY, "--weights", weights, "--input", tmp_path / "y.npy") == cli.EXIT_INPUT
    assert run("run", "--config", TOY, "--weights", weights, "--cifar", tmp_path / "none.bin") == cli.EXIT_INPUT


def test_thread_env(monkeypatch, weights):
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    assert run("run", "--config", TOY, "--weights", weights) == cli.EXIT_CONFIG
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert run("run", "--config", TOY, "--weights", weights) == 0


def test_bad_preset_is_usage_error():
    with pytest.raises(SystemExit) as e:
        run("params", "--preset", "tiny")
    assert e.value.code == 2


def test_params_small(capsys):
    assert run("params", "--preset", "small") == 0
    total = capsys.readouterr().out.strip().splitlines()[-1]
    n = int(total.split()[1].replace(",", ""))
    assert 4.8e6 <= n <= 5.9e6


def test_verify_filter_and_fault(capsys):
    assert run("verify", "--filter", "tensor_core,neuron") == 0
    out = capsys.readouterr().out
    assert "tensor_core.grouping_partitions" in out and "exp_coding" not in out
    assert run("verify", "--filter", "exp_coding.quantizer_equivalence", "--inject-fault") == cli.EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out
    assert run("verify", "--filter", "nothing") == cli.EXIT_VERIFY
