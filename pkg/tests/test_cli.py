import json
import os

import numpy as np
import pytest

from fracwell.cli import ConfigError, main, parse_config, run


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


MINIMAL = "experiment = minimize\nd = 1\ns = 0.5\ntheta = 1\nn = 64\nseed = 7\n"


def test_parse_minimal_config(tmp_path):
    cfg = parse_config(_write(tmp_path, MINIMAL))
    assert cfg.experiment == "minimize"
    assert cfg.d == 1 and cfg.s == 0.5 and cfg.theta == 1.0
    assert cfg.n == [64] and cfg.seed == 7


def test_out_of_range_s_names_key(tmp_path):
    path = _write(tmp_path, MINIMAL.replace("s = 0.5", "s = 1.2"))
    with pytest.raises(ConfigError, match="s"):
        parse_config(path)


def test_unknown_key_named(tmp_path):
    path = _write(tmp_path, MINIMAL + "wobble = 3\n")
    with pytest.raises(ConfigError, match="wobble"):
        parse_config(path)


def test_flag_overrides_file(tmp_path):
    path = _write(tmp_path, MINIMAL)
    cfg = parse_config(path, overrides={"theta": "0"})
    assert cfg.theta == 0.0


def test_comment_and_list_parsing(tmp_path):
    text = "experiment = gap\nn = 32, 64 , 128  # volumes\ns = 0.75\n"
    cfg = parse_config(_write(tmp_path, text))
    assert cfg.n == [32, 64, 128]


def test_odd_n_rejected(tmp_path):
    path = _write(tmp_path, MINIMAL.replace("n = 64", "n = 63"))
    with pytest.raises(ConfigError, match="n"):
        parse_config(path)


def test_exit_code_2_on_bad_config(tmp_path, capsys):
    code = main(["minimize", "--set", "s=2.0", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "s" in capsys.readouterr().err


def test_minimize_flat_case_exit0(tmp_path):
    out = str(tmp_path / "o")
    code = main(["minimize", "--set", "theta=0", "--set", "n=16",
                 "--set", "v0=1", "--set", "s=0.5", "--out", out,
                 "--seed", "3"])
    assert code == 0
    with open(os.path.join(out, "minimize_1d_s0.5_theta0_n16_result.json")) as fh:
        res = json.load(fh)
    assert res["converged"] is True
    assert res["energy"]["total"] == 0.0
    # manifest written with config and seed
    with open(os.path.join(out, "minimize_1d_s0.5_theta0_n16.json")) as fh:
        man = json.load(fh)
    assert man["config"]["seed"] == 3
    assert man["status"] == "completed"


def test_no_silent_clobber(tmp_path, capsys):
    out = str(tmp_path / "o")
    args = ["minimize", "--set", "theta=0", "--set", "n=16", "--set", "v0=1",
            "--out", out]
    assert main(args) == 0
    assert main(args) == 2
    assert "exists" in capsys.readouterr().err
    assert main(args + ["--overwrite", "true"]) == 0


def test_failure_quota_exit1(tmp_path):
    out = str(tmp_path / "o")
    code = main(["minimize", "--set", "theta=1", "--set", "n=32",
                 "--set", "s=0.75", "--set", "max-iter=1", "--out", out,
                 "--seed", "1"])
    assert code == 1
    stem = "minimize_1d_s0.75_theta1_n32"
    with open(os.path.join(out, stem + ".json")) as fh:
        man = json.load(fh)
    assert man["failure_fraction"] > 0.1


def test_reproducible_across_jobs(tmp_path):
    base = ["variance", "--set", "n=16", "--set", "s=0.75",
            "--set", "realizations=30", "--set", "resamples=2",
            "--seed", "11"]
    outs = {}
    for jobs in (1, 2):
        out = str(tmp_path / f"j{jobs}")
        assert main(base + ["--out", out, "--jobs", str(jobs)]) == 0
        stem = "variance_1d_s0.75_theta1_n16"
        with open(os.path.join(out, stem + ".csv"), "rb") as fh:
            outs[jobs] = fh.read()
    assert outs[1] == outs[2]


def test_field_csv_roundtrip(tmp_path):
    out = str(tmp_path / "o")
    assert main(["extremal", "--set", "n=16", "--set", "s=0.5", "--out", out,
                 "--seed", "5"]) == 0
    path = os.path.join(out, "extremal_1d_s0.5_theta1_n16_plus.csv")
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data.shape[0] == 16
    # 17-significant-digit formatting round-trips values exactly
    with open(path) as fh:
        fh.readline()
        first = fh.readline().split(",")
    assert float(first[0]) == -7.5
