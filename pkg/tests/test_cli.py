import pytest

from qreg.cli import main

CONFIG = """
[experiment]
seeds = 0,1
modes = none,quantization
noise_levels = 0.0,0.3

[data]
num_classes = 3
dim = 8
train_size = 240
test_size = 60
separation = 4.0

[training]
epochs = 3
batch_size = 32
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(CONFIG)
    return path


def test_train_subcommand(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["train", "--config", str(config_file), "--out", str(out)])
    assert code == 0
    assert sorted(p.name[:4] for p in out.iterdir()) == ["chec", "chec", "run_", "run_"]
    stdout = capsys.readouterr().out
    assert "seed=0" in stdout and "seed=1" in stdout


def test_quiet_suppresses_progress(config_file, tmp_path, capsys):
    code = main(["train", "--config", str(config_file), "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 0
    assert capsys.readouterr().out == ""


def test_seed_override_controls_output_files(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["train", "--config", str(config_file), "--out", str(out), "--seeds", "9"])
    assert code == 0
    names = [p.name for p in out.iterdir()]
    assert len(names) == 2
    assert all(name.endswith("_9.csv") or name.endswith("_9.qreg") for name in names)


def test_invalid_seed_override_exits_2(config_file, tmp_path, capsys):
    code = main(["train", "--config", str(config_file), "--out", str(tmp_path), "--seeds", "a,b"])
    assert code == 2
    assert "seeds" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "absent.ini")])
    assert code == 2
    assert "cannot read" in capsys.readouterr().err


def test_unwritable_output_dir_exits_2(config_file, capsys):
    code = main(["train", "--config", str(config_file), "--out", "/proc/absent/out"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_config_error_names_the_key(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[training]\nepohcs = 5\n")
    code = main(["train", "--config", str(path)])
    assert code == 2
    assert "training.epohcs" in capsys.readouterr().err


def test_noise_flag_validation(config_file, tmp_path, capsys):
    code = main(["train", "--config", str(config_file), "--out", str(tmp_path), "--noise", "1.5"])
    assert code == 2
    assert "noise" in capsys.readouterr().err


def test_mode_flag_selects_regularizer(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["train", "--config", str(config_file), "--out", str(out),
                 "--mode", "quantization", "--seeds", "0", "--quiet"])
    assert code == 0
    assert len(list(out.iterdir())) == 2


def test_noise_sweep_end_to_end_rerun_is_byte_identical(config_file, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["noise-sweep", "--config", str(config_file), "--out", str(out_a), "--quiet"]) == 0
    assert main(["noise-sweep", "--config", str(config_file), "--out", str(out_b), "--quiet"]) == 0
    assert (out_a / "sweep.csv").read_bytes() == (out_b / "sweep.csv").read_bytes()
    assert (out_a / "sweep_mean.csv").read_bytes() == (out_b / "sweep_mean.csv").read_bytes()


def test_default_output_dir_comes_from_config(tmp_path, monkeypatch):
    path = tmp_path / "exp.ini"
    path.write_text(CONFIG.replace("seeds = 0,1", "seeds = 0\noutput_dir = from_config"))
    monkeypatch.chdir(tmp_path)
    assert main(["train", "--config", str(path), "--quiet"]) == 0
    assert (tmp_path / "from_config").is_dir()
