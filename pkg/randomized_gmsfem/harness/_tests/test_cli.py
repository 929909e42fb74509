import json

import numpy
import pytest

from ...errors import NumericalRankError
from .. import cli
from ..cli import main


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "config.json"
    mapping = small_config.to_dict()
    mapping["output_dir"] = str(tmp_path / "artifacts")
    path.write_text(json.dumps(mapping))
    return path


def test_offline_then_online(tmp_path, config_file, capsys):
    assert main(["offline", "--config", str(config_file)]) == 0
    artifacts = tmp_path / "artifacts"
    assert (artifacts / "manifest.json").exists()
    assert (artifacts / "reduced.npz").exists()
    assert (artifacts / "predictor-gpc.npz").exists()
    assert "spectral gap" in capsys.readouterr().out

    output = tmp_path / "online"
    code = main(
        [
            "online",
            "--artifacts",
            str(artifacts),
            "--mu",
            "0.6",
            "--mu",
            "1.2",
            "--compare",
            "--output",
            str(output),
            "--deterministic",
        ]
    )
    assert code == 0
    lines = (output / "errors.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 4
    assert (output / "solution-gpr-gmsfem-01.pgm").exists()
    assert (output / "run.json").exists()

    assert main(["sweep", "--artifacts", str(artifacts), "--lmax", "2"]) == 0
    assert len((artifacts / "sweep" / "sweep.csv").read_text().splitlines()) == 3
    assert main(["timing", "--artifacts", str(artifacts), "--reps", "1", "--l", "1,2"]) == 0
    assert (artifacts / "timing" / "timing.csv").exists()


def test_reference_command(tmp_path, config_file):
    output = tmp_path / "reference"
    assert main(["reference", "--config", str(config_file), "--output", str(output)]) == 0
    assert (output / "solution-gmsfem-00.txt").exists()


def test_configuration_errors(tmp_path, config_file):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nx": 7}))
    assert main(["offline", "--config", str(bad)]) == 2
    bad.write_text("{")
    assert main(["offline", "--config", str(bad)]) == 2
    assert main(["reference", "--config", str(config_file), "--mu", "-0.5"]) == 2


def test_missing_files(tmp_path):
    assert main(["online", "--artifacts", str(tmp_path / "nothing"), "--mu", "0.6"]) == 4
    assert main(["offline", "--config", str(tmp_path / "missing.json")]) == 4


@pytest.mark.parametrize(
    "error",
    [
        numpy.linalg.LinAlgError("not positive definite"),
        ValueError("need n_modes + 1 <= 4"),
        FloatingPointError("overflow"),
        NumericalRankError("rank deficient"),
    ],
)
def test_numerical_failures(monkeypatch, config_file, error):
    def fail(args):
        raise error

    monkeypatch.setitem(cli.COMMANDS, "reference", fail)
    assert main(["reference", "--config", str(config_file)]) == 3


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["online"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["online", "--artifacts", "x", "--mu", "a,b"])
