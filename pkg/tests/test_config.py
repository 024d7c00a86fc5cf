import json

import pytest

from peerqml.errors import ConfigError, ParseError
from peerqml.peerqml_config import RunConfig


def test_default_configuration():

    config = RunConfig()

    assert config.design.R == 100
    assert config.estimators == ["qmle", "cmle"]
    assert config.reps == 1000
    assert config.seed == 0
    assert config.table_format == "markdown"
    assert config.dump_reps is None


def test_chained_setters():

    config = (
        RunConfig(preset="student_t6")
        .load_reps(20)
        .load_seed(9)
        .load_estimators({"names": ["cv"], "cv_spec": "full_mean"})
    )

    assert config.design.error_dist == "student_t6"
    assert config.reps == 20
    assert config.seed == 9
    assert config.cv_spec == "full_mean"


def test_generate_and_load_conf_file(tmp_path):

    file_path = tmp_path / "config.json"
    config = RunConfig(preset="hetero_halves").load_reps(12)
    config.generate_conf(file_path)

    loaded = RunConfig(preset=None).load_conf_file(file_path)

    assert loaded.to_dict() == config.to_dict()


def test_load_conf_file_with_preset(tmp_path):

    file_path = tmp_path / "config.json"
    file_path.write_text(
        json.dumps(
            {
                "design": {"preset": "class_size", "R": 25},
                "fit": {"multistart": 2},
                "reps": 10,
                "output": {"format": "csv"},
            }
        )
    )

    config = RunConfig().load_conf_file(file_path)

    assert config.design.R == 25
    assert config.design.size_dist.lo == 13
    assert config.fit.multistart == 2
    assert config.table_format == "csv"


@pytest.mark.parametrize(
    "document,path",
    [
        ({"bogus": 1}, "bogus"),
        ({"reps": 0}, "reps"),
        ({"seed": -1}, "seed"),
        ({"estimators": {"names": ["ols"]}}, "estimators.names"),
        ({"output": {"format": "latex"}}, "output.format"),
        ({"fit": {"tolerance": 1}}, "fit.tolerance"),
        (
            {"design": {"size_dist": {"kind": "fixed", "mm": 3}}},
            "design.size_dist.mm",
        ),
    ],
)
def test_load_conf_file_invalid(tmp_path, document, path):

    file_path = tmp_path / "config.json"
    file_path.write_text(json.dumps(document))

    with pytest.raises(ConfigError) as err:
        RunConfig().load_conf_file(file_path)

    assert err.value.path == path


def test_load_conf_file_missing(tmp_path):

    with pytest.raises(FileNotFoundError):
        RunConfig().load_conf_file(tmp_path / "missing.json")


def test_load_conf_file_invalid_json(tmp_path):

    file_path = tmp_path / "config.json"
    file_path.write_text("{")

    with pytest.raises(ParseError):
        RunConfig().load_conf_file(file_path)
