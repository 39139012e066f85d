import yaml

from synthlidar.cli import main
from synthlidar.kitti_io import KittiFrameSet
from synthlidar.presets import preset_path


def _coarse_preset_file(tmp_path, name="dual"):
    data = yaml.safe_load(open(preset_path(name)))
    data["sensor"]["azimuth_step_deg"] = 0.72
    path = tmp_path / f"{name}_coarse.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _scene_config_file(tmp_path):
    path = tmp_path / "scene.yaml"
    path.write_text(yaml.safe_dump({"vehicle_count_range": [2, 3],
                                    "prop_count_range": [0, 1],
                                    "building_count_range": [2, 2]}))
    return str(path)


def test_full_cli_flow(tmp_path, capsys):
    preset = _coarse_preset_file(tmp_path)
    dense = tmp_path / "dense"
    kitti = tmp_path / "kitti"
    assert main(["generate", "--out", str(dense), "--frames", "2", "--seed", "4",
                 "--preset", preset, "--config", _scene_config_file(tmp_path)]) == 0
    assert (dense / "dense" / "000001.df").exists()

    assert main(["process", "--dense", str(dense), "--out", str(kitti),
                 "--preset", preset, "--seed", "4"]) == 0
    fs = KittiFrameSet(kitti)
    fs.validate()

    assert main(["evaluate", "--gt", str(kitti / "label_2"),
                 "--det", str(kitti / "label_2")]) == 1  # GT labels carry no scores
    err = capsys.readouterr().err
    assert "score" in err

    assert main(["stats", "--root", str(kitti), "--out", str(tmp_path / "stats")]) == 0
    assert (tmp_path / "stats" / "summary.csv").exists()
    out = capsys.readouterr().out
    assert "labels:" in out


def test_unknown_preset_exit_code(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--frames", "1",
                 "--preset", "bogus"]) == 2
    assert "valid presets" in capsys.readouterr().err


def test_missing_input_exit_code(tmp_path, capsys):
    assert main(["process", "--dense", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "out"), "--preset", "dual"]) == 1
    assert "error" in capsys.readouterr().err
