"""End-to-end CLI tests: synth -> train -> eval -> adjust, all in-process
through main(argv), plus the error paths that should exit with a clear
message instead of a traceback.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from photoadjust.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synth + train, shared by the read-only tests below."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run_dir = root / "run"
    assert (
        main(
            ["synth", "--out", str(data), "--count", "6", "--k", "2", "--size", "32", "--seed", "1"]
        )
        == 0
    )
    assert (
        main(
            [
                "train",
                "--data", str(data),
                "--out", str(run_dir),
                "--variant", "Huber+S",
                "--epochs", "1",
                "--canvas", "32",
                "--pixels-per-image", "64",
                "--batch-size", "4",
                "--seed", "0",
            ]
        )
        == 0
    )
    return root


class TestSynth:
    def test_writes_dataset_layout(self, tmp_path, capsys):
        out = tmp_path / "ds"
        code, text = run(
            ["synth", "--out", str(out), "--count", "4", "--k", "2", "--size", "32"], capsys
        )
        assert code == 0
        assert "4 synthetic examples" in text
        assert len(list((out / "input").glob("*.png"))) == 4
        targets = list((out / "target").glob("*/*.png"))
        assert len(targets) == 4
        assert len(list((out / "parse").glob("*.png"))) == 4


class TestTrain:
    def test_artifacts_exist(self, workspace):
        assert (workspace / "run" / "model.ckpt").exists()
        assert (workspace / "run" / "final.ckpt").exists()
        assert (workspace / "run" / "train_log.csv").exists()

    def test_flag_overrides_config_file(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "variant = Huber+S\n"
            "epochs = 5\n"
            "canvas = 32\n"
            "pixels_per_image = 64\n"
            "batch_size = 4\n"
        )
        code, text = run(
            [
                "train",
                "--data", str(workspace / "data"),
                "--out", str(tmp_path / "run"),
                "--config", str(cfg),
                "--epochs", "1",
            ],
            capsys,
        )
        assert code == 0
        # 6 images, 1 held out, batch 4 -> 2 steps per epoch; 1 epoch wins
        assert "step 2" in text

    def test_missing_data_dir(self, tmp_path):
        with pytest.raises(SystemExit, match="dataset directory not found"):
            main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])

    def test_missing_config_file(self, workspace, tmp_path):
        with pytest.raises(SystemExit, match="config file not found"):
            main(
                [
                    "train",
                    "--data", str(workspace / "data"),
                    "--out", str(tmp_path / "o"),
                    "--config", str(tmp_path / "nope.cfg"),
                ]
            )

    def test_bad_config_value(self, workspace, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("mystery_knob = 3\n")
        with pytest.raises(SystemExit, match="bad configuration"):
            main(
                [
                    "train",
                    "--data", str(workspace / "data"),
                    "--out", str(tmp_path / "o"),
                    "--config", str(cfg),
                ]
            )


class TestEval:
    def test_prints_table_with_baseline(self, workspace, capsys):
        code, text = run(
            ["eval", "--data", str(workspace / "data"), str(workspace / "run" / "model.ckpt")],
            capsys,
        )
        assert code == 0
        lines = text.strip().split("\n")
        assert lines[0].startswith("variant")
        assert lines[1].startswith("Input")
        assert any(line.startswith("Huber+S") for line in lines)

    def test_writes_csv_and_json(self, workspace, tmp_path, capsys):
        csv_path = tmp_path / "table.csv"
        json_path = tmp_path / "reports.json"
        code, _ = run(
            [
                "eval",
                "--data", str(workspace / "data"),
                "--csv", str(csv_path),
                "--json", str(json_path),
                str(workspace / "run" / "model.ckpt"),
            ],
            capsys,
        )
        assert code == 0
        assert csv_path.read_text().startswith("variant")
        reports = json.loads(json_path.read_text())
        assert reports[0]["variant"] == "Huber+S"
        assert "effects" in reports[0]

    def test_missing_checkpoint(self, workspace):
        with pytest.raises(SystemExit, match="checkpoint not found"):
            main(["eval", "--data", str(workspace / "data"), str(workspace / "missing.ckpt")])


class TestAdjust:
    def _first_input(self, workspace):
        return sorted((workspace / "data" / "input").glob("*.png"))[0]

    def test_hard_adjust_and_map_round_trip(self, workspace, tmp_path, capsys):
        """adjust, save the extracted map, re-adjust with it substituted:
        the outputs must be byte-identical."""
        img = self._first_input(workspace)
        ckpt = workspace / "run" / "model.ckpt"
        out1 = tmp_path / "a.png"
        map_path = tmp_path / "m.json"
        code, text = run(
            [
                "adjust",
                "--checkpoint", str(ckpt),
                "--image", str(img),
                "--out", str(out1),
                "--save-map", str(map_path),
            ],
            capsys,
        )
        assert code == 0 and out1.exists() and map_path.exists()

        out2 = tmp_path / "b.png"
        code, _ = run(
            [
                "adjust",
                "--checkpoint", str(ckpt),
                "--image", str(img),
                "--out", str(out2),
                "--map", str(map_path),
            ],
            capsys,
        )
        assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_png_map_form(self, workspace, tmp_path, capsys):
        img = self._first_input(workspace)
        ckpt = workspace / "run" / "model.ckpt"
        map_path = tmp_path / "m.png"
        code, _ = run(
            [
                "adjust",
                "--checkpoint", str(ckpt),
                "--image", str(img),
                "--out", str(tmp_path / "o.png"),
                "--save-map", str(map_path),
            ],
            capsys,
        )
        assert code == 0
        from photoadjust.adjustmap import load_map

        m = load_map(map_path)
        assert m.shape == (32, 32)

    def test_soft_mode(self, workspace, tmp_path, capsys):
        img = self._first_input(workspace)
        code, _ = run(
            [
                "adjust",
                "--checkpoint", str(workspace / "run" / "model.ckpt"),
                "--image", str(img),
                "--out", str(tmp_path / "soft.png"),
                "--mode", "soft",
            ],
            capsys,
        )
        assert code == 0

    def test_missing_image(self, workspace, tmp_path):
        with pytest.raises(SystemExit, match="image not found"):
            main(
                [
                    "adjust",
                    "--checkpoint", str(workspace / "run" / "model.ckpt"),
                    "--image", str(tmp_path / "nope.png"),
                    "--out", str(tmp_path / "o.png"),
                ]
            )

    def test_missing_map(self, workspace, tmp_path):
        with pytest.raises(SystemExit, match="map not found"):
            main(
                [
                    "adjust",
                    "--checkpoint", str(workspace / "run" / "model.ckpt"),
                    "--image", str(self._first_input(workspace)),
                    "--out", str(tmp_path / "o.png"),
                    "--map", str(tmp_path / "nope.json"),
                ]
            )

    def test_map_shape_mismatch(self, workspace, tmp_path):
        from photoadjust.adjustmap import save_map

        bad = tmp_path / "bad.json"
        save_map(bad, np.zeros((4, 4), dtype=np.int64), 2)
        with pytest.raises(SystemExit, match="does not match"):
            main(
                [
                    "adjust",
                    "--checkpoint", str(workspace / "run" / "model.ckpt"),
                    "--image", str(self._first_input(workspace)),
                    "--out", str(tmp_path / "o.png"),
                    "--map", str(bad),
                ]
            )


class TestServe:
    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(SystemExit, match="checkpoint not found"):
            main(["serve", "--checkpoint", str(tmp_path / "nope.ckpt")])
