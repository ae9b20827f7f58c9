import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cohsim.cli import ConfigError, main, parse_angle, parse_angles
from cohsim.mitigation import ConfusionModel, apply_readout_noise
from cohsim.plotting import read_artifact, render
from cohsim.sim import OutcomeHistogram

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    try:
        rc = main([str(a) for a in argv])
    except SystemExit as exc:  # argparse-level rejections
        rc = exc.code
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj))
    return path


class TestParseAngle:
    @pytest.mark.parametrize(
        "text,value",
        [("pi/2", math.pi / 2), ("-3*pi/4", -3 * math.pi / 4), ("2pi", 2 * math.pi), ("pi", math.pi),
         ("0.25", 0.25), ("-1e-1", -0.1), ("π/4", math.pi / 4), (1.5, 1.5), (" pi / 8 ", math.pi / 8)],
    )
    def test_values(self, text, value):
        assert parse_angle(text) == pytest.approx(value)

    @pytest.mark.parametrize("text", ["", "pie", "pi/", "1/2/3", "abc", "nan", "inf"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_angle(text, "--phi")

    def test_lists(self):
        assert parse_angles("pi, pi/2,pi/4", "--phi") == pytest.approx([math.pi, math.pi / 2, math.pi / 4])
        assert parse_angles(["pi", 0.5], "--phi") == pytest.approx([math.pi, 0.5])


class TestExamples:
    def test_observe_projected(self, capsys):
        rc, out, err = run(capsys, "observe", "--state", "projected", "--n", 10)
        assert rc == 0
        assert "c2 = 0.3 " in err
        doc = json.loads(out)
        assert doc["data"]["c2"] == pytest.approx(0.3, abs=1e-12)
        assert doc["metadata"]["settings"]["state"] == "projected"

    def test_sweep_table_curve(self, capsys):
        rc, out, err = run(capsys, "sweep", "--n", 4, "--na", 1, "--phi", "pi/2", "--postselect", "--exact")
        assert rc == 0
        curve = [float(x) for x in err.split("[")[1].split("]")[0].split(",")]
        assert len(curve) == 5
        assert curve[-1] == pytest.approx(0.349, abs=0.005)
        body = out.split("\n", 1)[1]
        assert body.startswith("k,C2,Sx")

    def test_compile_golden(self, capsys):
        rc, out, err = run(capsys, "compile", "--n", 4, "--na", 1)
        assert rc == 0
        assert out == (DATA / "five_qubit_s_theta.quil").read_text()
        assert "two-qubit gates: 6" in err

    def test_compile_json(self, capsys):
        rc, out, _ = run(capsys, "compile", "--n", 6, "--na", 2, "--format", "json")
        assert rc == 0
        doc = json.loads(out)
        two_q = [g for g in doc["data"]["circuit"]["gates"] if len(g["qubits"]) == 2]
        assert len(two_q) <= 2 * (6 * 2 - 1)


class TestOutputs:
    def test_out_file_and_summary(self, capsys, tmp_path):
        path = tmp_path / "fcs.csv"
        rc, out, _ = run(capsys, "fcs", "--state", "projected", "--n", 4, "--points", 8, "--out", path)
        assert rc == 0 and "fcs: 8 angles" in out
        meta, body = read_artifact(path)
        assert meta["kind"] == "fcs" and meta["settings"]["points"] == 8
        assert body.startswith("theta,value,prob")

    def test_prepare_then_observe(self, capsys, tmp_path):
        state = tmp_path / "state.json"
        assert run(capsys, "prepare", "--state", "dephased", "--n", 4, "--out", state)[0] == 0
        rc, out, _ = run(capsys, "observe", "--input", state)
        assert rc == 0
        assert json.loads(out)["data"]["c2"] == pytest.approx(5 / 16)

    @pytest.mark.parametrize(
        "argv",
        [
            ("sweep", "--n", 4, "--na", 1, "--phi", "pi/2", "--shots", 300, "--seed", 5),
            ("fcs", "--state", "dephased", "--n", 4, "--points", 6, "--shots", 200, "--seed", 2),
            ("prepare", "--state", "noisy", "--n", 3, "--seed", 1),
            ("wigner", "--state", "coherent", "--n", 3, "--step", 0.5),
        ],
    )
    def test_byte_identical_reruns(self, capsys, tmp_path, argv):
        cfg = write_json(tmp_path / "cfg.json", {"theta": "pi/8"})
        a, b = tmp_path / "a.out", tmp_path / "b.out"
        assert run(capsys, *argv, "--config", cfg, "--out", a)[0] == 0
        assert run(capsys, *argv, "--config", cfg, "--out", b)[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_metadata_records_defaults(self, capsys):
        _, out, _ = run(capsys, "fcs", "--state", "coherent", "--n", 2, "--points", 4)
        meta = json.loads(out.splitlines()[0][2:])
        assert meta["settings"]["seed"] == 0
        assert meta["settings"]["shots"] is None
        assert meta["version"]


class TestConfig:
    def test_flags_override_file(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"state": "projected", "n": 4})
        _, out, _ = run(capsys, "observe", "--config", cfg)
        assert json.loads(out)["data"]["c2"] == pytest.approx(6 / 16)
        _, out, _ = run(capsys, "observe", "--config", cfg, "--n", 6)
        assert json.loads(out)["data"]["c2"] == pytest.approx(8 / 24)
        _, out, _ = run(capsys, "observe", "--config", cfg, "--state", "coherent")
        assert json.loads(out)["data"]["c2"] == pytest.approx(5 / 16)

    def test_config_uses_dashes_or_underscores(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"n": 4, "na": 1, "phi": "pi/2", "mitigation-order": "after-postselect"})
        rc, out, _ = run(capsys, "sweep", "--config", cfg, "--exact", "--format", "json")
        assert rc == 0
        assert json.loads(out)["metadata"]["settings"]["mitigation_order"] == "after-postselect"

    @pytest.mark.parametrize(
        "argv,field",
        [
            (("observe", "--state", "coherent", "--n", -2), "--n"),
            (("observe", "--state", "projected", "--n", 3), "--n"),
            (("observe", "--state", "coherent", "--n", 2, "--theta", "pie"), "--theta"),
            (("observe", "--state", "coherent", "--n", 2, "--thetas", "0,1,2"), "--thetas"),
            (("sweep", "--n", 4, "--phi", "pi,pi/3"), "--phi"),
            (("sweep", "--n", 4, "--na", 0), "--na"),
            (("sweep", "--n", 1), "--n"),
            (("compile", "--n", 1, "--na", 1), "--n"),
            (("sweep", "--n", 4, "--shots", 10, "--exact"), "--shots"),
            (("sweep", "--n", 4, "--mitigate"), "--mitigate"),
            (("fcs", "--state", "coherent", "--n", 2, "--points", 0), "--points"),
            (("wigner", "--state", "coherent", "--n", 2, "--sigma", 0), "--sigma"),
            (("observe", "--state", "coherent", "--n", 2, "--format", "csv"), "--format"),
            (("calibrate",), "--noise"),
            (("mitigate", "--model", "m.json"), "--input"),
        ],
    )
    def test_bad_field_named(self, capsys, argv, field):
        rc, _, err = run(capsys, *argv)
        assert rc == 2
        assert "error:" in err and field in err

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"n": 2, "colour": "red"})
        rc, _, err = run(capsys, "observe", "--config", cfg)
        assert rc == 2 and "'colour'" in err

    def test_missing_config_file(self, capsys, tmp_path):
        rc, _, err = run(capsys, "observe", "--config", tmp_path / "none.json")
        assert rc == 2 and "--config" in err

    def test_bad_noise_model_size(self, capsys, tmp_path):
        noise = write_json(tmp_path / "n.json", ConfusionModel.uniform(3, 0.9, 0.9).to_dict())
        rc, _, err = run(capsys, "sweep", "--n", 4, "--na", 1, "--noise", noise)
        assert rc == 2 and "--noise" in err


class TestNoiseCommands:
    def test_calibrate(self, capsys, tmp_path):
        truth = ConfusionModel([0.95, 0.9, 0.97], [0.9, 0.85, 0.93])
        noise = write_json(tmp_path / "n.json", truth.to_dict())
        rc, out, err = run(capsys, "calibrate", "--noise", noise, "--shots", 100_000, "--seed", 3)
        assert rc == 0
        est = ConfusionModel.from_json(out)
        assert np.abs(np.array(est.p00) - truth.p00).max() <= 0.01
        assert "max error" in err

    def test_mitigate_round_trip(self, capsys, tmp_path):
        model = ConfusionModel([0.95, 0.9], [0.9, 0.85])
        ideal = OutcomeHistogram(2, [0.4, 0.1, 0.2, 0.3])
        noisy = apply_readout_noise(ideal, model)
        hist = write_json(tmp_path / "h.json", noisy.to_dict())
        mpath = write_json(tmp_path / "m.json", model.to_dict())
        rc, out, _ = run(capsys, "mitigate", "--input", hist, "--model", mpath)
        assert rc == 0
        back = OutcomeHistogram.from_dict(json.loads(out)["data"])
        assert back.mitigated
        assert np.allclose(back.probs, ideal.probs, atol=1e-12)

    def test_sweep_with_calibrated_mitigation(self, capsys, tmp_path):
        noise = write_json(tmp_path / "n.json", ConfusionModel.uniform(5, 0.94, 0.9).to_dict())
        rc, out, _ = run(capsys, "sweep", "--n", 4, "--na", 1, "--phi", "pi/2", "--noise", noise,
                         "--mitigate", "--calibration-shots", 20_000, "--format", "json")
        assert rc == 0
        doc = json.loads(out)
        assert doc["metadata"]["settings"]["mitigation"] is not None
        assert doc["data"][-1]["c2"] == pytest.approx(0.35, abs=0.01)


class TestPlotting:
    @pytest.mark.parametrize(
        "argv,suffix",
        [
            (("sweep", "--n", 4, "--na", 1, "--phi", "pi/2", "--exact"), "csv"),
            (("sweep", "--n", 4, "--keep-all", "--exact", "--format", "json"), "json"),
            (("fcs", "--state", "projected", "--n", 4, "--points", 16), "csv"),
            (("fcs", "--state", "dephased", "--n", 4, "--points", 16, "--format", "json"), "json"),
            (("wigner", "--state", "coherent", "--n", 4), "csv"),
        ],
    )
    def test_artifacts_render(self, capsys, tmp_path, argv, suffix):
        pytest.importorskip("matplotlib")
        data = tmp_path / f"artifact.{suffix}"
        assert run(capsys, *argv, "--out", data)[0] == 0
        png = tmp_path / "figure.png"
        assert render(data, png) == argv[0]
        assert png.read_bytes()[:4] == b"\x89PNG"

    def test_unplottable_artifact(self, capsys, tmp_path):
        data = tmp_path / "state.json"
        run(capsys, "prepare", "--state", "coherent", "--n", 2, "--out", data)
        with pytest.raises(ValueError, match="kind"):
            render(data, tmp_path / "x.png")

    def test_cli_never_imports_matplotlib(self):
        code = "import sys, cohsim.cli; cohsim.cli.main(['observe', '--n', '2']); print('matplotlib' in sys.modules)"
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
        assert out.strip().splitlines()[-1] == "False"


@pytest.mark.skipif(shutil.which("cohsim") is None, reason="console scripts not installed")
def test_console_scripts(tmp_path):
    data = tmp_path / "sweep.csv"
    res = subprocess.run(["cohsim", "sweep", "--n", "2", "--exact", "--out", str(data)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run(["cohsim-plot", str(data)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert data.with_suffix(".png").exists()
