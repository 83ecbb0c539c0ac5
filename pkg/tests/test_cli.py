import json
import math
from pathlib import Path

import numpy as np
import pytest

from ghost_optics import __version__
from ghost_optics.cli import DEFAULT_PRESETS, create_parser, main
from ghost_optics.config.settings import setting
from ghost_optics.models.biphoton import CountsHistogram, DetectorPlane, Pattern
from ghost_optics.models.estimators import NOT_SUFFICIENT_CAVEAT
from ghost_optics.models.experiment import ExperimentMode
from ghost_optics.services.artifacts import load_pattern, read_json, write_json, write_pattern

from conftest import MM, PER_MM

GEOMETRY = """\
[geometry]
slit_width_a = 0.165 mm
slit_separation_d = 0.4 mm
a1 = 32.5 cm
a2 = 46.5 cm
b = {b}
f_imaging = 510 mm
f_collection = 500 mm

[biphoton]
sigma_sum = 2.5 1/mm
delta_theta = 2.6 mrad
"""


def write_cfg(tmp_path, body, b="142 cm"):
    path = tmp_path / "run.cfg"
    path.write_text(GEOMETRY.format(b=b) + body, encoding="utf-8")
    return str(path)


def value(report, *keys):
    node = report
    for key in keys:
        node = node[key]
    return node["value"]


def assert_reruns_identical(argv, out):
    """Run ``argv`` twice into sibling directories and compare every artifact byte for byte."""
    first, second = out / "first", out / "second"
    assert main([*argv, "--out", str(first), "--log-level", "warning"]) == 0
    assert main([*argv, "--out", str(second), "--log-level", "warning"]) == 0
    names = sorted(path.name for path in first.iterdir())
    assert names == sorted(path.name for path in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    return first


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """One interference and one image run of the published preset."""
    root = tmp_path_factory.mktemp("runs")
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(setting, "GHOST_OPTICS_BOOTSTRAP", 10)
        codes = {
            mode: main([mode, "--out", str(root / mode), "--log-level", "warning"])
            for mode in ("interference", "image")
        }
    return root, codes


class TestParser:
    """Command-line surface"""

    def test_modes(self):
        parser = create_parser()
        for mode in ("interference", "image", "classical", "report", "sweep"):
            args = parser.parse_args([mode, "--seed", "3", "--out", "x"])
            assert args.mode == mode and args.seed == 3 and args.out == "x"

    def test_mode_required(self):
        with pytest.raises(SystemExit):
            create_parser().parse_args([])

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            create_parser().parse_args(["--version"])
        assert excinfo.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_default_presets(self):
        assert DEFAULT_PRESETS[ExperimentMode.INTERFERENCE] == "paper-fig1"
        assert DEFAULT_PRESETS[ExperimentMode.CLASSICAL] == "paper-fig1-classical"

    def test_dependency_groups_hold_only_test_tools(self):
        text = (Path(__file__).resolve().parents[1] / "pyproject.toml").read_text(encoding="utf-8")
        groups = text.split("[dependency-groups]", 1)[1].split("\n[", 1)[0]
        for package in ("ipykernel", "ipywidgets", "jupyterlab_widgets"):
            assert package not in groups


class TestInterferenceRun:
    """interference mode end to end"""

    def test_artifacts(self, runs):
        root, codes = runs
        assert codes["interference"] == 0
        out = root / "interference"
        for name in ("pattern.csv", "counts.csv", "singles_d1.csv", "singles_d2.csv", "singles_d3.csv", "report.json"):
            assert (out / name).is_file(), name
        assert (out / "pattern.csv").read_text(encoding="utf-8").startswith("position_mm,rate\n")
        assert (out / "counts.csv").read_text(encoding="utf-8").startswith("position_mm,counts\n")

    def test_report(self, runs):
        root, _ = runs
        report = read_json(root / "interference" / "report.json")
        assert set(report) == {"inputs", "fits", "epr_report", "provenance"}
        assert report["provenance"]["seed"] == 0
        assert report["provenance"]["version"] == __version__
        assert len(report["provenance"]["config_hash"]) == 64
        assert 2.0 * PER_MM <= value(report, "fits", "dk_sum") <= 3.0 * PER_MM
        assert report["fits"]["epr_momentum_ok"] is True
        assert report["fits"]["dk_sum"]["unit"] == "1/m"
        assert report["inputs"]["geometry"]["a1"]["unit"] == "m"
        assert value(report, "inputs", "geometry", "a1") == pytest.approx(0.325)
        for detector in ("D2", "D3"):
            assert value(report, "fits", "singles", detector, "feature_contrast") < 0.05

    def test_report_fit_fields(self, runs):
        root, _ = runs
        fits = read_json(root / "interference" / "report.json")["fits"]["interference"]
        assert value(fits, "quoted_stderr") > 0
        assert value(fits, "blur_sigma") > 0
        assert 0 < value(fits, "visibility") <= value(fits, "visibility_corrected") < 1

    def test_rerun_is_byte_identical(self, runs, tmp_path, fast_bootstrap):
        root, _ = runs
        first = assert_reruns_identical(["interference"], tmp_path)
        # the module run used 10 resamples, so compare only bootstrap-free artifacts
        for name in ("pattern.csv", "counts.csv", "singles_d1.csv", "singles_d2.csv", "singles_d3.csv"):
            assert (first / name).read_bytes() == (root / "interference" / name).read_bytes(), name


class TestImageRun:
    """image mode end to end"""

    def test_position_uncertainty(self, runs):
        root, codes = runs
        assert codes["image"] == 0
        report = read_json(root / "image" / "report.json")
        assert 0.09 * MM <= value(report, "fits", "dx_diff") <= 0.13 * MM
        assert value(report, "fits", "image", "peak_distance") == pytest.approx(0.72 * MM, abs=5e-3 * MM)
        assert value(report, "fits", "image", "lens_residual") == pytest.approx(0.0047, abs=2e-4)
        assert report["fits"]["epr_position_ok"] is True

    def test_rerun_is_byte_identical(self, runs, tmp_path, fast_bootstrap):
        root, _ = runs
        assert main(["image", "--out", str(tmp_path), "--log-level", "warning"]) == 0
        # the module run used 10 resamples, so compare only bootstrap-free artifacts
        for name in ("pattern.csv", "counts.csv"):
            assert (tmp_path / name).read_bytes() == (root / "image" / name).read_bytes()
        again = tmp_path / "again"
        assert main(["image", "--out", str(again), "--log-level", "warning"]) == 0
        assert (again / "report.json").read_bytes() == (tmp_path / "report.json").read_bytes()

    def test_seed_override(self, tmp_path, fast_bootstrap):
        assert main(["image", "--seed", "5", "--out", str(tmp_path), "--log-level", "warning"]) == 0
        assert read_json(tmp_path / "report.json")["provenance"]["seed"] == 5

    def test_lens_equation_violation(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "", b="120 cm")
        assert main(["image", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "error"]) == 3
        assert "check_two_photon_lens_equation" in capsys.readouterr().err


class TestReportRun:
    """report mode"""

    def test_published_values(self, tmp_path):
        assert main(["report", "--out", str(tmp_path), "--log-level", "warning"]) == 0
        report = read_json(tmp_path / "report.json")["epr_report"]
        assert report["product"]["value"] == pytest.approx(0.275, rel=1e-9)
        assert report["product_caveat"] == NOT_SUFFICIENT_CAVEAT
        assert report["epr_momentum_ok"] and report["epr_position_ok"]
        assert report["classical_bounds"]["eq8_momentum_ok"] is False

    def test_chained_reports(self, runs, tmp_path):
        root, _ = runs
        body = (
            "\n[report]\n"
            f"interference_result = {root / 'interference' / 'report.json'}\n"
            f"image_result = {root / 'image' / 'report.json'}\n"
        )
        cfg = write_cfg(tmp_path, body)
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "warning"]) == 0
        report = read_json(tmp_path / "out" / "report.json")["epr_report"]
        interference = read_json(root / "interference" / "report.json")
        assert report["dk_sum"]["value"] == value(interference, "fits", "dk_sum")
        assert report["dx1"]["value"] == pytest.approx(0.165 * MM)
        assert report["product"]["value"] < 1

    def test_missing_result_file(self, tmp_path, capsys):
        body = f"\n[report]\ninterference_result = {tmp_path / 'absent' / 'report.json'}\n"
        cfg = write_cfg(tmp_path, body)
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "error"]) == 3
        assert "does not exist" in capsys.readouterr().err
        assert not (tmp_path / "out" / "report.json").exists()

    def test_unreadable_result_file(self, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{not json", encoding="utf-8")
        cfg = write_cfg(tmp_path, f"\n[report]\nimage_result = {broken}\n")
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "error"]) == 3

    def test_result_without_value(self, tmp_path):
        partial = write_json(tmp_path / "partial.json", {"fits": {}})
        cfg = write_cfg(tmp_path, f"\n[report]\ninterference_result = {partial}\n")
        assert main(["report", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "error"]) == 3


class TestClassicalRuns:
    """classical and sweep modes"""

    def test_classical_preset(self, tmp_path):
        assert main(["classical", "--out", str(tmp_path), "--log-level", "warning"]) == 0
        fits = read_json(tmp_path / "report.json")["fits"]
        assert fits["classical_bounds"]["eq8_momentum_ok"] is True
        assert fits["classical_bounds"]["eq8_position_ok"] is True
        assert fits["classical_bounds"]["eq3_violated_as_expected"] is True
        assert fits["pattern_fit"]["visibility"]["value"] < 0.08
        assert (tmp_path / "pattern.csv").is_file()

    def test_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path, "\n[sweep]\nn_models = 5\nn_samples = 2000\n")
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "warning"]) == 0
        lines = (tmp_path / "out" / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 6
        assert "eq8_momentum_ok,eq8_position_ok,eq3_violated_as_expected" in lines[0]
        summary = read_json(tmp_path / "out" / "report.json")["fits"]["sweep"]
        assert summary["eq8_momentum_ok"]["value"] == 5
        assert summary["product_ok"]["value"] == 5

    def test_classical_rerun_is_byte_identical(self, tmp_path, fast_bootstrap):
        first = assert_reruns_identical(["classical"], tmp_path)
        assert (first / "pattern.csv").is_file() and (first / "report.json").is_file()

    def test_sweep_rerun_is_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, "\n[sweep]\nn_models = 5\nn_samples = 2000\n")
        first = assert_reruns_identical(["sweep", "--config", cfg], tmp_path)
        assert (first / "sweep.csv").is_file()


class TestExitCodes:
    """Failure statuses"""

    def test_parse_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "\n[counts]\nseed = 1\ntotal_counts = lots\n")
        assert main(["interference", "--config", cfg, "--out", str(tmp_path / "out")]) == 3
        assert "line" in capsys.readouterr().err

    def test_under_resolved_grid(self, tmp_path):
        cfg = write_cfg(tmp_path, "\n[grid]\nn = 256\nextent = 20 mm\n")
        assert main(["interference", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "error"]) == 3

    def test_too_few_fringes(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "\n[interference]\nwindow = 1 mm\n")
        assert main(["interference", "--config", cfg, "--out", str(tmp_path / "out"), "--log-level", "error"]) == 2
        assert "FIT_ERROR" in capsys.readouterr().err
        assert not (tmp_path / "out" / "report.json").exists()

    def test_missing_preset(self, tmp_path):
        assert main(["report", "--config", "nonexistent", "--out", str(tmp_path)]) == 3


class TestArtifacts:
    """CSV and JSON writers"""

    def test_pattern_round_trip(self, tmp_path):
        x = np.linspace(-2e-3, 2e-3, 101)
        pattern = Pattern(positions=x, rates=np.exp(-(x / 1e-3) ** 2), label=DetectorPlane.IMAGE)
        path = write_pattern(tmp_path / "p.csv", pattern)
        assert b"\r" not in path.read_bytes()
        loaded = load_pattern(path, label=DetectorPlane.IMAGE)
        np.testing.assert_allclose(loaded.positions, pattern.positions, rtol=1e-15, atol=1e-20)
        np.testing.assert_array_equal(loaded.rates, pattern.rates)

    def test_counts_round_trip(self, tmp_path):
        counts = CountsHistogram(positions=[-1e-3, 0.0, 1e-3], counts=[3, 0, 12], seed=9)
        loaded = load_pattern(write_pattern(tmp_path / "c.csv", counts), seed=9)
        assert isinstance(loaded, CountsHistogram)
        np.testing.assert_array_equal(loaded.counts, counts.counts)

    def test_non_finite_json(self, tmp_path):
        path = write_json(tmp_path / "r.json", {"b": math.inf, "a": [1.5, math.nan]})
        text = path.read_text(encoding="utf-8")
        assert json.loads(text) == {"a": [1.5, None], "b": None}
        assert text.index('"a"') < text.index('"b"')


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
