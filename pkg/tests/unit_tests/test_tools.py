"""Unit tests for surgical-lc tools."""

import pytest
from dotenv import load_dotenv
from langchain_tests.unit_tests import ToolsUnitTests

# Load environment variables from .env file
load_dotenv()

from surgical_lc.tools import (
    FitWeibullWeeTool,
    LcCusumTool,
    SimulateOperatingCharacteristicsTool,
    TrackLearningCurveTool,
)
from tests.unit_tests.mocks import STUDY_STANDARD, simulate_cases, write_cases, write_csv


@pytest.fixture
def cases_path(tmp_path):
    return str(write_cases(tmp_path / "trainee.csv", simulate_cases(STUDY_STANDARD, 40, seed=61)))


class TestFitWeibullWeeToolUnit(ToolsUnitTests):
    """Unit tests for FitWeibullWeeTool."""

    @property
    def tool_constructor(self):
        return FitWeibullWeeTool

    @property
    def tool_constructor_params(self):
        return {}

    @property
    def tool_invoke_params_example(self):
        return {"cases_path": "trainee.csv", "smoothing": 0.05}


class TestFitWeibullWeeToolCustom:
    """Custom unit tests for FitWeibullWeeTool."""

    def test_invoke(self, cases_path):
        """Test a weighted fit."""
        result = FitWeibullWeeTool().invoke({"cases_path": cases_path})
        assert result["converged"]
        assert result["n_cases"] == 40
        assert [p["name"] for p in result["parameters"]] == ["gamma", "eta", "beta1"]
        assert all(p["ase"] > 0 for p in result["parameters"])

    def test_invoke_unweighted(self, cases_path):
        """Test an unweighted fit."""
        result = FitWeibullWeeTool().invoke({"cases_path": cases_path, "unweighted": True})
        assert result["lambda"] is None

    def test_missing_file(self, tmp_path):
        """Test a path that does not exist."""
        with pytest.raises(FileNotFoundError):
            FitWeibullWeeTool().invoke({"cases_path": str(tmp_path / "absent.csv")})

    def test_directory_path(self, tmp_path):
        """Test a directory instead of a file."""
        with pytest.raises(ValueError):
            FitWeibullWeeTool().invoke({"cases_path": str(tmp_path)})

    def test_invalid_rows(self, tmp_path):
        """Test that row errors reach the caller."""
        path = write_csv(tmp_path / "bad.csv", "case,y,x1\n1,3.2,27\n2,0,31\n")
        with pytest.raises(ValueError, match="row 2: y must be positive"):
            FitWeibullWeeTool().invoke({"cases_path": str(path)})

    def test_smoothing_range(self, cases_path):
        """Test schema validation of the smoothing constant."""
        with pytest.raises(Exception):
            FitWeibullWeeTool().invoke({"cases_path": cases_path, "smoothing": 1.5})


class TestTrackLearningCurveToolUnit(ToolsUnitTests):
    """Unit tests for TrackLearningCurveTool."""

    @property
    def tool_constructor(self):
        return TrackLearningCurveTool

    @property
    def tool_constructor_params(self):
        return {"output_dir": "."}

    @property
    def tool_invoke_params_example(self):
        return {
            "cases_path": "trainee.csv",
            "standard_gamma": 0.2,
            "standard_eta": 2.0,
            "standard_beta": [-0.05],
            "x_eval": [27.0],
        }

    @property
    def init_from_env_params(self):
        return (
            {"SURGICAL_LC_OUTPUT_DIR": "plots"},
            {},
            {"output_dir": "plots"},
        )


class TestTrackLearningCurveToolCustom:
    """Custom unit tests for TrackLearningCurveTool."""

    def test_invoke(self, cases_path):
        """Test the per-case series."""
        tool = TrackLearningCurveTool(output_dir=".")
        result = tool.invoke(
            {
                "cases_path": cases_path,
                "standard_gamma": 0.2,
                "standard_eta": 2.0,
                "standard_beta": [-0.05],
                "x_eval": [27.0],
            }
        )
        assert result["x_eval"] == [27.0]
        assert result["kind"] == "PN"
        assert len(result["points"]) == 40
        assert result["points"][0]["fit_ok"] == 0
        assert result["points"][0]["cpm"] is None
        assert 0.0 <= result["points"][-1]["cpm"] <= 1.0
        assert "plot_path" not in result

    def test_invoke_with_plot(self, cases_path, tmp_path):
        """Test that the plot lands in the output directory."""
        tool = TrackLearningCurveTool(output_dir=str(tmp_path / "plots"))
        result = tool.invoke(
            {
                "cases_path": cases_path,
                "standard_gamma": 0.2,
                "standard_eta": 2.0,
                "standard_beta": [-0.05],
                "plot": True,
            }
        )
        assert result["plot_path"].endswith("track.svg")
        assert 'id="cutoff-line"' in (tmp_path / "plots" / "track.svg").read_text()

    def test_default_profile_is_median(self, cases_path):
        """Test that a missing profile uses the case medians."""
        result = TrackLearningCurveTool(output_dir=".").invoke(
            {"cases_path": cases_path, "standard_gamma": 0.2, "standard_eta": 2.0, "standard_beta": [-0.05]}
        )
        assert len(result["x_eval"]) == 1
        assert 13.0 <= result["x_eval"][0] <= 56.0

    def test_dimension_mismatch(self, cases_path):
        """Test that the profile must match the standard coefficients."""
        with pytest.raises(Exception):
            TrackLearningCurveTool(output_dir=".").invoke(
                {
                    "cases_path": cases_path,
                    "standard_gamma": 0.2,
                    "standard_eta": 2.0,
                    "standard_beta": [-0.05],
                    "x_eval": [27.0, 1.0],
                }
            )


class TestLcCusumToolUnit(ToolsUnitTests):
    """Unit tests for LcCusumTool."""

    @property
    def tool_constructor(self):
        return LcCusumTool

    @property
    def tool_constructor_params(self):
        return {"output_dir": "."}

    @property
    def tool_invoke_params_example(self):
        return {
            "cases_path": "trainee.csv",
            "standard_gamma": 0.2,
            "standard_eta": 2.0,
            "standard_beta": [-0.05],
            "h": 4.0,
            "x_eval": [27.0],
        }

    @property
    def init_from_env_params(self):
        return (
            {"SURGICAL_LC_OUTPUT_DIR": "plots"},
            {},
            {"output_dir": "plots"},
        )


class TestLcCusumToolCustom:
    """Custom unit tests for LcCusumTool."""

    def test_invoke(self, cases_path):
        """Test the statistic path and the first signal."""
        result = LcCusumTool(output_dir=".").invoke(
            {
                "cases_path": cases_path,
                "standard_gamma": 0.2,
                "standard_eta": 2.0,
                "standard_beta": [-0.05],
                "h": 2.0,
                "x_eval": [27.0],
            }
        )
        assert result["h"] == 2.0
        assert len(result["s"]) == 41
        assert result["s"][0] == 0.0
        assert max(result["s"]) <= 0.0
        if result["signal_index"] is not None:
            assert abs(result["s"][result["signal_index"]]) > 2.0

    def test_h_required(self, cases_path):
        """Test that a cutoff is required."""
        with pytest.raises(Exception):
            LcCusumTool(output_dir=".").invoke(
                {"cases_path": cases_path, "standard_gamma": 0.2, "standard_eta": 2.0}
            )


class TestSimulateOperatingCharacteristicsToolUnit(ToolsUnitTests):
    """Unit tests for SimulateOperatingCharacteristicsTool."""

    @property
    def tool_constructor(self):
        return SimulateOperatingCharacteristicsTool

    @property
    def tool_constructor_params(self):
        return {}

    @property
    def tool_invoke_params_example(self):
        return {"detector": "LCCUSUM", "h": 4.0, "reps": 10}


class TestSimulateOperatingCharacteristicsToolCustom:
    """Custom unit tests for SimulateOperatingCharacteristicsTool."""

    def test_invoke(self):
        """Test a small seeded LC-CUSUM run."""
        result = SimulateOperatingCharacteristicsTool().invoke(
            {"detector": "LCCUSUM", "h": 4.0, "reps": 10, "seed": 1}
        )
        assert result["detector"] == "LCCUSUM"
        assert result["reps"] == 10
        assert 0.0 <= result["pfa"]["estimate"] <= 1.0
        assert len(result["psd"]) == 3

    def test_reps_limit(self):
        """Test schema validation of the replication count."""
        with pytest.raises(Exception):
            SimulateOperatingCharacteristicsTool().invoke({"detector": "LCCUSUM", "h": 4.0, "reps": 0})

    def test_all_denominator(self):
        """Test that every replication enters the detection denominators."""
        result = SimulateOperatingCharacteristicsTool().invoke(
            {"detector": "LCCUSUM", "h": 1.0, "reps": 8, "seed": 1, "psd_denominator": "all"}
        )
        assert result["psd_denominator"] == "all"
        assert all(p["n"] == 8 for p in result["psd"].values())
