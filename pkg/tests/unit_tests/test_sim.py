"""Unit tests for the Monte-Carlo harness."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from surgical_lc.exceptions import CalibrationError, DomainError, NoQualifyingReplicationsError
from surgical_lc.model import relative_risk
from surgical_lc.sim import (
    CovariateSampler,
    LearningTrajectory,
    OcResult,
    Probability,
    ScenarioSpec,
    calibrate_from_paths,
    calibrate_h,
    detector_path,
    estimate_pfa,
    estimate_psd,
    gamma_learning,
    oc_from_paths,
    operating_characteristics,
    pfa_from_paths,
    psd_from_paths,
    replicate_paths,
    replication_seed,
    signal_mask,
    simulate_stream,
    validate_cutoff,
)
from tests.unit_tests.mocks import write_csv


def _ramp_paths(n: int = 100, t: int = 5) -> np.ndarray:
    """Row ``r`` reaches ``r / 10`` at its last case and is zero before."""
    paths = np.zeros((n, t))
    paths[:, -1] = np.arange(n) / 10.0
    return paths


class TestScenario:
    """Learning trajectory and scenario design."""

    @pytest.mark.parametrize("i,expected", [(1, 0.05), (31, 0.14), (51, 0.2), (100, 0.2)])
    def test_gamma_learning(self, i, expected):
        """Test the learning rate at reference cases."""
        assert gamma_learning(i) == pytest.approx(expected, abs=1e-12)

    def test_plateau_is_exact(self):
        """Test that the plateau value is returned exactly."""
        trajectory = LearningTrajectory()
        assert trajectory.plateau_index == 51
        assert trajectory(51) == 0.2
        assert np.all(np.diff(trajectory.rates(100)) >= 0)

    def test_enters_noninferiority_after_case_30(self):
        """Test that R drops below 1 + eps from case 31 on."""
        spec = ScenarioSpec()
        r = [relative_risk(spec.trainee_params("learning", i), spec.standard, spec.x_eval) for i in (30, 31, 51)]
        assert r[0] > 1.2
        assert r[1] < 1.2
        assert r[1] == pytest.approx(math.sqrt(0.2 / 0.14), rel=1e-12)
        assert r[2] == pytest.approx(1.0, rel=1e-12)

    def test_inadequate_relative_risk(self):
        """Test that the inadequate trainee takes twice as long."""
        spec = ScenarioSpec()
        params = spec.trainee_params("inadequate", 77)
        assert relative_risk(params, spec.standard, (40.0,)) == pytest.approx(2.0, rel=1e-12)

    def test_trajectory_index_domain(self):
        """Test that case indices start at 1."""
        with pytest.raises(DomainError):
            gamma_learning(0)

    def test_invalid_designs(self):
        """Test dimension, warm-up and change-point checks."""
        with pytest.raises(ValidationError):
            ScenarioSpec(x_eval=(27.0, 1.0))
        with pytest.raises(ValidationError):
            ScenarioSpec(n0=3)
        with pytest.raises(ValidationError):
            ScenarioSpec(t=30, change_index=30)

    def test_alias(self):
        """Test the public name of the smoothing constant."""
        assert ScenarioSpec(**{"lambda": 0.1}).lambda_ == 0.1


class TestStreams:
    """Simulated trainee streams."""

    def test_deterministic(self):
        """Test that a replication seed reproduces its stream."""
        spec = ScenarioSpec()
        a = simulate_stream(spec, "learning", replication_seed(7, "learning", 3))
        b = simulate_stream(spec, "learning", replication_seed(7, "learning", 3))
        c = simulate_stream(spec, "learning", replication_seed(7, "learning", 4))
        assert a == b
        assert a != c
        assert len(a) == 100
        assert [case.index for case in a] == list(range(1, 101))

    def test_modes_use_separate_streams(self):
        """Test that the two scenarios and the validation batch never share draws."""
        learning = replication_seed(7, "learning", 3).generate_state(4)
        inadequate = replication_seed(7, "inadequate", 3).generate_state(4)
        validation = replication_seed(7, "inadequate", 3, batch=1).generate_state(4)
        assert not np.array_equal(learning, inadequate)
        assert not np.array_equal(inadequate, validation)
        spec = ScenarioSpec(covariate_sampler=CovariateSampler(kind="fixed"))
        a = simulate_stream(spec, "learning", replication_seed(7, "learning", 3))
        b = simulate_stream(spec, "inadequate", replication_seed(7, "inadequate", 3))
        # on the plateau, shared uniforms would give a constant ratio
        ratio = np.array([x.y for x in a]) / np.array([x.y for x in b])
        assert np.ptp(ratio[60:]) > 1e-6

    def test_seed_mode_domain(self):
        """Test that the seed stream checks the scenario mode."""
        with pytest.raises(DomainError):
            replication_seed(7, "expert", 0)

    def test_uniform_covariates(self):
        """Test the default integer BMI range."""
        cases = simulate_stream(ScenarioSpec(), "inadequate", 1)
        bmi = np.array([case.x[0] for case in cases])
        assert bmi.min() >= 13 and bmi.max() <= 56
        np.testing.assert_array_equal(bmi, np.round(bmi))

    def test_fixed_covariates(self):
        """Test a sampler that repeats the evaluation profile."""
        spec = ScenarioSpec(covariate_sampler=CovariateSampler(kind="fixed"), x_eval=37.5)
        cases = simulate_stream(spec, "inadequate", 1)
        assert all(case.x == (37.5,) for case in cases)

    def test_empirical_covariates(self, tmp_path):
        """Test resampling covariates from a file."""
        path = write_csv(tmp_path / "bmi.csv", "x1\n20\n30\n40\n")
        sampler = CovariateSampler.from_file(path)
        assert sampler.kind == "empirical"
        X = sampler.draw(np.random.default_rng(0), 50, (27.0,))
        assert X.shape == (50, 1)
        assert set(X[:, 0]) <= {20.0, 30.0, 40.0}

    def test_empirical_rejects_text(self, tmp_path):
        """Test that non-numeric covariates raise."""
        path = write_csv(tmp_path / "bmi.csv", "x1\n20\nobese\n")
        with pytest.raises(DomainError):
            CovariateSampler.from_file(path)

    def test_unknown_mode(self):
        """Test that the scenario mode is checked."""
        with pytest.raises(DomainError):
            simulate_stream(ScenarioSpec(), "expert", 0)


class TestDetectorPaths:
    """Per-replication statistic paths."""

    def test_lccusum_path(self):
        """Test that the LC-CUSUM path is the absolute statistic."""
        spec = ScenarioSpec()
        path = detector_path("LCCUSUM", spec, simulate_stream(spec, "learning", 5))
        assert path.shape == (100,)
        assert np.all(path >= 0)

    def test_slca_path(self):
        """Test that SLCA paths are missing before the warm-up and CPMs after."""
        spec = ScenarioSpec(t=30, change_index=10)
        path = detector_path("SLCA", spec, simulate_stream(spec, "learning", 6))
        assert np.all(np.isnan(path[:9]))
        evaluated = path[9:][np.isfinite(path[9:])]
        assert evaluated.size >= 15
        assert np.all((evaluated >= 0) & (evaluated <= 1))

    def test_unknown_detector(self):
        """Test that the detector name is checked."""
        spec = ScenarioSpec()
        with pytest.raises(DomainError):
            detector_path("EWMA", spec, simulate_stream(spec, "learning", 5))

    def test_n_jobs_invariance(self):
        """Test that parallel replication gives identical paths."""
        spec = ScenarioSpec()
        serial = replicate_paths("LCCUSUM", spec, "learning", 8, seed=3, n_jobs=1)
        parallel = replicate_paths("LCCUSUM", spec, "learning", 8, seed=3, n_jobs=2)
        np.testing.assert_array_equal(serial, parallel)
        assert serial.shape == (8, 100)

    def test_reps_domain(self):
        """Test that at least one replication is required."""
        with pytest.raises(DomainError):
            replicate_paths("LCCUSUM", ScenarioSpec(), "learning", 0)


class TestProbabilities:
    """False-alarm and detection probabilities from paths."""

    def test_from_counts(self):
        """Test the binomial standard error."""
        p = Probability.from_counts(10, 100)
        assert p.estimate == 0.1
        assert p.se == pytest.approx(math.sqrt(0.1 * 0.9 / 100))
        assert Probability.from_counts(0, 0).estimate == 0.0

    def test_signal_rules(self):
        """Test inclusive SLCA and strict LC-CUSUM comparisons with missing values."""
        paths = np.array([[np.nan, 0.5, 0.95]])
        np.testing.assert_array_equal(signal_mask("SLCA", paths, 0.95), [[False, False, True]])
        np.testing.assert_array_equal(signal_mask("LCCUSUM", paths, 0.95), [[False, False, False]])

    def test_pfa_monotone(self):
        """Test that PFA falls as h grows and vanishes for a huge h."""
        paths = _ramp_paths()
        values = [pfa_from_paths("LCCUSUM", paths, h).estimate for h in (0.0, 2.5, 5.0, 9.0, 1e9)]
        assert values == sorted(values, reverse=True)
        assert values[0] == 0.99
        assert values[-1] == 0.0

    def test_psd_windows(self):
        """Test window counting after the change point."""
        paths = np.zeros((4, 10))
        paths[0, 2] = 5.0  # early signal
        paths[1, 4] = 5.0
        paths[2, 8] = 5.0
        psd, excluded = psd_from_paths("LCCUSUM", paths, 1.0, change_index=3, windows=(0, 2, 7))
        assert excluded == 1
        assert psd[0].estimate == 0.0
        assert psd[2].estimate == pytest.approx(1 / 3)
        assert psd[7].estimate == pytest.approx(2 / 3)
        assert psd[7].n == 3

    def test_psd_all_denominator(self):
        """Test that early signals count as misses over all replications."""
        paths = np.zeros((4, 10))
        paths[0, 2] = 5.0  # early signal
        paths[1, 4] = 5.0
        paths[2, 8] = 5.0
        psd, excluded = psd_from_paths("LCCUSUM", paths, 1.0, 3, windows=(2, 7), denominator="all")
        assert excluded == 1
        assert psd[2].estimate == pytest.approx(1 / 4)
        assert psd[7].estimate == pytest.approx(2 / 4)
        assert psd[7].n == 4

    def test_all_denominator_without_qualifying(self):
        """Test that all-early signals give zero detection instead of raising."""
        paths = np.full((5, 10), 5.0)
        psd, excluded = psd_from_paths("LCCUSUM", paths, 1.0, change_index=3, denominator="all")
        assert excluded == 5
        assert all(p.estimate == 0.0 and p.n == 5 for p in psd.values())

    def test_unknown_denominator(self):
        """Test that the denominator name is checked."""
        with pytest.raises(DomainError):
            psd_from_paths("LCCUSUM", _ramp_paths(), 1.0, change_index=3, denominator="some")

    def test_no_qualifying_replications(self):
        """Test that all-early signals raise with the exclusion count."""
        paths = np.full((5, 10), 5.0)
        with pytest.raises(NoQualifyingReplicationsError) as excinfo:
            psd_from_paths("LCCUSUM", paths, 1.0, change_index=3)
        assert excinfo.value.excluded == 5

    def test_windows_must_fit(self):
        """Test that windows past the horizon raise."""
        with pytest.raises(DomainError):
            estimate_psd("LCCUSUM", ScenarioSpec(), 4.0, reps=2, windows=(80,))

    def test_oc_from_paths(self):
        """Test the assembled result."""
        paths = _ramp_paths(t=40)
        result = oc_from_paths("LCCUSUM", paths, paths, 9.45, change_index=3, windows=(20,), seed=1)
        assert isinstance(result, OcResult)
        assert result.reps == 100
        assert result.pfa.estimate == pytest.approx(0.05)
        assert result.excluded == 0
        assert result.psd[20].estimate == 0.0

    def test_small_run(self):
        """Test a seeded LC-CUSUM run end to end."""
        spec = ScenarioSpec()
        result = operating_characteristics("LCCUSUM", spec, 4.0, reps=20, seed=0)
        again = operating_characteristics("LCCUSUM", spec, 4.0, reps=20, seed=0)
        assert result == again
        assert set(result.psd) == {20, 50, 70}
        assert result.psd[20].estimate <= result.psd[50].estimate <= result.psd[70].estimate
        pfa = estimate_pfa("LCCUSUM", spec, 4.0, reps=20, seed=0)
        assert pfa == result.pfa


class TestCalibration:
    """Cutoff search."""

    def test_synthetic_paths(self):
        """Test bisection over known paths."""
        result = calibrate_from_paths("LCCUSUM", _ramp_paths())
        assert 0.03 <= result.pfa.estimate <= 0.07
        assert 9.2 <= result.h < 9.7
        assert result.trace[-1] == (result.h, result.pfa.estimate)
        assert result.reps == 100

    def test_bound_inside_target(self):
        """Test that a bound already in range is returned."""
        result = calibrate_from_paths("LCCUSUM", _ramp_paths(), bounds=(9.4, 20.0))
        assert result.h == 9.4
        assert len(result.trace) == 2

    def test_unreachable(self):
        """Test that missing paths never bracket the target."""
        paths = np.full((10, 5), np.nan)
        with pytest.raises(CalibrationError) as excinfo:
            calibrate_from_paths("LCCUSUM", paths)
        assert excinfo.value.bracket

    def test_target_domain(self):
        """Test invalid target ranges."""
        with pytest.raises(DomainError):
            calibrate_from_paths("SLCA", _ramp_paths(), target=(0.07, 0.03))
        with pytest.raises(DomainError):
            calibrate_h("SLCA", ScenarioSpec(), target=(0.0, 0.05), reps=1)

    def test_seeded_calibration(self):
        """Test that calibration on simulated paths lands in range."""
        result = calibrate_h("LCCUSUM", ScenarioSpec(), target=(0.05, 0.35), reps=20, seed=2)
        assert 0.05 <= result.pfa.estimate <= 0.35
        assert result.h > 0
        assert result.validation is not None
        assert result.validation.n == 20
        fresh = replicate_paths("LCCUSUM", ScenarioSpec(), "inadequate", 20, seed=2, batch=1)
        assert result.validation == pfa_from_paths("LCCUSUM", fresh, result.h)

    def test_validation_batch(self):
        """Test that the validation PFA comes from paths the search never saw."""
        spec = ScenarioSpec()
        search = replicate_paths("LCCUSUM", spec, "inadequate", 10, seed=4)
        calibration = calibrate_from_paths("LCCUSUM", search, target=(0.05, 0.5), seed=4)
        validated, paths = validate_cutoff(calibration, spec)
        assert validated.h == calibration.h
        assert validated.pfa == calibration.pfa
        assert not np.array_equal(paths, search)
        assert validated.validation == pfa_from_paths("LCCUSUM", paths, calibration.h)
