"""
End-to-end tests of the certification pipeline and its outputs.
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from app.core.errors import ConfigValidationError, ConstantsUnavailableError, IntegratorError
from app.models.control import ControlSolution
from app.models.spectral import ProblemSpec
from app.services import approximants, certification, report_service
from app.services import spectral_core as sc
from app.services.datum_factory import DatumFactory
from app.models.certification import DatumSpec


def small_datum_value(table, nu):
    """||u0||_n small enough that every closed-form bound is nonincreasing."""
    return 0.5 * nu / max(entry.G_pn for entry in table.entries)


def base_config(cache, **overrides):
    config = {
        "dim": 3,
        "nu": 1.0,
        "n": 3.0,
        "orders": [4.0],
        "datum": {"kind": "random_band", "k_min": 1.0, "k_max": 2.0, "seed": 7},
        "approximant": {"kind": "zero", "samples": 11},
        "constants": {"cache_path": cache},
        "T_max": 1.0,
    }
    config.update(overrides)
    return config


class TestConfiguration:
    @pytest.mark.parametrize("overrides", [
        {"n": 2.5},
        {"orders": [2.0]},
        {"nu": -1.0},
        {"approximant": {"kind": "galerkin"}},
        {"approximant": {"kind": "taylor", "N": 2}},
        {"unknown_field": 1},
    ])
    def test_rejected(self, overrides, constants_cache):
        with pytest.raises(ConfigValidationError) as info:
            certification.run_certification(base_config(constants_cache, **overrides))
        assert info.value.exit_code == 2

    def test_bad_datum_is_a_config_error(self, constants_cache):
        config = base_config(constants_cache, datum={"kind": "random_band", "k_min": 3.0, "k_max": 2.0})
        with pytest.raises(ConfigValidationError, match="Invalid problem data"):
            certification.run_certification(config)


class TestZeroApproximant:
    def test_small_datum_is_certified_globally(self, constants_cache, table_d3):
        value = small_datum_value(table_d3, 1.0)
        config = base_config(constants_cache)
        config["datum"]["norm_target"] = {"order": 3.0, "value": value}
        report = certification.run_certification(config)

        assert report.status == "complete"
        assert math.isinf(report.t_c)
        assert report.certified == "globally"
        assert report.control["closed_form"]
        r_n = report.solution.r_n
        r_p = report.solution.bound_for(4.0)
        assert r_n[0] == pytest.approx(value, rel=1e-14)
        assert np.all(np.diff(r_n) <= 0)
        assert np.all(np.diff(r_p) <= 0)
        assert np.all(r_p <= report.delta["4.0"] * (1 + 1e-14))
        assert all(gap < 1e-6 for key, gap in report.closed_form_check.items() if key.startswith("R_"))

    def test_inviscid_blowup_time(self, constants_cache, table_d3):
        g_n = table_d3.G_n(3.0)
        rng = np.random.default_rng(11)
        for trial in range(20):
            config = base_config(constants_cache, nu=0.0, orders=[], T_max=50.0)
            config["approximant"] = {"kind": "zero", "samples": 3}
            config["datum"] = {"kind": "random_band", "k_min": 1.0, "k_max": 2.0, "seed": 100 + trial}
            config["datum"]["norm_target"] = {"order": 3.0, "value": float(rng.uniform(0.5, 5.0))}
            report = certification.run_certification(config)
            u0n = report.delta["3.0"]
            assert report.t_c == pytest.approx(1.0 / (g_n * u0n), rel=1e-6)
            assert report.certified == "until control blow-up"
            assert report.blowup_time_estimate == report.t_c

    def test_zero_datum(self, constants_cache):
        config = base_config(constants_cache, datum={"kind": "explicit", "modes": []})
        report = certification.run_certification(config)
        assert math.isinf(report.t_c)
        assert not np.any(report.solution.r_n)
        assert not np.any(report.solution.bound_for(4.0))

    def test_validation_against_reference(self, constants_cache, table_d3):
        config = base_config(constants_cache, validation={"ref_M": 3})
        config["datum"]["norm_target"] = {"order": 3.0, "value": small_datum_value(table_d3, 1.0)}
        report = certification.run_certification(config)
        block = report.validation
        assert block.reference_M == 3
        assert block.passed
        assert set(block.ratios) == {"3.0", "4.0"}
        assert block.ratios["3.0"][0] <= 1.0 + block.slack
        assert 0.0 < block.max_ratio["3.0"] <= 1.0 + block.slack

    def test_reference_must_be_finer(self, constants_cache):
        config = base_config(constants_cache, approximant={"kind": "galerkin", "M": 2, "samples": 3, "T_a": 0.1},
                             validation={"ref_M": 2})
        with pytest.raises(ConfigValidationError, match="must exceed") as info:
            certification.run_certification(config)
        assert info.value.exit_code == 2

    def test_reference_must_be_finer_when_called_directly(self):
        spec = ProblemSpec(dim=3, nu=1.0, n=3.0, datum=DatumFactory.random_band(3, 1.0, 2.0, seed=7))
        trace = approximants.galerkin_evolve(spec, 2, horizon=0.1, samples=3)
        solution = ControlSolution(base_order=3.0, t_c=0.1, times=trace.times, r_n=np.ones(3))
        with pytest.raises(ConfigValidationError, match="must exceed"):
            certification.validate_against_reference(spec, trace, solution, 2)

    def test_validation_needs_two_grid_points(self, constants_cache, table_d3):
        config = base_config(constants_cache, nu=0.0, orders=[], validation={"ref_M": 3})
        config["approximant"] = {"kind": "zero", "samples": 3}
        config["datum"]["norm_target"] = {"order": 3.0, "value": 10.0 / table_d3.G_n(3.0)}
        with pytest.raises(IntegratorError, match="at least two grid points") as info:
            certification.run_certification(config)
        assert info.value.exit_code == 4
        assert info.value.partial_report.status == "partial"
        assert info.value.partial_report.t_c == pytest.approx(0.1, rel=1e-12)


class TestApproximantPipelines:
    def test_galerkin_certificate_with_validation(self, constants_cache, table_d3):
        config = base_config(
            constants_cache,
            approximant={"kind": "galerkin", "M": 3, "T_a": 0.1, "samples": 5},
            validation={"ref_M": 5},
        )
        config["datum"]["norm_target"] = {"order": 3.0, "value": small_datum_value(table_d3, 1.0)}
        report = certification.run_certification(config)

        assert report.status == "complete"
        assert report.approximant["provenance"] == "galerkin"
        assert report.approximant["nu"] == 1.0
        assert report.certified == "to horizon"
        assert report.t_c == pytest.approx(0.1)
        assert report.delta["3.0"] == pytest.approx(0.0, abs=1e-15)
        assert np.all(report.estimators.eps[3.0] > 0)
        assert np.all(np.isfinite(report.solution.r_n))
        assert np.all(np.isfinite(report.solution.bound_for(4.0)))

        block = report.validation
        assert block.reference_M == 5
        assert set(block.ratios) == {"3.0", "4.0"}
        for q in ("3.0", "4.0"):
            assert block.ratios[q][0] == 0.0
            assert all(a <= r for a, r in zip(block.adjusted_ratios[q], block.ratios[q]))
        assert block.passed == all(value <= 1.0 + block.slack for value in block.max_ratio.values())

    def test_resolved_exact_flow(self, constants_cache):
        config = base_config(
            constants_cache,
            nu=0.5,
            datum={"kind": "explicit", "modes": [{"k": [1, 0, 0], "re": [0.0, 0.3, 0.0], "im": [0.0, -0.2, 0.0]}]},
            approximant={"kind": "galerkin", "M": 2, "T_a": 0.5, "samples": 6},
            validation={"ref_M": 4},
        )
        report = certification.run_certification(config)
        scale = sc.sobolev_norm(report.trace.field(0), 4.0)

        assert report.status == "complete"
        for q in (3.0, 4.0):
            assert np.all(report.estimators.eps[q] <= 1e-10 * scale)
        assert np.max(report.solution.r_n) <= 1e-9 * scale
        assert np.max(report.solution.bound_for(4.0)) <= 1e-9 * scale
        assert report.validation.adjusted_max_ratio == {"3.0": 0.0, "4.0": 0.0}

    def test_taylor_certificate(self, constants_cache):
        config = {
            "dim": 2,
            "nu": 0.0,
            "n": 2.5,
            "orders": [3.5],
            "datum": {
                "kind": "random_band", "k_min": 1.0, "k_max": 2.0, "seed": 3,
                "norm_target": {"order": 2.5, "value": 0.05},
            },
            "approximant": {"kind": "taylor", "N": 2, "T_a": 0.1, "samples": 5},
            "constants": {"cache_path": constants_cache},
            "T_max": 0.1,
        }
        report = certification.run_certification(config)

        assert report.status == "complete"
        assert report.approximant["provenance"] == "taylor"
        assert report.approximant["N"] == 2
        assert report.certified == "to horizon"
        assert report.t_c == pytest.approx(0.1)
        assert report.delta["2.5"] == pytest.approx(0.0, abs=1e-15)
        assert np.all(np.isfinite(report.solution.r_n))
        assert np.all(np.diff(report.solution.r_n) >= 0)
        assert np.all(np.isfinite(report.solution.bound_for(3.5)))


class TestErrors:
    def test_constants_unavailable(self, tmp_path):
        with pytest.raises(ConstantsUnavailableError) as info:
            certification.run_certification(base_config(str(tmp_path)))
        assert info.value.exit_code == 3
        assert info.value.partial_report.status == "partial"

    def test_integrator_failure_leaves_partial_report(self, constants_cache, monkeypatch, tmp_path):
        def failing(config, spec):
            raise ValueError("Galerkin integration failed before the first sample")

        monkeypatch.setattr(certification, "build_trace", failing)
        with pytest.raises(IntegratorError) as info:
            certification.run_certification(base_config(constants_cache))
        assert info.value.exit_code == 4
        partial = info.value.partial_report
        assert partial.status == "partial"
        assert "datum" in partial.timings

        paths = report_service.emit_outputs(partial, str(tmp_path))
        data = json.loads(open(paths["report"], encoding="utf-8").read())
        assert data["status"] == "partial"
        assert "bounds" not in paths


class TestOutputs:
    def test_files_and_determinism(self, constants_cache, tmp_path):
        config = base_config(constants_cache, save_trace=True)
        first = certification.run_certification(config)
        second = certification.run_certification(config)
        a = report_service.emit_outputs(first, str(tmp_path / "a"), save_trace=True)
        b = report_service.emit_outputs(second, str(tmp_path / "b"), save_trace=True)

        assert {"report", "bounds", "estimators", "summary", "timings", "trace"} <= set(a)
        for key in ("report", "bounds", "estimators", "summary", "trace"):
            assert open(a[key], "rb").read() == open(b[key], "rb").read()

        bounds = pd.read_csv(a["bounds"])
        assert list(bounds.columns) == ["t", "R_3.0", "R_4.0", "A_4.0"]
        assert bounds["R_3.0"].iloc[0] == pytest.approx(first.delta["3.0"], rel=1e-15)
        estimators = pd.read_csv(a["estimators"])
        assert list(estimators.columns[:3]) == ["t", "eps_3.0", "D_3.0"]

    def test_infinite_horizon_is_written_as_text(self, constants_cache, table_d3, tmp_path):
        config = base_config(constants_cache)
        config["datum"]["norm_target"] = {"order": 3.0, "value": small_datum_value(table_d3, 1.0)}
        paths = report_service.emit_outputs(certification.run_certification(config), str(tmp_path))
        data = json.loads(open(paths["report"], encoding="utf-8").read())
        assert data["t_c"] == "inf"
        assert data["constants"]["truncation"]["sum_radius"] == 24
        assert "T_c = **inf**" in open(paths["summary"], encoding="utf-8").read()

    def test_refinement_is_reported(self, constants_cache, tmp_path):
        report = certification.run_certification(base_config(constants_cache))
        flagged = any("half-size lattice truncation" in caveat for caveat in report.caveats)
        assert flagged == (report.constants.worst_refinement > certification.REFINEMENT_CAVEAT)
        assert all(set(entry.refinement) == {"K", "G"} for entry in report.constants.entries)
        paths = report_service.emit_outputs(report, str(tmp_path))
        assert "change from half truncation" in open(paths["summary"], encoding="utf-8").read()


class TestDatumFactory:
    def test_taylor_green_norm(self):
        field = DatumFactory.taylor_green(3, amplitude=2.0)
        # ||u||_0^2 = A^2 (2 pi)^3 / 4 for the three-dimensional vortex
        assert sc.sobolev_norm(field, 0.0) ** 2 == pytest.approx(4.0 * (2 * np.pi) ** 3 / 4.0, rel=1e-13)
        assert field.truncation == 1

    def test_norm_target(self):
        spec = DatumSpec(kind="random_band", k_max=3.0, seed=5, norm_target={"order": 3.0, "value": 0.25})
        field = DatumFactory.build(spec, 3)
        assert sc.sobolev_norm(field, 3.0) == pytest.approx(0.25, rel=1e-13)

    def test_seed_from_config(self):
        spec = DatumSpec(kind="random_band")
        first = DatumFactory.build(spec, 2, seed=3)
        second = DatumFactory.build(spec, 2, seed=3)
        np.testing.assert_array_equal(first.coeffs, second.coeffs)


@pytest.mark.slow
def test_taylor_green_galerkin_certificate(constants_cache, tmp_path):
    config = {
        "dim": 3,
        "nu": 0.5,
        "n": 3.0,
        "orders": [4.0],
        "datum": {"kind": "taylor_green", "amplitude": 1.0},
        "approximant": {"kind": "galerkin", "M": 8, "T_a": 0.2, "samples": 21},
        "constants": {"cache_path": constants_cache},
        "T_max": 0.2,
        "validation": {"ref_M": 16},
    }
    report = certification.run_certification(config)
    assert not report.blew_up
    assert report.t_c == pytest.approx(0.2)
    block = report.validation
    assert set(block.ratios) == {"3.0", "4.0"}
    for q in ("3.0", "4.0"):
        assert len(block.ratios[q]) == len(block.times)
        assert block.ratios[q][0] == 0.0
        assert block.adjusted_max_ratio[q] <= 1.0 + block.slack
    assert block.passed == all(value <= 1.0 + block.slack for value in block.max_ratio.values())
    report_service.emit_outputs(report, str(tmp_path))
