import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msmbounds import (
    DataError,
    NuisanceSet,
    OutcomeKind,
    ParameterError,
    sensitivity_params,
    validate_dataset,
)


class TestSensitivityParams:
    def test_unconfounded_boundary(self):
        p = sensitivity_params(1.0)
        assert p.lam == 1.0
        assert p.tau == 0.5

    def test_direct_arithmetic(self):
        p = sensitivity_params(2.0)
        assert p.tau == pytest.approx(2.0 / 3.0, abs=1e-15)

    @pytest.mark.parametrize("bad", [0.5, 0.0, -1.0, float("nan"), float("inf")])
    def test_domain(self, bad):
        with pytest.raises(ParameterError):
            sensitivity_params(bad)

    @given(st.floats(min_value=1.0, max_value=1e12), st.floats(min_value=1.0, max_value=1e12))
    @settings(max_examples=200, deadline=None)
    def test_tau_monotone(self, lam1, lam2):
        lo, hi = sorted((lam1, lam2))
        t_lo = sensitivity_params(lo).tau
        t_hi = sensitivity_params(hi).tau
        assert 0.5 <= t_lo < 1.0
        if lo < hi:
            assert t_lo < t_hi

    def test_tau_approaches_one(self):
        assert sensitivity_params(1e15).tau > 1.0 - 1e-14


class TestValidateDataset:
    def table(self):
        return {
            "a": np.array([0.1, -0.2, 0.3]),
            "b": np.array([1.0, 2.0, 3.0]),
            "z": np.array([0.0, 1.0, 1.0]),
            "y": np.array([0.5, -0.5, 2.0]),
        }

    def test_well_formed(self):
        ds = validate_dataset(
            self.table(), treatment="z", outcome="y", covariates=["a", "b"], outcome_kind="continuous"
        )
        assert ds.n == 3 and ds.d == 2
        assert ds.outcome_kind is OutcomeKind.CONTINUOUS

    def test_bad_treatment_value(self):
        t = self.table()
        t["z"] = np.array([0.0, 2.0, 1.0])
        with pytest.raises(DataError, match="treatment"):
            validate_dataset(t, treatment="z", outcome="y", covariates=["a"], outcome_kind="continuous")

    def test_binary_outcome_domain(self):
        t = self.table()
        with pytest.raises(DataError, match="binary"):
            validate_dataset(t, treatment="z", outcome="y", covariates=["a"], outcome_kind="binary")

    def test_missing_cell_names_row_and_column(self):
        t = self.table()
        t["b"] = np.array([1.0, np.nan, 3.0])
        with pytest.raises(DataError, match=r"'b'.*row 1"):
            validate_dataset(t, treatment="z", outcome="y", covariates=["a", "b"], outcome_kind="continuous")

    def test_missing_column(self):
        with pytest.raises(DataError, match="'q'"):
            validate_dataset(self.table(), treatment="z", outcome="y", covariates=["q"], outcome_kind="continuous")

    def test_role_overlap(self):
        with pytest.raises(DataError, match="overlap"):
            validate_dataset(self.table(), treatment="z", outcome="z", covariates=["a"], outcome_kind="continuous")

    def test_round_trip_identity(self):
        ds = validate_dataset(
            self.table(), treatment="z", outcome="y", covariates=["a", "b"], outcome_kind="continuous"
        )
        back = validate_dataset(
            ds.to_table(["a", "b"]), treatment="z", outcome="y", covariates=["a", "b"], outcome_kind="continuous"
        )
        np.testing.assert_array_equal(back.covariates, ds.covariates)
        np.testing.assert_array_equal(back.treatment, ds.treatment)
        np.testing.assert_array_equal(back.outcome, ds.outcome)

    def test_immutability(self):
        ds = validate_dataset(
            self.table(), treatment="z", outcome="y", covariates=["a"], outcome_kind="continuous"
        )
        with pytest.raises(ValueError):
            ds.outcome[0] = 99.0


class TestNuisanceSet:
    def test_shape_and_domain_checks(self):
        ok = NuisanceSet(
            e_hat=np.array([0.5, 0.4]),
            q_plus=np.zeros((2, 2)),
            q_minus=np.zeros((2, 2)),
            rho_plus=np.zeros((2, 2)),
            rho_minus=np.zeros((2, 2)),
        )
        assert ok.n == 2 and ok.mu is None
        with pytest.raises(DataError):
            NuisanceSet(
                e_hat=np.array([0.5, 1.0]),
                q_plus=np.zeros((2, 2)),
                q_minus=np.zeros((2, 2)),
                rho_plus=np.zeros((2, 2)),
                rho_minus=np.zeros((2, 2)),
            )
        with pytest.raises(DataError):
            NuisanceSet(
                e_hat=np.array([0.5, 0.5]),
                q_plus=np.zeros((3, 2)),
                q_minus=np.zeros((2, 2)),
                rho_plus=np.zeros((2, 2)),
                rho_minus=np.zeros((2, 2)),
            )
