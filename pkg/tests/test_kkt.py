import math

import numpy as np
import pytest

from sparsecox.kkt import check_local_max
from sparsecox.optimizer import FitConfig, fit_ica, lambda_max
from sparsecox.penalties import Penalty

from conftest import random_data


def test_null_fit_certified():
    d = random_data(50, 10, seed=1)
    pen = Penalty("scad", lambda_max(d, "scad"))
    rep = check_local_max(d, np.zeros(10), pen)
    assert rep.passed
    assert rep.stationarity_residual == 0.0 and rep.curvature_margin == math.inf
    assert rep.tol == pytest.approx(50e-6)


def test_lasso_curvature_is_psd_check():
    d = random_data(50, 8, seed=2)
    pen = Penalty("lasso", 0.2 * lambda_max(d))
    res = fit_ica(d, FitConfig(pen))
    rep = check_local_max(d, res.beta, pen)
    assert rep.kappa == 0.0 and rep.curvature_margin == rep.min_eigenvalue >= 0
    assert rep.passed


def test_scad_certificate_and_perturbation():
    for seed in range(3):
        d = random_data(100, 50, seed=seed)
        pen = Penalty("scad", 0.8 * lambda_max(d, "scad"))
        res = fit_ica(d, FitConfig(pen))
        assert res.converged
        rep = check_local_max(d, res.beta, pen)
        assert rep.passed, rep.to_text()
        for j in res.active_set:
            b = res.beta.copy()
            b[j] += 0.1
            assert check_local_max(d, b, pen).stationarity_residual > rep.tol


@pytest.mark.parametrize("frac", [0.2, 0.4])
def test_first_order_conditions_hold_at_every_converged_fit(frac):
    for seed in range(5):
        d = random_data(100, 50, seed=seed)
        pen = Penalty("scad", frac * lambda_max(d, "scad"))
        res = fit_ica(d, FitConfig(pen))
        rep = check_local_max(d, res.beta, pen)
        assert res.converged
        assert rep.stationarity_residual <= rep.tol
        assert rep.inactive_margin >= -rep.tol
        assert rep.second_order_margin > 0


def test_worst_case_kappa_is_conservative():
    # the curvature condition uses one kappa for the whole active block; an
    # exact coordinatewise second-order check can pass where it fails
    d = random_data(100, 50, seed=1)
    pen = Penalty("scad", 0.4 * lambda_max(d, "scad"))
    res = fit_ica(d, FitConfig(pen))
    rep = check_local_max(d, res.beta, pen)
    assert rep.curvature_margin < -rep.tol < 0 < rep.second_order_margin
    assert not rep.passed


def test_inactive_margin_monotone_in_lambda():
    d = random_data(60, 10, seed=4)
    res = fit_ica(d, FitConfig(Penalty("lasso", 0.3 * lambda_max(d))))
    margins = [check_local_max(d, res.beta, Penalty("lasso", lam)).inactive_margin
               for lam in np.linspace(0.01, 1.0, 12)]
    assert np.all(np.diff(margins) >= 0)


def test_report_serializes():
    d = random_data(30, 4, seed=5)
    rep = check_local_max(d, np.zeros(4), Penalty("lasso", 1.0))
    text = rep.to_text()
    assert "passed = True" in text and "inactive_margin" in text
    with pytest.raises(ValueError):
        check_local_max(d, [np.nan, 0, 0, 0], Penalty("lasso", 1.0))
    with pytest.raises(ValueError):
        check_local_max(d, np.zeros(4), Penalty("lasso", 1.0), tol=0)


def test_failed_stationarity_detected():
    d = random_data(40, 5, seed=6)
    pen = Penalty("lasso", 0.1)
    assert not check_local_max(d, np.full(5, 0.5), pen).passed
