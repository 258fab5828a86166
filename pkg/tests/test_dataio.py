import json

import numpy as np
import pytest

from tvparx import (DimensionMismatch, FitOptions, ModelSpec, NegativeCount,
                    NonFiniteCovariate, ParseError, SeriesData, fit,
                    fit_report, load_csv, load_params, params_from_dict,
                    params_to_dict, simulate)
from tvparx.dataio import dump_json, load_covariates_csv, write_json

from conftest import make_theta, stable_theta


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_minimal_counts(tmp_path):
    p = write(tmp_path, "a.csv", "y\n1\n3\n2\n")
    loaded = load_csv(p)
    assert np.array_equal(loaded.data.y, [1, 3, 2])
    assert loaded.data.m == 0 and loaded.data.d == 0
    assert loaded.dates is None


def test_load_full_schema(tmp_path):
    text = ("date,y,x:RV,x:LI,d:mon,d:tue\n"
            "2020-01-01,4,0.5,-1.0,1,0\n"
            "2020-01-02,0,0.25,0.5,0,1\n"
            "2020-01-03,7,-0.75,2.0,0,0\n")
    loaded = load_csv(write(tmp_path, "b.csv", text))
    assert loaded.x_names == ("RV", "LI")
    assert loaded.d_names == ("mon", "tue")
    assert loaded.data.x.shape == (3, 2)
    assert loaded.data.dmat.shape == (3, 2)
    assert list(loaded.dates) == ["2020-01-01", "2020-01-02", "2020-01-03"]
    assert loaded.data.x[2, 0] == -0.75


def test_column_order_preserved(tmp_path):
    text = "x:b,y,x:a\n1.0,2,3.0\n4.0,5,6.0\n0.0,1,0.5\n"
    loaded = load_csv(write(tmp_path, "c.csv", text))
    assert loaded.x_names == ("b", "a")
    assert loaded.data.x[0].tolist() == [1.0, 3.0]


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "d.csv", "x:a\n1.0\n"))  # no y column
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "e.csv", "y,count\n1,2\n"))  # unknown column
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "f.csv", "y,y\n1,2\n"))  # duplicate y
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "g.csv", "y\n"))  # no data rows
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "h.csv", ""))  # empty file
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "i.csv", "y\n1.5\n"))  # non-integer count


def test_ragged_row_reports_position(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_csv(write(tmp_path, "j.csv", "y,x:a\n1,0.5\n2\n"))
    assert "row 3" in str(exc.value)


def test_negative_and_nonfinite_values(tmp_path):
    with pytest.raises(NegativeCount):
        load_csv(write(tmp_path, "k.csv", "y\n1\n-2\n"))
    with pytest.raises(NonFiniteCovariate):
        load_csv(write(tmp_path, "l.csv", "y,x:a\n1,inf\n2,0.5\n"))
    with pytest.raises(NonFiniteCovariate):
        load_csv(write(tmp_path, "m.csv", "y,x:a\n1,nan\n2,0.5\n"))


def test_covariates_only_file(tmp_path):
    x, dmat, schema, dates = load_covariates_csv(
        write(tmp_path, "n.csv", "x:a,d:mon\n0.5,1\n0.7,0\n"))
    assert x.shape == (2, 1) and dmat.shape == (2, 1)
    assert schema.x_names == ("a",) and schema.d_names == ("mon",)
    assert dates is None


def test_params_round_trip_exact():
    theta = make_theta(omega=0.123456789012345, beta=1 / 3, psi=(0.25, -0.5),
                       delta_alpha=-0.05, phi_alpha=0.7,
                       kappa_alpha=0.001234567890123456,
                       gamma_blocks=[[0.1, 0.2, 0.3], [-0.4, 0.5, -0.6]])
    obj = params_to_dict(theta)
    back = params_from_dict(json.loads(dump_json(obj)))
    assert back.omega == theta.omega
    assert back.beta == theta.beta
    assert back.kappa_alpha == theta.kappa_alpha
    assert np.array_equal(back.psi, theta.psi)
    assert np.array_equal(back.gamma_blocks, theta.gamma_blocks)


def test_params_from_dict_errors():
    with pytest.raises(ParseError):
        params_from_dict({"beta": 0.5})  # omega missing
    with pytest.raises(ParseError):
        params_from_dict({"omega": 0.1})  # beta missing
    with pytest.raises(DimensionMismatch):
        params_from_dict({"omega": 0.1, "beta": 0.5,
                          "delta_gamma": [0.1, 0.2], "phi_gamma": [0.3]})


def test_params_accepts_full_report_shape():
    theta = params_from_dict({"theta_hat": {"omega": 0.2, "beta": 0.6}})
    assert theta.omega == 0.2 and theta.beta == 0.6


def test_load_params_file(tmp_path):
    theta = stable_theta()
    p = tmp_path / "theta.json"
    write_json(p, params_to_dict(theta))
    back = load_params(p)
    assert back.omega == theta.omega and back.beta == theta.beta


def fit_small():
    theta = stable_theta()
    data, _ = simulate(theta, 250, seed=19)
    spec = ModelSpec(0, 0, alpha_time_varying=True)
    res = fit(data, spec, FitOptions(n_starts=1, covariance_kind="both",
                                     seed=2))
    return res, data


def test_fit_report_round_trip_and_contents():
    res, data = fit_small()
    report = fit_report(res, data, x_names=(), d_names=(), seed=2)
    text = dump_json(report)
    back = json.loads(text)

    # exact float round-trip through the serialized report
    assert back["theta_hat"]["omega"] == res.theta_hat.omega
    assert back["theta_hat"]["beta"] == res.theta_hat.beta
    assert back["theta_hat"]["kappa_alpha"] == res.theta_hat.kappa_alpha
    assert back["loglik"] == res.loglik

    assert back["T"] == 250 and back["k"] == 5
    assert back["model"]["alpha_time_varying"] is True
    assert set(back["criteria"]) == {"aic", "hqc", "bic"}
    assert back["criteria"]["aic"] == res.criteria.aic
    lam = res.path.lam
    rmse = float(np.sqrt(np.mean((data.y - lam) ** 2)))
    assert abs(back["rmse_in_sample"] - rmse) <= 1e-12
    assert back["convergence"]["converged"] == res.convergence.converged
    assert "stationarity" in back["diagnostics"]
    se = back["std_errors"]["hessian"]
    assert se["omega"] is not None

    # a report is itself an accepted parameter file
    theta = params_from_dict(back)
    assert theta.omega == res.theta_hat.omega


def test_fit_report_with_path():
    res, data = fit_small()
    report = fit_report(res, data, x_names=(), d_names=(), seed=2,
                        include_path=True)
    assert len(report["path"]["lambda"]) == 250
    assert report["path"]["lambda"][10] == res.path.lam[10]
