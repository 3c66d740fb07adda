import json
import math

import jsonschema
import numpy as np
import pytest

from inflap import (
    DiscreteMeasure, DomainSpec, InsufficientRows, SolverConfig, SweepResult, build_domain,
    build_verdict, calibrate_bound_constant, concentration_profile, distance_to_boundary, inradius,
    lambda_infinity_estimate, minima_convergence_check, run_asymptotic_study, uinf_bound_check,
)
from inflap.asymptotics import ROW_FIELDS
from inflap.io import load_schema, plain
from oracles import L_SHAPE_R1


def synthetic(R1, c, ps=(2, 4, 8, 16, 32, 64, 128), h=1 / 64):
    rows = []
    for p in ps:
        r = {k: None for k in ROW_FIELDS}
        r.update(p=float(p), root=1 / R1 + c / p, converged=True)
        rows.append(r)
    return SweepResult(rows, "disk", h, R1)


@pytest.fixture(scope="module")
def disk_study():
    return run_asymptotic_study(DomainSpec("disk"), 1 / 16)


@pytest.mark.parametrize("R1,c", [(1.0, 0.7), (0.5, -1.3), (L_SHAPE_R1, 2.5)])
def test_extrapolation_recovers_exact_linear_model(R1, c):
    est, ok = lambda_infinity_estimate(synthetic(R1, c))
    assert est == pytest.approx(1 / R1, abs=1e-8)
    assert ok


def test_bound_constant_on_synthetic_rows():
    sweep = synthetic(1.0, 0.5)
    C = calibrate_bound_constant(sweep)
    assert C == pytest.approx(0.25 / sweep.h)
    assert lambda_infinity_estimate(sweep, C)[1]
    assert not lambda_infinity_estimate(sweep, 0.9 * C)[1]


def test_insufficient_rows():
    with pytest.raises(InsufficientRows):
        lambda_infinity_estimate(synthetic(1.0, 0.5, ps=(2, 4)))
    with pytest.raises(InsufficientRows):
        minima_convergence_check(synthetic(1.0, 0.5, ps=(2,)))


def test_concentration_profile_cases(square16):
    d = distance_to_boundary(square16)
    _, band = inradius(d)
    exact = DiscreteMeasure.on_nodes(square16, np.ones(len(band)), band)
    spread = DiscreteMeasure.on_nodes(square16, np.ones(square16.n_interior))
    fr = concentration_profile([spread, exact], band, 2 * square16.h, square16)
    assert fr[1] == 1.0
    assert 0 < fr[0] < 1
    with pytest.raises(ValueError):
        concentration_profile([exact], band, square16.h, square16)


def test_uinf_bound_cases(square16):
    d = distance_to_boundary(square16)
    R1, _ = inradius(d)
    assert uinf_bound_check(d.values / R1, d, R1) == pytest.approx(0.0, abs=1e-15)
    ones = np.ones(square16.n_interior)
    assert uinf_bound_check(ones, d, R1) == pytest.approx(1 - d.values.min() / R1)
    # the check normalises by the sup
    assert uinf_bound_check(7 * d.values, d, R1) == pytest.approx(0.0, abs=1e-15)


def test_study_structure(disk_study):
    s = disk_study
    assert [r["p"] for r in s.records] == [2, 4, 8, 16, 32, 64, 128]
    assert all(r["converged"] and r["error"] is None for r in s.records)
    assert s.R1 == pytest.approx(1.0, abs=s.h)
    assert all(set(r) == set(ROW_FIELDS) for r in s.records)
    assert s.records[0]["ray_deviation"] is None and s.records[-1]["ray_deviation"] is not None
    frac = s.column("concentration_mass_fraction")
    assert frac[0] < frac[-1]


def test_minima_gaps(disk_study):
    gaps = {g["p"]: g for g in minima_convergence_check(disk_study)}
    for p, g in gaps.items():
        assert g["gap_a"] <= 20 * SolverConfig().tol_for(p)
    assert gaps[128]["gap_b"] < gaps[16]["gap_b"]


def test_study_is_reproducible(disk_study):
    again = run_asymptotic_study(DomainSpec("disk"), 1 / 16)
    assert json.dumps(plain(again.to_dict())) == json.dumps(plain(disk_study.to_dict()))
    assert build_verdict(again) == build_verdict(disk_study)


def test_round_trip_and_schemas(disk_study):
    doc = plain(disk_study.to_dict())
    jsonschema.validate(doc, load_schema("sweep"))
    back = SweepResult.from_dict(json.loads(json.dumps(doc)))
    assert back.records == doc["records"]
    v1, v2 = build_verdict(disk_study), build_verdict(back)
    assert plain(v1) == plain(v2)
    jsonschema.validate(plain(v1), load_schema("verdict"))
    assert "1/p" in v1["extrapolation_model"]
    names = [c["name"] for c in v1["checks"]]
    assert names == ["all_converged", "inradius_extrapolation", "root_bound",
                     "cone_quotient_bound", "primal_value", "divergence_residual",
                     "concentration", "profile_bound", "ray_profile", "transport_gap"]


def test_from_dict_rejects_unsorted(disk_study):
    doc = plain(disk_study.to_dict())
    doc["records"] = doc["records"][::-1]
    with pytest.raises(ValueError):
        SweepResult.from_dict(doc)


def test_failed_exponent_is_recorded_and_sweep_continues():
    cfg = SolverConfig(max_iters=1, grad_tol=1e-14)
    s = run_asymptotic_study(DomainSpec("rectangle"), 1 / 8, [2, 4, 8], cfg)
    assert len(s.records) == 3
    assert not all(r["converged"] for r in s.records)
    v = build_verdict(s)
    assert not v["passed"]
    assert not next(c for c in v["checks"] if c["name"] == "all_converged")["passed"]


@pytest.mark.parametrize("spec,target", [(DomainSpec("rectangle"), 2.0),
                                         (DomainSpec("l_shape"), 1 / L_SHAPE_R1)])
def test_final_root_within_ten_percent(spec, target):
    s = run_asymptotic_study(spec, 1 / 32, keep_pairs=False)
    assert abs(s.records[-1]["root"] - target) <= 0.1 * target
    if spec.shape == "l_shape":
        assert abs(s.R1 - L_SHAPE_R1) <= s.h
    assert s.pairs == []


def test_cone_quotient_dominates(disk_study):
    # the cone is admissible, so its quotient bounds the minimum
    for r in disk_study.records:
        assert r["lambda_p"] <= r["cone_quotient"]
        assert math.isfinite(r["cone_quotient"])
