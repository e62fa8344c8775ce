import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccinls.anchors import AnchorSet
from ccinls.certify import verify_conditional_convexity
from ccinls.predictor import (CcModelConfig, CcPredictor, Hyperplane, InfeasiblePoint, Layout,
                              Prediction, RepairExhausted, build_cc_model, default_big_M,
                              elasticity, marginal_products, predict, predict_batch,
                              resolve_boundary_case)

from instances import random_anchors, random_query, without_dominated
from oracles import facet_oracle

TWO = AnchorSet(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
THREE = AnchorSet(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 0.1, 2.0]))
# the middle anchor is weakly dominated by the midpoint of the outer pair
BOUNDARY = AnchorSet(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]]), np.array([0.0, 0.5, 2.0]))


def test_variable_count_m2_s1():
    model = build_cc_model([0.5], TWO)
    assert model.n_vars == 30 == Layout(2, 1).n_vars
    assert model.binaries.size == 2


@given(st.integers(1, 6), st.integers(1, 3))
def test_binary_count_is_m(m, s):
    a = AnchorSet(np.random.default_rng(m * 10 + s).random((m, s)), np.arange(1.0, m + 1))
    assert build_cc_model(np.ones(s), a).binaries.size == m


def test_dual_rows_with_b_zero():
    model = build_cc_model([1.5], THREE)
    L = Layout(3, 1)
    M = default_big_M(THREE)
    for k in range(3):
        for j in range(3):
            r = model.row_names.index(f"D_lam_{k}_{j}")
            row = model.A[[r], :].toarray().ravel()
            assert row[L.b[j]] == pytest.approx(-M)
            assert row[L.vk(k)[0]] == -THREE.x[j, 0]
            assert row[L.uk(k)] == -THREE.alpha[j] and row[L.wk(k)] == -1.0
            assert model.row_sense[r] == "<=" and model.rhs[r] == 0.0


def test_big_m_floor():
    assert default_big_M(THREE) >= 10 * max(2.0, 2.0, 1.0)


def test_build_errors():
    with pytest.raises(ValueError):
        build_cc_model([np.nan], TWO)
    with pytest.raises(ValueError):
        build_cc_model([1.0, 2.0], TWO)


def test_config_validation():
    with pytest.raises(ValueError):
        CcModelConfig(big_M=0.0)
    with pytest.raises(ValueError):
        CcModelConfig(delta_mode="epsilon", delta=0.0)
    with pytest.raises(ValueError):
        CcModelConfig(formulation="kkt")


FORMULATIONS = ("single_level", "decomposed", "enumerate")


@pytest.mark.parametrize("formulation", FORMULATIONS)
def test_two_anchor_midpoint(formulation):
    p = predict([0.5], TWO, CcModelConfig(formulation=formulation))
    assert p.theta == pytest.approx(0.5)
    assert set(p.active_set) == {0, 1}


@pytest.mark.parametrize("formulation", FORMULATIONS)
@pytest.mark.parametrize("mode", ["lexicographic", "epsilon"])
def test_three_anchor_example(formulation, mode):
    p = predict([1.5], THREE, CcModelConfig(formulation=formulation, delta_mode=mode))
    assert p.theta == pytest.approx(1.05, abs=1e-7)
    assert set(p.active_set) == {1, 2}
    np.testing.assert_allclose(marginal_products(p), [1.9], atol=1e-7)
    np.testing.assert_allclose(elasticity(p), [1.9 * 1.5 / 1.05], atol=1e-6)
    assert elasticity(p)[0] == pytest.approx(2.714, abs=1e-3)


@pytest.mark.parametrize("formulation", FORMULATIONS)
def test_anchor_points_reproduce_levels(formulation):
    cfg = CcModelConfig(formulation=formulation)
    for k in range(THREE.m):
        assert predict(THREE.x[k], THREE, cfg).theta == pytest.approx(THREE.alpha[k], abs=1e-7)


def test_floor_and_error_policies():
    p = predict([-1.0], THREE)
    assert p.extrapolated and p.theta == THREE.alpha[0]
    np.testing.assert_array_equal(marginal_products(p), [0.0])
    with pytest.raises(InfeasiblePoint):
        predict([-1.0], THREE, CcModelConfig(infeasible_policy="error"))


@pytest.mark.parametrize("formulation", FORMULATIONS)
def test_boundary_case(formulation):
    cfg = CcModelConfig(formulation=formulation)
    p = predict([0.0, 1.5], BOUNDARY, cfg)
    assert p.theta == pytest.approx(facet_oracle(BOUNDARY.x, BOUNDARY.alpha, [0.0, 1.5]))
    assert p.theta == pytest.approx(1.25)


def test_boundary_repair_loop():
    cfg = CcModelConfig(conflict_rows=False)
    p = predict([0.0, 1.5], BOUNDARY, cfg)
    assert p.theta == pytest.approx(1.25)
    assert p.repair_rounds_used >= 1 and p.cuts
    with pytest.raises(RepairExhausted):
        predict([0.0, 1.5], BOUNDARY, CcModelConfig(conflict_rows=False, max_repair_rounds=0))


def test_no_good_cuts_accumulate():
    model = build_cc_model([1.5], THREE)
    once = resolve_boundary_case(model, [0, 2])
    twice = resolve_boundary_case(once, [1, 2])
    assert twice.n_rows == model.n_rows + 2
    row = once.A[[once.n_rows - 1], :].toarray().ravel()
    L = Layout(3, 1)
    assert row[L.b[0]] == row[L.b[2]] == 1.0 and row[L.b[1]] == 0.0
    assert once.row_sense[-1] == ">=" and once.rhs[-1] == 1.0


def test_marginal_product_and_elasticity_edge_cases():
    base = dict(lambda_=np.array([1.0]), active_set=(0,), selected=(0,), tau=np.zeros(1))
    p = Prediction(theta=2.0, hyperplane=Hyperplane(np.ones(2), 1.0, 0.0), x0=np.array([1.0, 1.0]), **base)
    np.testing.assert_array_equal(marginal_products(p), [1.0, 1.0])
    np.testing.assert_array_equal(elasticity(p, [0.0, 0.0]), [0.0, 0.0])
    flat = Prediction(theta=2.0, hyperplane=None, x0=np.array([3.0]), **base)
    np.testing.assert_array_equal(elasticity(flat), [0.0])
    zero = Prediction(theta=0.0, hyperplane=Hyperplane(np.ones(1), 1.0, 0.0), x0=np.ones(1), **base)
    with pytest.raises(ZeroDivisionError):
        elasticity(zero)


def test_degenerate_facet_flag():
    p = predict([2.0], THREE)
    assert p.degenerate_facet
    assert not predict([1.5], THREE).degenerate_facet


def test_batch():
    assert predict_batch([], THREE) == []
    pts = np.array([[0.5], [1.5], [2.0], [1.5]])
    got = [p.theta for p in predict_batch(pts, THREE)]
    assert got == [predict(x, THREE).theta for x in pts]
    assert got[1] == got[3]


def test_serialisation_and_dump(tmp_path):
    p = predict([1.5], THREE, CcModelConfig(dump_lp=str(tmp_path)))
    doc = json.loads(json.dumps(p.to_dict()))
    assert doc["theta"] == pytest.approx(1.05)
    assert {"hyperplane", "active_set", "tau", "repair_rounds_used", "extrapolated"} <= set(doc)
    dumped = list(tmp_path.glob("*.lp"))
    assert dumped and "SD" in dumped[0].read_text()


def _check_prediction(p, anchors, x0):
    if p.extrapolated:
        assert p.theta == anchors.alpha[0] and not p.active_set
        return
    assert np.all(p.tau <= 1e-7)
    lam = p.lambda_
    assert np.all(lam >= 0) and lam.sum() == pytest.approx(1.0)
    outside = np.setdiff1d(np.arange(anchors.m), p.active_set)
    assert np.all(lam[outside] == 0)
    assert np.all(lam @ anchors.x <= x0 + 1e-7)
    assert p.theta == pytest.approx(lam @ anchors.alpha, abs=1e-7)
    hp = p.hyperplane
    assert np.all(hp.v >= 1 - 1e-9) and hp.u >= 1 - 1e-9
    for j in p.active_set:
        assert abs(-hp.v @ anchors.x[j] + hp.u * anchors.alpha[j] + hp.u0) <= 1e-6 * max(1.0, hp.u)
    assert anchors.alpha[0] - 1e-9 <= p.theta <= anchors.alpha[-1] + 1e-9
    assert all(c.passed for c in verify_conditional_convexity(p.active_set, anchors))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_prediction_invariants(seed, snap):
    rng = np.random.default_rng(seed)
    a = random_anchors(rng, m_max=5, grid=4 if snap else None)
    x0 = random_query(rng, a)
    p = predict(x0, a)
    _check_prediction(p, a, x0)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_monotone_in_x0(seed):
    rng = np.random.default_rng(seed)
    a = random_anchors(rng, m_max=5)
    x = random_query(rng, a)
    x2 = x + rng.random(a.s) * 0.3
    pr = CcPredictor(a, CcModelConfig(formulation="enumerate"))
    assert pr.predict(x).theta <= pr.predict(x2).theta + 1e-6


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_interpolates_every_anchor(seed):
    rng = np.random.default_rng(seed)
    a = without_dominated(random_anchors(rng, m_max=5, grid=5))
    pr = CcPredictor(a)
    for k in range(a.m):
        assert pr.predict(a.x[k]).theta == pytest.approx(a.alpha[k], abs=1e-6)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_routes_agree_with_oracle(seed, snap):
    rng = np.random.default_rng(seed)
    a = random_anchors(rng, m_max=5, grid=3 if snap else None)
    x0 = random_query(rng, a)
    want = facet_oracle(a.x, a.alpha, x0)
    for f in FORMULATIONS:
        for mode in ("lexicographic", "epsilon"):
            p = predict(x0, a, CcModelConfig(formulation=f, delta_mode=mode))
            if want is None:
                assert p.extrapolated
            else:
                assert p.theta == pytest.approx(want, abs=1e-5 if mode == "epsilon" else 1e-6)


def test_embedded_backend_matches_highs():
    rng = np.random.default_rng(21)
    for _ in range(6):
        a = random_anchors(rng, m_max=3)
        x0 = random_query(rng, a)
        e = predict(x0, a, CcModelConfig(backend="embedded"))
        h = predict(x0, a, CcModelConfig(backend="highs"))
        assert e.theta == pytest.approx(h.theta, abs=1e-6)
        assert e.extrapolated == h.extrapolated
