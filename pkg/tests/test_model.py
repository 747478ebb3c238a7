import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtsurv.errors import AdmissibilityError
from dtsurv.model import (
    ModelParams, TimeGrid, cif, curves, event_probability, expit, hazard, marginal_event_probability,
    overall_survival, predict_curves,
)
from dtsurv.simulation import CoefficientSpec

import oracles

# independently evaluated to 20 digits
EXPIT_MINUS_ONE = 0.26894142136999512075


def random_params(rng, M=None, d=None, p=None):
    M = M or int(rng.integers(1, 4))
    d = d or int(rng.integers(1, 8))
    p = p if p is not None else int(rng.integers(0, 4))
    return ModelParams(rng.uniform(-4.0, -1.2, (M, d)), rng.uniform(-0.5, 0.5, (M, p)))


def test_time_grid():
    grid = TimeGrid.range(3)
    assert grid.d == 3 and grid.labels == ("1", "2", "3")
    assert grid.label(2) == "2"
    with pytest.raises(ValueError):
        TimeGrid(("1", "1"))
    with pytest.raises(ValueError):
        TimeGrid(())


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(np.array([[np.nan]]), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        ModelParams(np.zeros((2, 3)), np.zeros((1, 2)))
    params = ModelParams(np.zeros((2, 3)), np.zeros((2, 0)))
    assert (params.M, params.d, params.p) == (2, 3, 0)
    with pytest.raises(ValueError):
        params.alpha[0, 0] = 1.0


def test_hazard_at_zero():
    params = ModelParams(np.zeros((1, 1)), np.zeros((1, 1)))
    assert hazard(params, 1, 1, [3.0]) == 0.5


def test_hazard_saturates_without_overflow():
    params = ModelParams(np.array([[700.0]]), np.zeros((1, 1)))
    with np.errstate(over="raise"):
        value = hazard(params, 1, 1, [0.0])
    assert 1 - 1e-12 < value < 1
    low = hazard(ModelParams(np.array([[-800.0]]), np.zeros((1, 1))), 1, 1, [0.0])
    assert 0 < low < 1e-300


def test_hazard_paper_intercept():
    spec = CoefficientSpec.paper()
    assert hazard(spec.params, 1, 1, np.zeros(5)) == pytest.approx(EXPIT_MINUS_ONE, rel=1e-15)


def test_hazard_index_errors():
    params = ModelParams(np.zeros((2, 3)), np.zeros((2, 1)))
    for j, t in [(0, 1), (3, 1), (1, 0), (1, 4)]:
        with pytest.raises(ValueError):
            hazard(params, j, t, [0.0])
    with pytest.raises(ValueError):
        hazard(params, 1, 1, [0.0, 1.0])
    with pytest.raises(ValueError):
        hazard(params, 1, 1, [np.inf])


def test_hazard_monotone_in_alpha_and_lin():
    a = np.linspace(-5, 5, 21)
    values = [hazard(ModelParams(np.array([[v]]), np.array([[1.0]])), 1, 1, [0.3]) for v in a]
    assert np.all(np.diff(values) > 0)
    params = ModelParams(np.array([[-1.0]]), np.array([[0.7]]))
    zs = np.linspace(-3, 3, 13)
    assert np.all(np.diff([hazard(params, 1, 1, [z]) for z in zs]) > 0)


def test_constant_hazard_closed_forms():
    q = 0.3
    params = ModelParams(np.full((1, 2), math.log(q / (1 - q))), np.zeros((1, 0)))
    np.testing.assert_allclose(overall_survival(params, []), [1, 1 - q, (1 - q) ** 2], rtol=1e-15)
    np.testing.assert_allclose(event_probability(params, 1, []), [q, q * (1 - q)], rtol=1e-15)


def test_no_event_limit():
    params = ModelParams(np.full((2, 5), -50.0), np.zeros((2, 2)))
    np.testing.assert_allclose(overall_survival(params, [0.2, 0.9]), 1.0, atol=1e-15, rtol=0)


def test_survival_matches_step_product():
    spec = CoefficientSpec.paper()
    z = np.full(5, 0.5)
    S = overall_survival(spec.params, z)
    oracle = oracles.loop_survival(spec.alpha.tolist(), spec.beta.tolist(), z.tolist())
    assert abs(S[-1] - oracle[-1]) < 1e-12
    np.testing.assert_allclose(S, oracle, atol=1e-12, rtol=0)
    assert S[0] == 1.0


def test_first_event_probability_equals_hazard(rng):
    params = random_params(rng)
    z = rng.uniform(size=params.p)
    for j in range(1, params.M + 1):
        assert event_probability(params, j, z)[0] == pytest.approx(hazard(params, j, 1, z), rel=1e-15)


def test_probabilities_match_enumeration(rng):
    for _ in range(50):
        params = random_params(rng)
        z = rng.uniform(-1, 1, size=params.p)
        probs, alive = oracles.enumerate_outcomes(params.alpha.tolist(), params.beta.tolist(), z.tolist())
        for j in range(1, params.M + 1):
            np.testing.assert_allclose(event_probability(params, j, z), probs[j - 1], atol=1e-14, rtol=0)
            np.testing.assert_allclose(cif(params, j, z), np.cumsum(probs[j - 1]), atol=1e-12, rtol=0)
            assert abs(marginal_event_probability(params, j, z) - sum(probs[j - 1])) < 1e-12
        assert abs(overall_survival(params, z)[-1] - alive) < 1e-12
        total = sum(marginal_event_probability(params, j, z) for j in range(1, params.M + 1))
        assert abs(total + overall_survival(params, z)[-1] - 1) < 1e-12


def test_cif_prefix_sums(rng):
    for _ in range(30):
        params = random_params(rng)
        z = rng.uniform(size=params.p)
        for j in range(1, params.M + 1):
            probs = event_probability(params, j, z)
            prefix, acc = [], 0.0
            for v in probs:
                acc += v
                prefix.append(acc)
            assert np.max(np.abs(cif(params, j, z) - prefix)) < 1e-12


def test_single_step_cif():
    params = ModelParams(np.array([[-0.4]]), np.array([[0.5]]))
    assert cif(params, 1, [1.0])[0] == pytest.approx(hazard(params, 1, 1, [1.0]), rel=1e-15)
    assert cif(params, 1, [1.0])[-1] == marginal_event_probability(params, 1, [1.0])


def test_symmetric_marginals():
    alpha = np.tile([-2.0, -2.5, -3.0], (2, 1))
    beta = np.tile([0.4, -0.2], (2, 1))
    params = ModelParams(alpha, beta)
    z = [0.3, 0.8]
    assert marginal_event_probability(params, 1, z) == marginal_event_probability(params, 2, z)


def test_admissibility_error_names_time():
    alpha = np.array([[-3.0, 0.5], [-3.0, 0.5]])
    params = ModelParams(alpha, np.zeros((2, 0)))
    with pytest.raises(AdmissibilityError) as err:
        overall_survival(params, [])
    assert err.value.t == 2
    assert "t=2" in str(err.value)


def test_curves_shapes(rng):
    params = random_params(rng, M=2, d=4, p=3)
    c = curves(params, rng.uniform(size=(5, 3)))
    assert c.hazard.shape == (5, 2, 4)
    assert c.survival.shape == (5, 5)


def test_predict_single_observation_reduces():
    params = ModelParams(np.array([[-0.7]]), np.array([[0.2]]))
    pred = predict_curves(params, [[1.5]])
    lam = hazard(params, 1, 1, [1.5])
    row = pred.iloc[0]
    np.testing.assert_allclose([row.hazard_1, row.prob_1, row.cif_1, row.survival], [lam, lam, lam, 1 - lam],
                               rtol=1e-15)


def test_predict_matches_direct_calls(rng):
    params = random_params(rng, M=2, d=5, p=2)
    z = rng.uniform(size=2)
    pred = predict_curves(params, z)
    assert list(pred.t) == [1, 2, 3, 4, 5]
    for j in (1, 2):
        np.testing.assert_allclose(pred[f"prob_{j}"], event_probability(params, j, z), rtol=1e-15)
        np.testing.assert_allclose(pred[f"cif_{j}"], cif(params, j, z), rtol=1e-15)
        np.testing.assert_allclose(pred[f"hazard_{j}"], [hazard(params, j, t, z) for t in range(1, 6)], rtol=1e-15)
    np.testing.assert_allclose(pred["survival"], overall_survival(params, z)[1:], rtol=1e-15)


def test_predict_duplicates_and_order(rng):
    params = random_params(rng, M=2, d=3, p=2)
    Z = np.array([[0.1, 0.2], [0.9, 0.4], [0.1, 0.2]])
    pred = predict_curves(params, Z)
    cols = [c for c in pred.columns if c not in ("obs", "t", "label")]
    first = pred[pred.obs == 0][cols].to_numpy()
    third = pred[pred.obs == 2][cols].to_numpy()
    np.testing.assert_array_equal(first, third)
    assert list(pred.obs) == [0, 0, 0, 1, 1, 1, 2, 2, 2]


def test_predict_dimension_mismatch():
    params = ModelParams(np.zeros((1, 2)) - 2, np.zeros((1, 3)))
    with pytest.raises(ValueError):
        predict_curves(params, np.zeros((2, 2)))


def test_predict_from_frame_uses_named_columns():
    from dtsurv.results import FittedModel
    params = ModelParams(np.array([[-1.0, -1.2]]), np.array([[0.5, -0.5]]))
    fitted = FittedModel(params=params, beta_se=np.ones((1, 2)), alpha_se=None, grid=TimeGrid(("a", "b+")),
                         covariate_names=("u", "v"), method="two-stage", loglik=[0.0], iterations=[1],
                         converged=[True])
    frame = pd.DataFrame({"v": [0.2], "other": [9.0], "u": [0.7]})
    pred = predict_curves(fitted, frame)
    assert list(pred.label) == ["a", "b+"]
    np.testing.assert_allclose(pred.hazard_1.iloc[0], hazard(params, 1, 1, [0.7, 0.2]))


def test_paper_subjects_monotone_curves():
    spec = CoefficientSpec.paper()
    rng = np.random.default_rng(3)
    pred = predict_curves(spec.params, rng.uniform(size=(3, 5)))
    for _, grp in pred.groupby("obs"):
        assert np.all(np.diff(grp.survival) <= 0)
        assert np.all(np.diff(grp.cif_1) >= 0) and np.all(np.diff(grp.cif_2) >= 0)
        last = grp.iloc[-1]
        assert abs(last.cif_1 + last.cif_2 + last.survival - 1) < 1e-10


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.lists(st.floats(-6, -1.2), min_size=2, max_size=12),
    beta=st.lists(st.floats(-1, 1), min_size=2, max_size=2),
    z=st.floats(-1, 1),
)
def test_identity_property(alpha, beta, z):
    d = len(alpha) // 2
    params = ModelParams(np.reshape(alpha[:2 * d], (2, d)), np.reshape(beta, (2, 1)))
    S = overall_survival(params, [z])
    F = [cif(params, j, [z]) for j in (1, 2)]
    assert abs(F[0][-1] + F[1][-1] + S[-1] - 1) < 1e-10
    assert np.all(np.diff(S) <= 0)
    assert all(np.all(np.diff(f) >= 0) for f in F)
    lam = [hazard(params, j, t, [z]) for j in (1, 2) for t in range(1, d + 1)]
    assert all(0 < v < 1 for v in lam)


def test_expit_bounds():
    v = expit(np.array([-1e4, 0.0, 1e4]))
    assert v[0] > 0 and v[-1] < 1 and v[1] == 0.5
