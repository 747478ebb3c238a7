import numpy as np
import pytest

from dtsurv.data import event_table
from dtsurv.errors import AdmissibilityError
from dtsurv.model import ModelParams, curves
from dtsurv.simulation import (
    PAPER_BETA, CensoringSpec, CoefficientSpec, expected_cell_probabilities, generate, spec_from_json,
    spec_to_json, weekend_scenario,
)


def test_paper_coefficients():
    spec = CoefficientSpec.paper()
    np.testing.assert_allclose(spec.beta[0], [0.223, -1.099, -1.099, -0.916, -0.693], atol=5e-4)
    np.testing.assert_allclose(spec.beta[1], [0.000, -1.099, -1.386, -1.099, -0.693], atol=5e-4)
    t = np.arange(1, 31)
    np.testing.assert_allclose(spec.alpha[0], -1 - 0.3 * np.log(t), rtol=1e-15)
    np.testing.assert_allclose(spec.alpha[1], -1.75 - 0.15 * np.log(t), rtol=1e-15)
    assert (spec.M, spec.d, spec.p) == (2, 30, 5)
    assert len(PAPER_BETA) == 2


def test_spec_validation():
    with pytest.raises(ValueError):
        CoefficientSpec(np.zeros((2, 3)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        CensoringSpec("exponential")
    with pytest.raises(ValueError):
        CensoringSpec(censoring_prob=1.2)
    with pytest.raises(ValueError):
        generate(0, CoefficientSpec.paper())
    with pytest.raises(ValueError):
        generate(5, CoefficientSpec.paper(), covariate_rule="cauchy")


def test_deterministic_and_chunk_invariant():
    spec = CoefficientSpec.paper()
    a = generate(1003, spec, seed=42)
    b = generate(1003, spec, seed=42, chunk_size=17)
    c = generate(1003, spec, seed=43)
    for field in ("x", "j", "Z"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(a.Z, c.Z)
    # a prefix of the population is the same subjects
    head = generate(100, spec, seed=42)
    np.testing.assert_array_equal(head.Z, a.Z[:100])


def test_observation_invariants():
    ds, T, C = generate(5000, CoefficientSpec.paper(), seed=1, return_truth=True)
    assert ds.x.min() >= 1 and ds.x.max() <= ds.d + 1
    assert np.all(ds.x[ds.j > 0] <= ds.d)
    np.testing.assert_array_equal(ds.x, np.minimum(T, C))
    np.testing.assert_array_equal(ds.j > 0, T <= np.minimum(C, ds.d))
    assert np.all((ds.Z >= 0) & (ds.Z < 1))


def test_no_censoring():
    ds, T, C = generate(3000, CoefficientSpec.paper(), CensoringSpec("none"), seed=2, return_truth=True)
    assert np.all(C == ds.d + 1)
    np.testing.assert_array_equal(ds.j == 0, T == ds.d + 1)


def test_censoring_prob_semantics():
    spec = CoefficientSpec(np.full((1, 4), -50.0), np.zeros((1, 0)))
    ds, _, C = generate(40_000, spec, CensoringSpec(censoring_prob=0.8), seed=3, return_truth=True)
    assert np.all(ds.j == 0)
    counts = np.bincount(C, minlength=6)[1:]
    # finite draw w.p. 0.8 spread over 1..5, plus C = 5 w.p. 0.2
    expected = 40_000 * np.array([0.16, 0.16, 0.16, 0.16, 0.36])
    assert np.all(np.abs(counts - expected) < 4 * np.sqrt(expected))


def test_all_negative_alpha_censors_everyone():
    spec = CoefficientSpec(np.full((2, 5), -50.0), np.zeros((2, 2)))
    assert np.all(generate(500, spec, seed=0).j == 0)


def test_inadmissible_spec():
    spec = CoefficientSpec(np.array([[0.5, -3.0], [0.5, -3.0]]), np.zeros((2, 1)))
    with pytest.raises(AdmissibilityError) as err:
        generate(10, spec)
    assert err.value.t == 1


def test_covariate_rules():
    spec = CoefficientSpec(np.full((1, 3), -1.0), np.array([[0.5, 0.5]]))
    binary = generate(2000, spec, covariate_rule="binary", seed=0)
    assert set(np.unique(binary.Z)) == {0.0, 1.0}
    normal = generate(20_000, spec, covariate_rule="normal", seed=0)
    assert abs(normal.Z.mean()) < 0.03 and abs(normal.Z.std() - 1) < 0.03
    custom = generate(10, spec, covariate_rule=lambda u: 2 * u, seed=0)
    assert custom.Z.max() < 2


def test_paper_table_shape():
    ds = generate(50_000, CoefficientSpec.paper(), seed=0)
    table = event_table(ds)
    assert np.all(table.events[:, 0] > table.events[:, 1])
    # counts decay with t (smoothed over a few days)
    smooth = np.convolve(table.events[:, 0], np.ones(3) / 3, mode="valid")
    assert np.all(np.diff(smooth) < 0)


def test_cell_probabilities_point_mass():
    spec = CoefficientSpec(np.array([[-0.3]]), np.array([[1.0]]))
    lam = 1 / (1 + np.exp(0.3 - 0.5))
    for draws in (1, 10, 1000):
        cells = expected_cell_probabilities(spec, lambda u: np.full_like(u, 0.5), mc_draws=draws)
        assert cells.event_prob[0, 0] == pytest.approx(lam, rel=1e-15)
        assert cells.at_risk[0] == 1.0


def test_cell_probabilities_total():
    cells = expected_cell_probabilities(CoefficientSpec.paper(), mc_draws=20_000)
    assert abs(cells.event_prob.sum() + cells.survival_end - 1) < 1e-12
    with pytest.raises(ValueError):
        expected_cell_probabilities(CoefficientSpec.paper(), mc_draws=0)


def test_empirical_cell_fractions_match_population():
    """Per-cell n_tj / y_t pooled over 50 seeds vs. the covariate-averaged hazard.

    Without censoring, the expected number at risk at t is n E[S(t-1)] and the
    expected type-j events at t is n E[Pr(T = t, J = j)]; their ratio is the
    cell fraction. Each pooled fraction is compared to that ratio within three
    binomial standard errors.
    """
    spec = CoefficientSpec.paper(d=8)
    cells = expected_cell_probabilities(spec, mc_draws=400_000, seed=99)
    events = np.zeros((8, 2))
    at_risk = np.zeros(8)
    for seed in range(50):
        table = event_table(generate(2000, spec, CensoringSpec("none"), seed=seed))
        events += table.events
        at_risk += table.at_risk
    frac = events / at_risk[:, None]
    target = cells.hazard.T
    se = np.sqrt(target * (1 - target) / at_risk[:, None])
    assert np.all(np.abs(frac - target) < 3 * se)


def test_cell_probabilities_match_generate():
    spec = CoefficientSpec.paper(d=5)
    cells = expected_cell_probabilities(spec, mc_draws=200_000, seed=1)
    ds = generate(200_000, spec, CensoringSpec("none"), seed=5)
    table = event_table(ds)
    emp = table.events / ds.n
    se = np.sqrt(cells.event_prob.T * (1 - cells.event_prob.T) / ds.n) * np.sqrt(2)
    assert np.all(np.abs(emp - cells.event_prob.T) < 4 * se)
    assert abs((ds.j == 0).mean() - cells.survival_end) < 4 * np.sqrt(cells.survival_end / ds.n)


def test_curves_consistent_with_cells():
    spec = CoefficientSpec.paper(d=4)
    Z = np.random.default_rng(0).random((1000, 5))
    c = curves(ModelParams(spec.alpha, spec.beta), Z)
    cells = expected_cell_probabilities(spec, mc_draws=1000, seed=0)
    np.testing.assert_allclose(cells.event_prob, c.event_prob.mean(axis=0), rtol=1e-12)


def test_weekend_scenario():
    ds = weekend_scenario(1000, seed=7)
    table = event_table(ds)
    assert ds.d == 22 and ds.grid.labels[-1] == "22+"
    for t in (7, 14, 21):
        assert table.events[t - 1, 0] == 0
    assert np.all(table.events[:, 1] > 0)
    again = weekend_scenario(1000, seed=7)
    np.testing.assert_array_equal(again.x, ds.x)


def test_spec_json_round_trip():
    spec = CoefficientSpec.paper(d=12)
    text = spec_to_json(spec, CensoringSpec("none", 0.5), "normal", seed=17)
    back, cens, rule, seed = spec_from_json(text)
    np.testing.assert_array_equal(back.alpha, spec.alpha)
    np.testing.assert_array_equal(back.beta, spec.beta)
    assert cens == CensoringSpec("none", 0.5) and rule == "normal" and seed == 17
    with pytest.raises(ValueError):
        spec_from_json(text.replace('"d": 12', '"d": 13'))
    with pytest.raises(ValueError):
        spec_from_json(text.replace('"normal"', '"lognormal"'))
