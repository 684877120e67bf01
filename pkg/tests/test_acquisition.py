import math

import numpy as np
import pytest

from hlftune import seeding
from hlftune.acquisition import (AcqSpec, DycorsParams, DycorsState, acquisition_values, dycors_candidates, ei, mpi,
                                 perturbation_probability, propose_dycors, propose_surrogate, ucb, update_dycors)
from hlftune.errors import ModelUnavailable, NoIncumbent
from hlftune.surrogate import GpHyperparams, build


def test_ei_at_standard_normal_is_phi0():
    assert abs(ei(0.0, 1.0, 0.0, 0.0) - 1 / math.sqrt(2 * math.pi)) < 1e-9


def _mc_standard_errors(mu, var, c, n):
    """True SEs of the n-sample means of max(Y - c, 0) and 1{Y > c}."""
    s = math.sqrt(var)
    a = mu - c
    z = a / s
    Phi = 0.5 * math.erfc(-z / math.sqrt(2))
    phi = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    m1 = a * Phi + s * phi
    m2 = (a * a + var) * Phi + a * s * phi
    return math.sqrt(max(m2 - m1 * m1, 0.0) / n), math.sqrt(Phi * (1 - Phi) / n)


def test_ei_and_mpi_match_monte_carlo():
    g = np.random.default_rng(0)
    n = 1_000_000
    for _ in range(100):
        mu, var = g.normal(), float(np.exp(g.uniform(-3, 1)))
        best, xi = g.normal(), float(g.uniform(0, 0.2))
        Y = mu + math.sqrt(var) * g.standard_normal(n)
        se_ei, se_pi = _mc_standard_errors(mu, var, best + xi, n)
        assert abs(ei(mu, var, best, xi) - np.maximum(Y - best - xi, 0.0).mean()) <= 3 * se_ei + 1e-15
        assert abs(mpi(mu, var, best, xi) - (Y > best + xi).mean()) <= 3 * se_pi + 1e-15


def test_monte_carlo_z_scores_are_standard_normal():
    # the 3-SE check alone fails by chance ~40% of the time over 200 comparisons
    g = np.random.default_rng(99)
    n = 200_000
    zs = []
    for _ in range(300):
        mu, var = g.normal(), float(np.exp(g.uniform(-3, 1)))
        c = g.normal() + g.uniform(0, 0.2)
        Y = mu + math.sqrt(var) * g.standard_normal(n)
        se_ei, se_pi = _mc_standard_errors(mu, var, c, n)
        if se_ei > 0 and se_pi > 0:
            zs.append((ei(mu, var, c) - np.maximum(Y - c, 0.0).mean()) / se_ei)
            zs.append((mpi(mu, var, c) - (Y > c).mean()) / se_pi)
    zs = np.array(zs)
    assert abs(zs.mean()) < 0.2
    assert 0.8 < zs.std() < 1.2


def test_zero_variance_limits():
    assert ei(2.0, 0.0, 1.0) == 1.0 and ei(0.5, 0.0, 1.0) == 0.0
    assert mpi(2.0, 0.0, 1.0) == 1.0 and mpi(0.5, 0.0, 1.0) == 0.0
    assert ucb(1.0, 4.0, 0.5) == 2.0


def test_acq_spec_validation():
    with pytest.raises(ValueError):
        AcqSpec("PI")
    with pytest.raises(ValueError):
        AcqSpec("EI", xi=-1)


def _model_1d(X, y, ls=0.1, noise=1e-8):
    X = np.asarray(X, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)
    return build(X, y, GpHyperparams([ls], 1.0, noise, float(y.mean())))


def test_ei_proposal_lands_in_the_gap():
    model = _model_1d([0.1, 0.9], [1.0, 1.0])
    grid = np.linspace(0, 1, 2001)[:, None]
    vals = acquisition_values(model, grid, AcqSpec("EI"), 1.0)
    gap = grid[vals > 0.5 * vals.max(), 0]
    x = propose_surrogate(model, AcqSpec("EI"), [0.0], [1.0], np.random.default_rng(0))
    assert 0.1 < x[0] < 0.9 and gap.min() - 1e-3 <= x[0] <= gap.max() + 1e-3


def test_ucb_kappa_zero_goes_to_best_point():
    xs = [0.05, 0.3, 0.55, 0.8, 0.95]
    model = _model_1d(xs, [0.1, 0.4, 1.0, 0.5, 0.2], ls=0.2)
    x = propose_surrogate(model, AcqSpec("UCB", kappa=0.0), [0.0], [1.0], np.random.default_rng(1))
    grid = np.linspace(0, 1, 4001)[:, None]
    top = grid[np.argmax(acquisition_values(model, grid, AcqSpec("UCB", kappa=0.0), 0.0)), 0]
    assert abs(x[0] - top) < 0.02 and abs(x[0] - 0.55) < 0.05


def test_propose_surrogate_stays_in_box():
    g = np.random.default_rng(3)
    X = g.random((15, 4))
    model = build(X, X.sum(1), GpHyperparams(np.full(4, 0.5), 1.0, 1e-4, 2.0))
    lo, hi = np.full(4, 0.2), np.full(4, 0.6)
    for kind in ("EI", "MPI", "UCB"):
        x = propose_surrogate(model, AcqSpec(kind), lo, hi, g)
        assert np.all(x >= lo) and np.all(x <= hi)
    with pytest.raises(ModelUnavailable):
        propose_surrogate(None, AcqSpec("EI"), lo, hi, g)


def test_dycors_defaults():
    p = DycorsParams().resolved(20)
    assert p.p_init == 1.0 and p.n_cand == 1000 and p.fail_tol == 5
    p = DycorsParams().resolved(317)
    assert math.isclose(p.p_init, 20 / 317) and p.fail_tol == 30


def test_perturbation_probability_decays_to_floor():
    assert perturbation_probability(0, 100, 1.0, 10) == 1.0
    assert perturbation_probability(100, 100, 1.0, 10) == 0.1
    vals = [perturbation_probability(t, 100, 1.0, 10) for t in range(101)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_sigma_halves_after_fail_tol_failures():
    params = DycorsParams(fail_tol=3).resolved(5)
    s = DycorsState.start(params)
    for _ in range(3):
        s = update_dycors(s, False, params)
    assert s.sigma == 0.1 and s.n_fail == 0


def test_sigma_doubles_capped():
    params = DycorsParams(sigma_init=0.2).resolved(5)
    s = DycorsState(0.05)
    for _ in range(3):
        s = update_dycors(s, True, params)
    assert s.sigma == 0.1
    s = DycorsState(0.2)
    for _ in range(3):
        s = update_dycors(s, True, params)
    assert s.sigma == 0.2


def test_sigma_floor():
    params = DycorsParams(fail_tol=1, sigma_min=0.005).resolved(5)
    s = DycorsState(0.006)
    s = update_dycors(s, False, params)
    assert s.sigma == 0.005


def test_candidates_perturb_at_least_one_coordinate():
    g = seeding.rng(0, 1)
    inc = np.full(8, 0.5)
    cand, mask = dycors_candidates(inc, 0.0, 0.1, 200, np.zeros(8), np.ones(8), g)
    assert np.all(mask.sum(1) == 1)
    assert np.all((cand >= 0) & (cand <= 1))
    assert np.all((cand != inc).sum(1) <= 1)


def test_propose_dycors_weights_cycle_and_requires_incumbent():
    g = np.random.default_rng(0)
    X = g.random((10, 3))
    model = build(X, X[:, 0], GpHyperparams(np.full(3, 0.5), 1.0, 1e-4, 0.5))
    params = DycorsParams().resolved(3)
    s = DycorsState.start(params)
    weights = []
    for t in range(5):
        weights.append(s.weight())
        x, s = propose_dycors(model, X, X[0], params, s, g, t, 20, np.zeros(3), np.ones(3))
        assert np.all((x >= 0) & (x <= 1))
    assert weights == [0.3, 0.5, 0.8, 0.95, 0.3]
    with pytest.raises(NoIncumbent):
        propose_dycors(model, X, None, params, s, g, 0, 20, np.zeros(3), np.ones(3))


def test_high_weight_prefers_best_mean():
    g = np.random.default_rng(4)
    X = g.random((12, 2))
    model = build(X, X[:, 0], GpHyperparams(np.full(2, 0.5), 1.0, 1e-6, 0.5))
    params = DycorsParams(n_cand=500).resolved(2)
    s = DycorsState(0.2, n_proposals=3)  # weight 0.95
    x, _ = propose_dycors(model, X, np.array([0.5, 0.5]), params, s, g, 0, 20, np.zeros(2), np.ones(2))
    assert x[0] > 0.6
