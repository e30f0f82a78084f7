from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_spec
from dynfe.histories import enumerate_histories
from dynfe.mle import replacement_builder
from dynfe.model import (
    ConvergenceError,
    ModelSpec,
    ccp,
    history_log_prob,
    solve_bellman,
    solve_many,
    value_iteration,
)
from dynfe.suffstats import dstar_probe_pairs


def dgp4_spec(rc: float = 8.0) -> ModelSpec:
    return replacement_builder(3, 0.95)({"beta": 1.0, "RC": rc})


def backward_induction(spec: ModelSpec, horizon: int = 500) -> dict:
    """Finite-horizon recursion on raw, unclamped durations; returns period-1 CCPs by state."""
    J = spec.J
    dmax = horizon + 2

    def payoff(yp, d, y):
        if y == yp and y > 0:
            return spec.alpha[y] + (spec.beta_d[y, min(d, spec.dstar[y])] if spec.duration_on else 0.0)
        return spec.alpha[y] + spec.beta_y[y, yp]

    def nxt(yp, d, y):
        return 0 if y == 0 else (d + 1 if y == yp else 1)

    states = [(0, 0)] + [(y, d) for y in range(1, J + 1) for d in range(1, dmax + 1)]
    V = {s: 0.0 for s in states}
    delta = spec.effective_delta
    for _ in range(horizon):
        newV, probs = {}, {}
        for yp, d in states:
            if d > dmax - 1:
                continue
            w = [payoff(yp, d, y) + delta * V[(y, nxt(yp, d, y))] for y in range(J + 1)]
            m = max(w)
            lse = m + math.log(sum(math.exp(x - m) for x in w))
            newV[(yp, d)] = lse
            probs[(yp, d)] = [math.exp(x - lse) for x in w]
        V = {**V, **newV}
        states = list(newV)
    return probs


def test_myopic_gives_softmax():
    rng = np.random.default_rng(0)
    spec = random_spec(rng, 2, forward=False, duration=True, dstar=2)
    sol = solve_bellman(spec)
    assert np.all(sol.v == 0.0)
    u = spec.payoff_matrix()
    for s, (yp, d) in enumerate(spec.space.states):
        e = np.exp(u[s] - u[s].max())
        np.testing.assert_allclose([ccp(sol, y, (yp, d)) for y in range(3)], e / e.sum(), rtol=1e-14)


def test_zero_payoffs():
    spec = ModelSpec.build(1, 0.95, [0.0, 0.0], beta_d=lambda y, d: 0.0, dstar=3)
    sol = solve_bellman(spec)
    np.testing.assert_allclose(sol.ccp, 0.5, atol=1e-14)
    np.testing.assert_allclose(sol.sigma, math.log(2) / 0.05, rtol=1e-9)


def test_logistic_closed_form():
    spec = ModelSpec.build(1, 0.0, [0.0, 0.4], beta_d=lambda y, d: 0.6 if d == 1 else 0.0, dstar=2,
                           forward_looking=False)
    assert ccp(solve_bellman(spec), 1, (1, 1)) == pytest.approx(math.e / (1 + math.e), abs=1e-12)
    sym = ModelSpec.build(1, 0.0, [0.0, 0.0], forward_looking=False)
    sol = solve_bellman(sym)
    assert all(ccp(sol, 1, s) == 0.5 for s in sym.space.states)


def test_dgp4_matches_backward_induction():
    spec = dgp4_spec()
    sol = solve_bellman(spec)
    oracle = backward_induction(spec)
    for (yp, d), p in oracle.items():
        if d <= 12:
            np.testing.assert_allclose(sol.ccp[yp, min(d, 3)], p, atol=1e-8)


def test_multinomial_matches_backward_induction():
    rng = np.random.default_rng(11)
    spec = random_spec(rng, 2, forward=True, duration=True, dstar=(2, 4), delta=0.9)
    sol = solve_bellman(spec)
    oracle = backward_induction(spec, 400)
    for (yp, d), p in oracle.items():
        if d <= 8:
            np.testing.assert_allclose(np.exp(sol.log_ccp_grid[spec.space.index(yp, d)]), p, atol=1e-8)


def test_ccp_tables_are_probabilities():
    rng = np.random.default_rng(1)
    for J in (1, 2, 3):
        sol = solve_bellman(random_spec(rng, J, forward=True, duration=True, dstar=3))
        assert np.all(sol.ccp > 0) and np.all(sol.ccp < 1)
        np.testing.assert_allclose(sol.ccp.sum(axis=2), 1.0, atol=1e-14)


@pytest.mark.parametrize("J,T", [(1, 4), (1, 8), (2, 5)])
def test_enumeration_probabilities_sum_to_one(J, T):
    rng = np.random.default_rng(J * 10 + T)
    sol = solve_bellman(random_spec(rng, J, forward=True, duration=True, dstar=2))
    for init in [(0, 0), (1, 1), (1, 5)]:
        total = math.fsum(math.exp(history_log_prob(sol, h)) for h in enumerate_histories(J, T, init))
        assert abs(total - 1.0) <= 1e-12


def test_single_period_log_prob():
    sol = solve_bellman(dgp4_spec())
    h = enumerate_histories(1, 1, (1, 2))[1]
    assert history_log_prob(sol, h) == pytest.approx(math.log(ccp(sol, 1, (1, 2))), abs=1e-15)


def test_property1_no_duration_values_depend_on_choice_only():
    rng = np.random.default_rng(4)
    spec = random_spec(rng, 2, forward=True, duration=False)
    sol = solve_bellman(spec)
    for y in range(3):
        assert np.ptp(sol.v[y]) == 0.0


def test_property2_values_flat_beyond_cutoff():
    spec = dgp4_spec()
    sol = solve_bellman(spec)
    oracle = backward_induction(spec, 300)
    # the unclamped oracle shows the same CCP at every d >= d*
    ref = oracle[(1, 3)]
    for d in range(3, 40):
        np.testing.assert_allclose(oracle[(1, d)], ref, atol=1e-12)
    assert np.all(sol.v[1, 3:] == sol.v[1, 3])


def test_cutoff_pair_contrast_is_theta_invariant():
    build = replacement_builder(3, 0.95)
    A, B = dstar_probe_pairs(3, 7)
    # with d* = 3 this is the pair {1_{d*-1}, 0, 1_{d*+1}} against {1_{d*}, 0, 1_{d*}}
    assert A.compact() == "1101111" and B.compact() == "1110111"
    rng = np.random.default_rng(5)
    sols = solve_many([build({"beta": 1.0, "RC": rc}) for rc in rng.uniform(2, 14, 20)])
    diffs = np.array([history_log_prob(s, A) - history_log_prob(s, B) for s in sols])
    assert diffs.std(ddof=1) < 1e-9
    # Δβ_d(3) = β_d(1,3) - β_d(1,2) = -1
    assert diffs.mean() == pytest.approx(-1.0, abs=1e-9)


def test_monotone_in_replacement_payoff():
    rcs = np.linspace(2, 14, 25)
    sols = solve_many([dgp4_spec(rc) for rc in rcs])
    p0 = np.stack([s.ccp[..., 0] for s in sols])
    # larger RC means lower α(0)
    assert np.all(np.diff(p0, axis=0) <= 1e-15)


def test_residual_contracts():
    spec = dgp4_spec()
    u = spec.payoff_matrix()[None]
    res = []
    prev = np.inf
    for it in range(1, 200, 7):
        try:
            value_iteration(u, spec.space.next_state, 0.95, tol=1e-300, max_iter=it)
        except ConvergenceError as e:
            res.append(e.residual)
            assert e.residual <= prev + 1e-13
            prev = e.residual
    assert len(res) > 10 and res[-1] < res[0]


def test_nonconvergence_raises_with_residual():
    with pytest.raises(ConvergenceError, match="did not converge") as ei:
        solve_bellman(dgp4_spec(), max_iter=5)
    assert ei.value.residual > 0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(delta=1.0),
        dict(beta_y=np.ones((2, 2))),
        dict(alpha=[0.0, np.inf]),
    ],
)
def test_spec_validation(kwargs):
    base = dict(J=1, delta=0.9, alpha=[0.0, 0.0], beta_y=np.zeros((2, 2)))
    base.update(kwargs)
    with pytest.raises(ValueError):
        ModelSpec.build(base["J"], base["delta"], base["alpha"], base["beta_y"])


def test_duration_payoff_must_be_flat_past_cutoff():
    bd = np.array([[0, 0, 0], [0, 1, 2.0], [0, 1, 2.0]])
    with pytest.raises(ValueError, match="flat"):
        ModelSpec(2, 0.9, np.zeros(3), np.zeros((3, 3)), bd, (0, 1, 2))


def test_batched_solve_matches_individual():
    specs = [dgp4_spec(rc) for rc in (4.5, 8.0, 9.0)]
    for a, b in zip(solve_many(specs), specs):
        np.testing.assert_allclose(a.log_ccp_grid, solve_bellman(b).log_ccp_grid, atol=1e-10)
