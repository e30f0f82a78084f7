"""Structural-value oracles for pair contrasts and the sufficiency sweep, shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from conftest import random_spec
from dynfe.histories import ChoiceHistory, enumerate_histories
from dynfe.model import history_log_prob, solve_bellman, solve_many
from dynfe.suffstats import Kind, Variant, check_sufficiency, dstar_probe_pairs, group_histories


def contrast(spec, a: ChoiceHistory, b: ChoiceHistory) -> float:
    sol = solve_bellman(spec)
    return history_log_prob(sol, a) - history_log_prob(sol, b)


def btilde(spec, k: int, j: int) -> float:
    by = spec.beta_y
    return by[k, j] - by[0, j] - by[k, 0]


def gamma(spec, y: int, n: int) -> float:
    return spec.beta_d[y, min(n, spec.dstar[y])] - spec.beta_y[0, y] - spec.beta_y[y, 0]


def delta_beta_d(spec, y: int) -> float:
    c = spec.dstar[y]
    return spec.beta_d[y, c] - spec.beta_d[y, c - 1]


def duration_pair(y: int, n: int, J: int) -> tuple[ChoiceHistory, ChoiceHistory]:
    """``{0,0 | 0, y_{n+1}}`` against ``{0,0 | y_n, 0, y}``."""
    return (ChoiceHistory(0, 0, (0,) + (y,) * (n + 1), J), ChoiceHistory(0, 0, (y,) * n + (0, y), J))


def switch_pair(j: int, k: int, J: int) -> tuple[ChoiceHistory, ChoiceHistory]:
    """``{0 | 0, j, k}`` against ``{0 | j, 0, k}``."""
    return ChoiceHistory(0, 0, (0, j, k), J), ChoiceHistory(0, 0, (j, 0, k), J)


def identification_gaps(seed: int) -> dict[str, float]:
    """Largest |pair contrast - structural value| per formula over one random parameterization."""
    rng = np.random.default_rng(seed)
    gaps: dict[str, float] = {}

    def record(name: str, x: float) -> None:
        gaps[name] = max(gaps.get(name, 0.0), abs(x))

    # binary, myopic with duration: γ(n)
    spec = random_spec(rng, 1, forward=False, duration=True, dstar=9)
    for n in range(1, 7):
        record("gamma_binary", contrast(spec, *duration_pair(1, n, 1)) - gamma(spec, 1, n))
    # binary, forward with cutoff: Δβ_d(d*) from the symmetric pair, and the n > d* zeros
    for ds in (2, 3, 4):
        spec = random_spec(rng, 1, forward=True, duration=True, dstar=ds, delta=rng.uniform(0.5, 0.97))
        A, B = dstar_probe_pairs(ds, 2 * ds + 1)
        record("cutoff_step_binary", contrast(spec, A, B) - delta_beta_d(spec, 1))
        for T in (2 * ds + 1, 2 * ds + 4):
            A, B = dstar_probe_pairs(ds, T)
            record("probe_at_dstar", contrast(spec, A, B) - delta_beta_d(spec, 1))
        for n in range(ds + 1, ds + 4):
            record("probe_beyond_dstar", contrast(spec, *dstar_probe_pairs(n, 2 * n + 2)))
    # multinomial switching contrasts, myopic and forward without duration
    J = 3
    for forward in (False, True):
        spec = random_spec(rng, J, forward=forward, duration=False)
        for j in range(1, J + 1):
            for k in range(1, J + 1):
                record("switch_no_duration", contrast(spec, *switch_pair(j, k, J)) - btilde(spec, k, j))
    # multinomial myopic with duration: β̃_y(k, j) for j != k and γ(y, n)
    spec = random_spec(rng, J, forward=False, duration=True, dstar=(6, 7, 8))
    for j in range(1, J + 1):
        for k in range(1, J + 1):
            if j != k:
                record("switch_with_duration", contrast(spec, *switch_pair(j, k, J)) - btilde(spec, k, j))
        for n in range(1, 5):
            record("gamma_multinomial", contrast(spec, *duration_pair(j, n, J)) - gamma(spec, j, n))
    # multinomial forward with per-choice cutoffs: Δβ_d(y, d*_y)
    spec = random_spec(rng, J, forward=True, duration=True, dstar=(2, 3, 4), delta=rng.uniform(0.5, 0.97))
    for y in range(1, J + 1):
        c = spec.dstar[y]
        A, B = dstar_probe_pairs(c, 2 * c + 1, y=y, J=J)
        record("cutoff_step_multinomial", contrast(spec, A, B) - delta_beta_d(spec, y))
    return gaps


def _model_for(kind: Kind, J: int, T: int, dstar):
    forward = kind in (Kind.FORWARD_NO_DUR, Kind.FORWARD_DUR_UNRESTRICTED, Kind.FORWARD_DUR_ASSUMPTION2)
    duration = kind in (Kind.MYOPIC_DUR, Kind.FORWARD_DUR_UNRESTRICTED, Kind.FORWARD_DUR_ASSUMPTION2)
    cut = dstar if kind is Kind.FORWARD_DUR_ASSUMPTION2 else T + 1
    return forward, duration, cut


SUFFICIENCY_CASES = [
    (kind, J, T, ((3,) if J == 1 else (2, 3)) if kind is Kind.FORWARD_DUR_ASSUMPTION2 else None)
    for J, T in ((1, 7), (2, 5))
    for kind in Kind
]


def sufficiency_deviation(kind: Kind, J: int, T: int, dstar, draws: int = 20, seed: int = 0,
                          init: tuple[int, int] = (0, 0)) -> float:
    """Max within-class θ-deviation over ``draws`` random (α, δ) sharing one β."""
    rng = np.random.default_rng(seed)
    v = Variant(kind, J, dstar)
    forward, duration, cut = _model_for(kind, J, T, dstar)
    by = rng.normal(size=(J + 1, J + 1))
    np.fill_diagonal(by, 0.0)
    bd = rng.normal(size=(J + 1, 32))
    specs = [
        random_spec(rng, J, forward=forward, duration=duration, dstar=cut, beta_y=by, beta_d=bd,
                    delta=rng.uniform(0.3, 0.97))
        for _ in range(draws)
    ]
    sols = solve_many(specs)
    classes = group_histories(v, enumerate_histories(J, T, init))
    return max(check_sufficiency(v, c, sols[0], s) for s in sols[1:] for c in classes)
