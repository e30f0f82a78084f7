"""Synthetic panels from finite or normal replacement-cost mixtures, and sample windows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .histories import ChoiceHistory
from .mle import MixtureSpec, replacement_builder
from .model import ModelSpec, solve_many


@dataclass(frozen=True)
class NormalRC:
    """Continuous replacement-cost law: each individual draws ``RC ~ N(mu, sigma²)``."""

    mu: float
    sigma: float
    build: Callable[[float], ModelSpec]


@dataclass(frozen=True)
class DgpSpec:
    N: int
    T_max: int
    seed: int
    mixture: MixtureSpec | None = None
    rc_law: NormalRC | None = None
    init: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.N < 1 or self.T_max < 1:
            raise ValueError("N and T_max must be >= 1")
        if (self.mixture is None) == (self.rc_law is None):
            raise ValueError("give exactly one of mixture or rc_law")


@dataclass(frozen=True)
class Panel:
    """Simulated histories with the hidden type draw (type index or RC) per individual."""

    histories: tuple[ChoiceHistory, ...]
    types: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.histories)


def individual_stream(seed: int, i: int) -> np.random.Generator:
    """Counter-based substream for individual ``i``; independent of simulation order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))


def simulate_panel(dgp: DgpSpec) -> Panel:
    N, T = dgp.N, dgp.T_max
    U = np.empty((N, T))
    draws = np.empty(N)
    for i in range(N):
        g = individual_stream(dgp.seed, i)
        draws[i] = g.standard_normal() if dgp.rc_law is not None else g.random()
        U[i] = g.random(T)
    if dgp.rc_law is not None:
        law = dgp.rc_law
        rc = np.round(law.mu + law.sigma * draws, 6)
        uniq, type_of = np.unique(rc, return_inverse=True)
        specs = [law.build(float(r)) for r in uniq]
        hidden = rc
    else:
        mix = dgp.mixture
        assert mix is not None
        cum = np.cumsum(mix.weights)
        type_of = np.minimum(np.searchsorted(cum, draws, side="right"), mix.K - 1)
        specs = mix.type_specs()
        hidden = type_of.astype(float)
    solved = solve_many(specs)
    space = solved[0].space
    cum_ccp = np.cumsum(np.exp(np.stack([s.log_ccp_grid for s in solved])), axis=2)
    J = space.J
    y0, d1 = dgp.init
    prev = np.full(N, y0, dtype=np.int64)
    dur = np.full(N, d1, dtype=np.int64)
    state_of = np.vectorize(space.index, otypes=[np.intp])
    Y = np.empty((N, T), dtype=np.int64)
    for t in range(T):
        s = state_of(prev, dur)
        c = cum_ccp[type_of, s]  # (N, J+1)
        y = np.minimum((U[:, t][:, None] >= c).sum(axis=1), J)
        dur = np.where(y == 0, 0, np.where(y == prev, dur + 1, 1))
        prev = y
        Y[:, t] = y
    hs = tuple(ChoiceHistory(y0, d1, tuple(row), J) for row in Y.tolist())
    return Panel(hs, hidden, dgp.seed)


def window_sample(p: Panel, t_start: int, t_end: int) -> Panel:
    """Periods ``t_start..t_end``, re-rooted at the simulated state ``(y_{t_start-1}, d_{t_start})``."""
    out = []
    for h in p.histories:
        if not 1 <= t_start <= t_end <= h.T:
            raise ValueError(f"window {t_start}..{t_end} outside 1..{h.T}")
        y0 = h.y0 if t_start == 1 else h.choices[t_start - 2]
        d1 = h.durations[t_start - 1]
        out.append(ChoiceHistory(y0, d1, h.choices[t_start - 1:t_end], h.J))
    return Panel(tuple(out), p.types, p.seed)


SAMPLES = {"A": (1, 7), "B": (1, 14), "C": (8, 21)}

BETA, DSTAR, DELTA = 1.0, 3, 0.95


def benchmark_dgp(k: int, N: int = 1000, T_max: int = 25, seed: int = 0) -> DgpSpec:
    """DGPs 1-4: keep cost ``β·min(d, 3)`` with β = 1, δ = 0.95, replacement cost varies by DGP."""
    build = replacement_builder(DSTAR, DELTA)
    if k == 1:
        law = NormalRC(8.0, 2.0, lambda rc: build({"beta": BETA, "RC": rc}))
        return DgpSpec(N, T_max, seed, rc_law=law)
    rcs = {2: (4.5, 9.0), 3: (8.0, 9.0), 4: (8.0,)}[k]
    w = tuple(1.0 / len(rcs) for _ in rcs)
    mix = MixtureSpec({"beta": BETA}, tuple({"RC": r} for r in rcs), w, build)
    return DgpSpec(N, T_max, seed, mixture=mix)
