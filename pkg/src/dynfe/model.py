"""Structural dynamic logit for one unobserved type: payoffs, Bellman fixed point, CCPs.

The state entering period t is ``(y_{t-1}, d_t)``. Durations of alternative
``y > 0`` are clamped at its cutoff ``d*_y`` because payoffs (and hence
values) no longer change past it, so each type's problem lives on the finite
grid ``{(0, 0)} ∪ {(y, d): 1 <= y <= J, 1 <= d <= d*_y}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .histories import ChoiceHistory

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, problem: int = 0):
        super().__init__(message)
        self.residual = residual
        self.problem = problem


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Payoff primitives of one type.

    ``alpha[y]`` is the intercept, ``beta_y[y, y_prev]`` the switching payoff and
    ``beta_d[y, d]`` (for ``d = 0..max(dstar)``) the duration payoff of staying
    with ``y``. ``dstar[y]`` is the cutoff for alternative ``y``; entry 0 is
    unused and stored as 0.
    """

    J: int
    delta: float
    alpha: np.ndarray
    beta_y: np.ndarray
    beta_d: np.ndarray
    dstar: tuple[int, ...]
    forward_looking: bool = True
    duration_on: bool = True

    def __post_init__(self) -> None:
        J = self.J
        alpha = _readonly(self.alpha)
        beta_y = _readonly(self.beta_y)
        beta_d = np.atleast_2d(np.array(self.beta_d, dtype=float))
        dstar = tuple(int(x) for x in self.dstar)
        if alpha.shape != (J + 1,):
            raise ValueError(f"alpha must have length {J + 1}")
        if beta_y.shape != (J + 1, J + 1):
            raise ValueError(f"beta_y must be {J + 1}x{J + 1}")
        if len(dstar) != J + 1 or any(x < 1 for x in dstar[1:]):
            raise ValueError("dstar needs one cutoff >= 1 per alternative 1..J (entry 0 unused)")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if np.any(np.diag(beta_y) != 0.0):
            raise ValueError("beta_y(y, y) must be 0")
        dmax = max(dstar[1:])
        if beta_d.shape != (J + 1, dmax + 1):
            raise ValueError(f"beta_d must be {J + 1}x{dmax + 1}")
        if np.any(beta_d[0] != 0.0):
            raise ValueError("beta_d(0, d) must be 0")
        for y in range(1, J + 1):
            if np.any(beta_d[y, dstar[y]:] != beta_d[y, dstar[y]]):
                raise ValueError(f"beta_d({y}, d) must be flat for d >= d*_{y} = {dstar[y]}")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta_y)) and np.all(np.isfinite(beta_d))):
            raise ValueError("payoffs must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta_y", beta_y)
        object.__setattr__(self, "beta_d", _readonly(beta_d))
        object.__setattr__(self, "dstar", (0, *dstar[1:]))

    @classmethod
    def build(
        cls,
        J: int,
        delta: float,
        alpha: Sequence[float],
        beta_y: np.ndarray | None = None,
        beta_d: Callable[[int, int], float] | None = None,
        dstar: int | Sequence[int] = 1,
        forward_looking: bool = True,
        duration_on: bool | None = None,
    ) -> ModelSpec:
        """Convenience constructor taking ``beta_d`` as a function of ``(y, d)``.

        The function is evaluated at ``min(d, d*_y)`` so flatness holds by construction.
        """
        ds = (0, *([int(dstar)] * J)) if np.isscalar(dstar) else (0, *(int(x) for x in dstar))
        dmax = max(ds[1:])
        table = np.zeros((J + 1, dmax + 1))
        if beta_d is not None:
            for y in range(1, J + 1):
                for d in range(dmax + 1):
                    table[y, d] = beta_d(y, min(d, ds[y]))
        if duration_on is None:
            duration_on = beta_d is not None
        by = np.zeros((J + 1, J + 1)) if beta_y is None else np.asarray(beta_y, dtype=float)
        return cls(J, delta, np.asarray(alpha, dtype=float), by, table, ds, forward_looking, duration_on)

    @property
    def effective_delta(self) -> float:
        return self.delta if self.forward_looking else 0.0

    @cached_property
    def space(self) -> StateSpace:
        ds = self.dstar if self.duration_on else (0,) + (1,) * self.J
        return StateSpace(self.J, ds)

    def payoff_matrix(self) -> np.ndarray:
        """Flow payoff ``u[s, y]`` of choosing ``y`` in grid state ``s``."""
        sp = self.space
        u = np.empty((sp.n_states, self.J + 1))
        for s, (yp, d) in enumerate(sp.states):
            for y in range(self.J + 1):
                if y == yp and y > 0:
                    extra = self.beta_d[y, min(d, self.dstar[y])] if self.duration_on else 0.0
                else:
                    extra = self.beta_y[y, yp]
                u[s, y] = self.alpha[y] + extra
        return u


class StateSpace:
    """Finite state grid with clamped durations and the deterministic transition."""

    def __init__(self, J: int, dstar: Sequence[int]):
        self.J = J
        self.dstar = tuple(int(x) for x in dstar)
        states = [(0, 0)] + [(y, d) for y in range(1, J + 1) for d in range(1, self.dstar[y] + 1)]
        self.states: tuple[tuple[int, int], ...] = tuple(states)
        self._index = {s: i for i, s in enumerate(states)}
        nxt = np.empty((len(states), J + 1), dtype=np.intp)
        for s, (yp, d) in enumerate(states):
            for y in range(J + 1):
                nxt[s, y] = self.index(y, self.next_duration(y, yp, d))
        self.next_state = nxt

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def d_max(self) -> int:
        return max(self.dstar[1:])

    @staticmethod
    def next_duration(y: int, y_prev: int, d: int) -> int:
        if y == 0:
            return 0
        return d + 1 if y == y_prev else 1

    def index(self, y_prev: int, d: int) -> int:
        if y_prev == 0:
            return 0
        return self._index[(y_prev, min(max(d, 1), self.dstar[y_prev]))]

    def key(self) -> tuple[int, tuple[int, ...]]:
        return (self.J, self.dstar)

    def usage_counts(self, histories: Sequence[ChoiceHistory]) -> np.ndarray:
        """Count matrix ``C[i, s*(J+1) + y]`` of visits to state ``s`` followed by choice ``y``."""
        width = self.J + 1
        C = np.zeros((len(histories), self.n_states * width))
        for i, h in enumerate(histories):
            prev, durs = h.y0, h.durations
            for t, y in enumerate(h.choices):
                C[i, self.index(prev, durs[t]) * width + y] += 1.0
                prev = y
        return C


def value_iteration(
    u: np.ndarray,
    next_state: np.ndarray,
    delta: np.ndarray | float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, int, np.ndarray]:
    """Successive approximation of ``V(s) = logsumexp_y [u(s, y) + δ V(next(s, y))]``.

    Batched over a leading axis: ``u`` is ``(K, S, Y)`` and ``delta`` is a scalar
    or ``(K,)``. Returns ``(V, log_ccp, iterations, residuals)``; ``residuals[k]``
    is the last sup-norm change of problem ``k``.
    """
    u = np.asarray(u, dtype=float)
    K = u.shape[0]
    dl = np.broadcast_to(np.asarray(delta, dtype=float), (K,))[:, None, None]
    V = np.zeros(u.shape[:2])
    res = np.full(K, np.inf)
    it = 0
    if np.all(dl == 0.0):
        W = u
        res[:] = 0.0
    else:
        while it < max_iter:
            it += 1
            W = u + dl * V[:, next_state]
            m = W.max(axis=2)
            Vn = m + np.log(np.exp(W - m[..., None]).sum(axis=2))
            res = np.abs(Vn - V).max(axis=1)
            V = Vn
            if res.max() <= tol:
                break
        else:
            bad = int(np.argmax(res))
            raise ConvergenceError(
                f"value iteration did not converge in {max_iter} iterations "
                f"(problem {bad}, residual {res[bad]:.3e})",
                float(res[bad]),
                bad,
            )
        W = u + dl * V[:, next_state]
    m = W.max(axis=2)
    lse = m + np.log(np.exp(W - m[..., None]).sum(axis=2))
    if np.all(dl == 0.0):
        V = lse
    return V, W - lse[..., None], it, res


@dataclass(frozen=True, eq=False)
class SolvedModel:
    """Fixed-point solution of one type.

    Tables are indexed by ``(y, d)`` for ``d = 0..d_max``; off-grid cells hold the
    clamped value. ``v[y, d]`` is the discounted continuation value of arriving in
    state ``(y, d)``, ``sigma[y_prev, d]`` is the integrated value (log-sum-exp of
    the choice-specific values) at state ``(y_prev, d)`` and
    ``ccp[y_prev, d, y]`` the choice probability.
    """

    spec: ModelSpec
    v: np.ndarray
    sigma: np.ndarray
    ccp: np.ndarray
    log_ccp_grid: np.ndarray
    residual: float
    iterations: int

    @property
    def space(self) -> StateSpace:
        return self.spec.space


def _tables(space: StateSpace, V: np.ndarray, log_ccp: np.ndarray, delta: float):
    J, dmax = space.J, space.d_max
    v = np.empty((J + 1, dmax + 1))
    sigma = np.empty((J + 1, dmax + 1))
    ccp = np.empty((J + 1, dmax + 1, J + 1))
    for y in range(J + 1):
        for d in range(dmax + 1):
            s = space.index(y, d)
            v[y, d] = delta * V[s]
            sigma[y, d] = V[s]
            ccp[y, d] = np.exp(log_ccp[s])
    for a in (v, sigma, ccp):
        a.setflags(write=False)
    return v, sigma, ccp


def solve_bellman(spec: ModelSpec, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolvedModel:
    return solve_many([spec], tol, max_iter)[0]


def solve_many(
    specs: Sequence[ModelSpec], tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> list[SolvedModel]:
    """Solve several types sharing one state grid in a single batched iteration."""
    if not specs:
        return []
    space = specs[0].space
    if any(s.space.key() != space.key() for s in specs):
        raise ValueError("batched solve needs a common state grid")
    u = np.stack([s.payoff_matrix() for s in specs])
    deltas = np.array([s.effective_delta for s in specs])
    V, log_ccp, it, res = value_iteration(u, space.next_state, deltas, tol, max_iter)
    out = []
    for k, s in enumerate(specs):
        v, sigma, ccp_tab = _tables(space, V[k], log_ccp[k], deltas[k])
        grid = log_ccp[k].copy()
        grid.setflags(write=False)
        out.append(SolvedModel(s, v, sigma, ccp_tab, grid, float(res[k]), it))
    return out


def ccp(solved: SolvedModel, y: int, state: tuple[int, int]) -> float:
    """``P(y | y_prev, d)``; ``d`` beyond the grid is clamped."""
    yp, d = state
    return float(np.exp(solved.log_ccp_grid[solved.space.index(yp, d), y]))


def history_log_prob(solved: SolvedModel, h: ChoiceHistory) -> float:
    if h.J != solved.spec.J:
        raise ValueError("history and model disagree on J")
    sp, lp = solved.space, solved.log_ccp_grid
    total, prev, durs = 0.0, h.y0, h.durations
    for t, y in enumerate(h.choices):
        total += lp[sp.index(prev, durs[t]), y]
        prev = y
    return total


def panel_log_probs(log_ccp_grids: np.ndarray, usage: np.ndarray) -> np.ndarray:
    """Vectorised history log-probabilities: ``usage (n, S*Y) @ log_ccp (K, S, Y)`` → ``(n, K)``."""
    K = log_ccp_grids.shape[0]
    return usage @ log_ccp_grids.reshape(K, -1).T
