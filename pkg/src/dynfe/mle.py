"""Full-information MLE by nested fixed point for finite mixtures of types.

The outer parameter vector packs shared parameters, then each type's own
parameters (type-major), then ``K-1`` multinomial-logit weight indices with
type 1 as the base.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .histories import ChoiceHistory, as_histories
from .model import ConvergenceError, ModelSpec, panel_log_probs, solve_many, value_iteration

NFXP_TOL = 1e-12

Builder = Callable[[Mapping[str, float]], ModelSpec]


@dataclass(frozen=True)
class MixtureSpec:
    """``K`` types sharing ``shared`` parameters; ``builder`` maps a merged dict to a ModelSpec."""

    shared: Mapping[str, float]
    type_params: tuple[Mapping[str, float], ...]
    weights: tuple[float, ...]
    builder: Builder = field(compare=False)

    def __post_init__(self) -> None:
        if len(self.type_params) < 1:
            raise ValueError("need K >= 1 types")
        if len(self.weights) != len(self.type_params):
            raise ValueError("one weight per type")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie in the simplex")
        keys = {tuple(sorted(tp)) for tp in self.type_params}
        if len(keys) != 1:
            raise ValueError("all types must carry the same parameter names")

    @property
    def K(self) -> int:
        return len(self.type_params)

    @property
    def shared_names(self) -> tuple[str, ...]:
        return tuple(self.shared)

    @property
    def type_names(self) -> tuple[str, ...]:
        return tuple(self.type_params[0])

    def names(self) -> tuple[str, ...]:
        out = list(self.shared_names)
        for k in range(self.K):
            out += [f"{n}_{k + 1}" for n in self.type_names]
        out += [f"logit_w_{k + 1}" for k in range(1, self.K)]
        return tuple(out)

    def type_specs(self) -> list[ModelSpec]:
        return [self.builder({**self.shared, **tp}) for tp in self.type_params]

    def pack(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        with np.errstate(divide="ignore"):
            lw = np.log(w[1:]) - np.log(w[0])
        vals = list(self.shared.values())
        for tp in self.type_params:
            vals += [tp[n] for n in self.type_names]
        return np.array(vals + list(lw), dtype=float)

    def unpack(self, theta: np.ndarray) -> MixtureSpec:
        theta = np.asarray(theta, dtype=float)
        ns, nt, K = len(self.shared), len(self.type_names), self.K
        shared = dict(zip(self.shared_names, theta[:ns]))
        tps = tuple(
            dict(zip(self.type_names, theta[ns + k * nt: ns + (k + 1) * nt])) for k in range(K)
        )
        z = np.concatenate([[0.0], theta[ns + K * nt:]])
        w = np.exp(z - logsumexp(z))
        return replace(self, shared=shared, type_params=tps, weights=tuple(w))

    def ordered(self, key: str) -> MixtureSpec:
        """Relabel types in increasing order of parameter ``key``."""
        order = np.argsort([tp[key] for tp in self.type_params], kind="stable")
        return replace(
            self,
            type_params=tuple(self.type_params[i] for i in order),
            weights=tuple(self.weights[i] for i in order),
        )


def replacement_builder(
    dstar: int, delta: float = 0.95, shape: str = "linear", c0: float = 0.0
) -> Builder:
    """Binary keep(1)/replace(0) model with ``α(0) = -RC`` and keep cost ``β·f(min(d, d*))``.

    ``shape`` is ``linear`` (f = d), ``sqrt`` or ``square``.
    """
    f = {"linear": float, "sqrt": np.sqrt, "square": np.square}[shape]

    def build(p: Mapping[str, float]) -> ModelSpec:
        beta = float(p["beta"])
        return ModelSpec.build(
            1, delta, [-float(p["RC"]), -c0], beta_d=lambda y, d: -beta * float(f(d)), dstar=dstar,
            duration_on=True,
        )

    build.dstar = dstar  # type: ignore[attr-defined]
    build.shape_fn = f  # type: ignore[attr-defined]
    return build


def beta_d_star_factor(builder: Builder) -> float:
    """``-Δβ_d(d*) / β`` for a replacement builder: ``f(d*) - f(d*-1)``."""
    d, f = builder.dstar, builder.shape_fn  # type: ignore[attr-defined]
    return float(f(d) - f(d - 1))


class _PanelCache:
    """Distinct histories with multiplicities and their state-choice usage counts."""

    def __init__(self, data, spec: ModelSpec):
        cnt = Counter(as_histories(data))
        self.histories: list[ChoiceHistory] = list(cnt)
        self.weights = np.array([cnt[h] for h in self.histories], dtype=float)
        self.space = spec.space
        self.usage = self.space.usage_counts(self.histories)


def _per_history(templ: MixtureSpec, thetas: Sequence[np.ndarray], cache: _PanelCache, tol: float):
    """Mixture log-probability of each distinct history at each parameter vector: ``(P, n)``."""
    mixes = [templ.unpack(t) for t in thetas]
    specs = [s for m in mixes for s in m.type_specs()]
    if any(s.space.key() != cache.space.key() for s in specs):
        raise ValueError("all types must share the data's state grid")
    u = np.stack([s.payoff_matrix() for s in specs])
    dl = np.array([s.effective_delta for s in specs])
    try:
        _, lcp, it, res = value_iteration(u, cache.space.next_state, dl, tol)
    except ConvergenceError as e:
        k = e.problem % templ.K + 1
        raise ConvergenceError(f"inner solve failed for type {k}: {e}", e.residual, e.problem) from e
    lp = panel_log_probs(lcp, cache.usage)  # (n, P*K)
    K = templ.K
    out = np.empty((len(mixes), lp.shape[0]))
    for j, m in enumerate(mixes):
        with np.errstate(divide="ignore"):
            lw = np.log(np.asarray(m.weights))
        out[j] = logsumexp(lp[:, j * K:(j + 1) * K] + lw, axis=1)
    return out, it, float(res.max())


def mixture_loglik(
    spec: MixtureSpec, data, gradient: bool = True, step: float = 1e-6, tol: float = NFXP_TOL
) -> tuple[float, np.ndarray | None]:
    """``Σ_i ln Σ_k λ_k P(h_i | θ_k)`` and its central-difference gradient in the packed parameters."""
    cache = _PanelCache(data, spec.type_specs()[0])
    val, grad, _ = _loglik_and_scores(spec, spec.pack(), cache, step, tol, gradient)
    return val, grad


def _loglik_and_scores(templ, theta, cache, step, tol, gradient):
    theta = np.asarray(theta, dtype=float)
    if not gradient:
        lp, _, _ = _per_history(templ, [theta], cache, tol)
        return float(cache.weights @ lp[0]), None, None
    p = len(theta)
    pts = [theta]
    for j in range(p):
        e = np.zeros(p)
        e[j] = step
        pts += [theta + e, theta - e]
    lp, _, _ = _per_history(templ, pts, cache, tol)
    scores = np.stack([(lp[1 + 2 * j] - lp[2 + 2 * j]) / (2 * step) for j in range(p)], axis=1)
    return float(cache.weights @ lp[0]), cache.weights @ scores, scores


@dataclass
class MleFit:
    names: tuple[str, ...]
    estimates: np.ndarray
    cov: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    used_bhhh: bool
    spec: MixtureSpec
    n_obs: int
    derived: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def estimate(self, name: str) -> tuple[float, float]:
        if name in self.derived:
            return self.derived[name]
        if name not in self.names:
            raise KeyError(name)
        i = self.names.index(name)
        return float(self.estimates[i]), float(self.se[i])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "estimate": self.estimates.tolist(),
            "se": self.se.tolist(),
            "weights": list(self.spec.weights),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "used_bhhh": self.used_bhhh,
            "derived": {k: list(v) for k, v in self.derived.items()},
        }


class MleConvergenceError(RuntimeError):
    pass


def _bhhh(templ, theta, cache, step, tol_inner, tol, max_iter):
    n = cache.weights.sum()
    val, g, sc = _loglik_and_scores(templ, theta, cache, step, tol_inner, True)
    it = 0
    while np.max(np.abs(g)) / n > tol and it < max_iter:
        it += 1
        B = (sc * cache.weights[:, None]).T @ sc
        d = np.linalg.lstsq(B, g, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            cval, _, _ = _loglik_and_scores(templ, theta + t * d, cache, step, tol_inner, False)
            if cval > val:
                break
            t *= 0.5
        else:
            break
        theta = theta + t * d
        val, g, sc = _loglik_and_scores(templ, theta, cache, step, tol_inner, True)
    return theta, val, g, sc, it


def fit_mle_nfxp(
    data,
    template: MixtureSpec,
    start: np.ndarray | None = None,
    n_starts: int = 20,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 200,
    step: float = 1e-6,
    order_by: str | None = "RC",
) -> MleFit:
    """Quasi-Newton (BFGS) on the mean log-likelihood with NFXP numerical gradients.

    Convergence means the gradient of the mean log-likelihood has sup-norm at
    most ``tol``; otherwise BHHH iterations take over. Extra starts are drawn
    around ``start`` and the best local maximum is kept. Standard errors come
    from the outer product of per-history scores.
    """
    cache = _PanelCache(data, template.type_specs()[0])
    n = float(cache.weights.sum())
    x0 = template.pack() if start is None else np.asarray(start, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("start must be finite")
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.normal(scale=0.25 * (np.abs(x0) + 1.0)) for _ in range(n_starts - 1)]

    def negf(x):
        try:
            v, g, _ = _loglik_and_scores(template, x, cache, step, NFXP_TOL, True)
        except ConvergenceError:
            return np.inf, np.zeros_like(x)
        return -v / n, -g / n

    best = None
    for x in starts:
        r = optimize.minimize(negf, x, jac=True, method="BFGS", options={"gtol": tol, "maxiter": max_iter})
        if np.isfinite(r.fun) and (best is None or r.fun < best.fun):
            best = r
    if best is None:
        raise MleConvergenceError("no start produced a finite likelihood")
    theta = best.x
    val, g, sc = _loglik_and_scores(template, theta, cache, step, NFXP_TOL, True)
    iters = int(best.nit)
    used_bhhh = False
    if np.max(np.abs(g)) / n > tol:
        used_bhhh = True
        theta, val, g, sc, extra = _bhhh(template, theta, cache, step, NFXP_TOL, tol, max_iter)
        iters += extra
    fitted = template.unpack(theta)
    if order_by is not None and template.K > 1 and order_by in template.type_names:
        fitted = fitted.ordered(order_by)
        theta = fitted.pack()
        val, g, sc = _loglik_and_scores(template, theta, cache, step, NFXP_TOL, True)
    converged = bool(np.max(np.abs(g)) / n <= tol)
    B = (sc * cache.weights[:, None]).T @ sc
    try:
        cov = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(B)
    names = template.names()
    fit = MleFit(names, theta, cov, val, iters, converged, float(np.max(np.abs(g)) / n), used_bhhh, fitted, int(n))
    if "beta" in template.shared and hasattr(template.builder, "dstar"):
        i = names.index("beta")
        fct = beta_d_star_factor(template.builder)
        fit.derived["beta_d_star[1]"] = (float(theta[i] * fct), float(fit.se[i] * fct))
    return fit


# --- type distribution -----------------------------------------------------


@dataclass
class TypeDistribution:
    weights: np.ndarray
    residual_norm: float
    in_unit_interval: bool
    rank: int


def history_prob_matrix(grid: Sequence[ModelSpec], histories: Sequence[ChoiceHistory]) -> np.ndarray:
    """``L[h, k] = P(h | type k)`` for grid types sharing one state grid."""
    solved = solve_many(list(grid))
    sp = solved[0].space
    usage = sp.usage_counts(list(histories))
    lcp = np.stack([s.log_ccp_grid for s in solved])
    return np.exp(panel_log_probs(lcp, usage))


def recover_type_distribution(
    grid: Sequence[ModelSpec],
    histories: Sequence[ChoiceHistory],
    empirical: np.ndarray,
    nonneg: bool = False,
) -> TypeDistribution:
    """Least-squares projection ``f = (L'L)⁻¹ L'P`` of history frequencies on grid-type probabilities.

    ``histories`` should enumerate every history of one initial condition and
    ``empirical`` hold their frequencies. Negative weights are reported as is
    unless ``nonneg`` asks for NNLS.
    """
    L = history_prob_matrix(grid, histories)
    P = np.asarray(empirical, dtype=float)
    rank = int(np.linalg.matrix_rank(L))
    if rank < L.shape[1]:
        raise np.linalg.LinAlgError(f"rank-deficient projection: numerical rank {rank} < {L.shape[1]} grid types")
    if nonneg:
        f, _ = optimize.nnls(L, P)
    else:
        f = np.linalg.solve(L.T @ L, L.T @ P)
    resid = float(np.linalg.norm(L @ f - P))
    return TypeDistribution(f, resid, bool(np.all((f >= 0) & (f <= 1))), rank)
