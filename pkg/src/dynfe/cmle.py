"""Conditional maximum likelihood for β* and BIC selection of the duration cutoff d*."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from .histories import ENUMERATION_CAP, ChoiceHistory, as_histories, enumerate_histories
from .suffstats import Variant, dstar_probe_pairs, s_vector, u_vector

log = logging.getLogger(__name__)


class NoIdentifyingVariation(ValueError):
    pass


@dataclass(frozen=True)
class ConditionalData:
    """Observed classes stacked member-by-member, ready for the class softmax.

    Members of class ``c`` occupy rows ``starts[c]:starts[c+1]`` of ``S``;
    ``counts`` holds how many observations sit on each member.
    """

    S: np.ndarray
    counts: np.ndarray
    starts: np.ndarray
    names: tuple[str, ...]
    n_obs: int
    n_dropped: int
    dropped_params: tuple[str, ...] = ()

    @property
    def n_classes(self) -> int:
        return len(self.starts)

    @property
    def class_id(self) -> np.ndarray:
        sizes = np.diff(np.append(self.starts, len(self.counts)))
        return np.repeat(np.arange(self.n_classes), sizes)

    @property
    def class_n(self) -> np.ndarray:
        return np.add.reduceat(self.counts, self.starts)

    @property
    def n_informative(self) -> int:
        return int(self.counts.sum())


@lru_cache(maxsize=256)
def _stratum_classes(v: Variant, J: int, T: int, y0: int, d1: int, dcap: int, cap: int):
    by_u: dict[tuple[int, ...], list[tuple[ChoiceHistory, tuple[int, ...]]]] = {}
    for h in enumerate_histories(J, T, (y0, d1), cap):
        by_u.setdefault(u_vector(v, h, dcap).values, []).append((h, s_vector(v, h, dcap).values))
    return by_u


def build_conditional_data(data, v: Variant, cap: int = ENUMERATION_CAP) -> ConditionalData:
    """Form U-classes within each ``(T, y0, d1)`` stratum and keep those with variation in S."""
    hs = as_histories(data)
    if not hs:
        raise NoIdentifyingVariation("empty panel")
    if any(h.J != v.J for h in hs):
        raise ValueError("variant and data disagree on J")
    counts = Counter(hs)
    dcap = max(h.T + h.d1 for h in hs)
    names = s_vector(v, hs[0], dcap).keys
    rows: list[tuple[int, ...]] = []
    n: list[float] = []
    starts: list[int] = []
    dropped = 0
    seen: set[tuple] = set()
    for h in sorted(counts, key=lambda x: (x.T, x.y0, x.d1, x.choices)):
        table = _stratum_classes(v, v.J, h.T, h.y0, h.d1, dcap, cap)
        u = u_vector(v, h, dcap).values
        ckey = (h.T, h.y0, h.d1, u)
        if ckey in seen:
            continue
        seen.add(ckey)
        members = table[u]
        svals = {s for _, s in members}
        obs = [counts.get(m, 0) for m, _ in members]
        if len(svals) < 2:
            dropped += sum(obs)
            continue
        starts.append(len(rows))
        rows.extend(s for _, s in members)
        n.extend(obs)
    if not rows:
        raise NoIdentifyingVariation("no identifying variation: every observed class is degenerate")
    S = np.array(rows, dtype=float)
    cnt = np.array(n, dtype=float)
    st = np.array(starts, dtype=np.intp)
    # keep only parameters that vary inside some class
    cid = np.repeat(np.arange(len(st)), np.diff(np.append(st, len(cnt))))
    first = S[st][cid]
    varies = np.any(S != first, axis=0)
    keep = np.flatnonzero(varies)
    dev = (S - first)[:, keep]
    rank = np.linalg.matrix_rank(dev) if dev.size else 0
    if rank < len(keep):
        raise NoIdentifyingVariation(
            f"within-class variation of S has rank {rank} < {len(keep)} parameters"
        )
    dropped_params = tuple(nm for nm, k in zip(names, varies) if not k)
    if dropped:
        log.info("dropped %d observations in classes without variation", dropped)
    return ConditionalData(
        S=S[:, keep],
        counts=cnt,
        starts=st,
        names=tuple(names[i] for i in keep),
        n_obs=len(hs),
        n_dropped=dropped,
        dropped_params=dropped_params,
    )


def _class_softmax(beta: np.ndarray, cd: ConditionalData):
    eta = cd.S @ beta
    cid = cd.class_id
    m = np.maximum.reduceat(eta, cd.starts)
    lse = m + np.log(np.add.reduceat(np.exp(eta - m[cid]), cd.starts))
    p = np.exp(eta - lse[cid])
    return eta, lse, p, cid


def conditional_loglik(beta: np.ndarray, cd: ConditionalData) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of ``Σ_i [S_i'β − ln Σ_{j in class(i)} exp(S_j'β)]``."""
    beta = np.asarray(beta, dtype=float)
    eta, lse, p, cid = _class_softmax(beta, cd)
    nc = cd.class_n
    value = float(cd.counts @ eta - nc @ lse)
    ES = np.add.reduceat(p[:, None] * cd.S, cd.starts)
    grad = cd.counts @ cd.S - nc @ ES
    w = nc[cid] * p
    hess = -((cd.S * w[:, None]).T @ cd.S - (ES * nc[:, None]).T @ ES)
    return value, grad, hess


def _opg(beta: np.ndarray, cd: ConditionalData) -> np.ndarray:
    _, _, p, cid = _class_softmax(beta, cd)
    ES = np.add.reduceat(p[:, None] * cd.S, cd.starts)
    sc = cd.S - ES[cid]
    return (sc * cd.counts[:, None]).T @ sc


@dataclass
class CmleFit:
    beta_star: np.ndarray
    names: tuple[str, ...]
    cov: np.ndarray
    loglik: float
    n_informative: int
    n_obs: int
    iterations: int
    grad_norm: float
    used_bhhh: bool = False
    dropped_params: tuple[str, ...] = ()

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def estimate(self, name: str) -> tuple[float, float]:
        if name not in self.names:
            raise KeyError(name)
        i = self.names.index(name)
        return float(self.beta_star[i]), float(self.se[i])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "estimate": self.beta_star.tolist(),
            "se": self.se.tolist(),
            "loglik": self.loglik,
            "n_informative": self.n_informative,
            "n_obs": self.n_obs,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "used_bhhh": self.used_bhhh,
            "dropped_params": list(self.dropped_params),
        }


class CmleConvergenceError(RuntimeError):
    pass


def maximize_conditional(
    cd: ConditionalData, start: np.ndarray | None = None, tol: float = 1e-8, max_iter: int = 200
) -> CmleFit:
    """Damped Newton with backtracking; BHHH direction whenever the Hessian is singular."""
    k = cd.S.shape[1]
    beta = np.zeros(k) if start is None else np.asarray(start, dtype=float).copy()
    used_bhhh = False
    val, g, H = conditional_loglik(beta, cd)
    it = 0
    while np.max(np.abs(g)) > tol:
        if it >= max_iter:
            raise CmleConvergenceError(
                f"CMLE did not converge in {max_iter} iterations (|grad|={np.max(np.abs(g)):.3e}); "
                "the likelihood may be maximised at infinity"
            )
        it += 1
        try:
            L = np.linalg.cholesky(-H)
            step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            used_bhhh = True
            step = np.linalg.lstsq(_opg(beta, cd), g, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            cval, cg, cH = conditional_loglik(cand, cd)
            if cval >= val - 1e-12 * abs(val) or t < 1e-10:
                break
            t *= 0.5
        beta, val, g, H = cand, cval, cg, cH
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        used_bhhh = True
        cov = np.linalg.pinv(_opg(beta, cd))
    cov = 0.5 * (cov + cov.T)
    return CmleFit(
        beta_star=beta,
        names=cd.names,
        cov=cov,
        loglik=val,
        n_informative=cd.n_informative,
        n_obs=cd.n_obs,
        iterations=it,
        grad_norm=float(np.max(np.abs(g))),
        used_bhhh=used_bhhh,
        dropped_params=cd.dropped_params,
    )


def fit_cmle(data, v: Variant, tol: float = 1e-8, max_iter: int = 200) -> CmleFit:
    """CMLE of the identified components of β* for variant ``v``.

    Covariance is the inverse of the negative summed Hessian, i.e. ``(1/N) J_N⁻¹``.
    """
    return maximize_conditional(build_conditional_data(data, v), tol=tol, max_iter=max_iter)


# --- d* selection ----------------------------------------------------------


def default_L(T: int) -> int:
    return (T - 1) // 2


def pair_counts(data, L: int | None = None) -> dict[int, tuple[int, int]]:
    """Pooled counts ``(#A_n, #B_n)`` for ``n = 2..L`` over binary histories starting at (0, 0).

    A stratum of horizon T contributes to ``n`` only when ``n <= (T-1)/2``.
    """
    hs = [h for h in as_histories(data) if h.J == 1 and h.init == (0, 0)]
    cnt = Counter(hs)
    Ts = sorted({h.T for h in hs})
    if not Ts:
        return {}
    Lmax = max(default_L(T) for T in Ts) if L is None else L
    out: dict[int, tuple[int, int]] = {}
    for n in range(2, Lmax + 1):
        a = b = 0
        for T in Ts:
            if n <= default_L(T):
                A, B = dstar_probe_pairs(n, T)
                a += cnt.get(A, 0)
                b += cnt.get(B, 0)
        out[n] = (a, b)
    return out


def _xlogy(x: float, y: float) -> float:
    return 0.0 if x == 0 else x * math.log(y)


def _pair_ll(a: int, b: int, free: bool) -> float:
    if not free:
        return (a + b) * math.log(0.5)
    m = a + b
    return 0.0 if m == 0 else _xlogy(a, a / m) + _xlogy(b, b / m)


def concentrated_loglik(data, dstar: int, L: int | None = None, counts: dict | None = None) -> float:
    """``ℓ(d*)``: pairs with ``n <= d*`` at their free optimum, pairs with ``n > d*`` at ν = 0."""
    pc = pair_counts(data, L) if counts is None else counts
    return float(sum(_pair_ll(a, b, n <= dstar) for n, (a, b) in pc.items()))


def bic_select(bic: dict[int, float], admissible: dict[int, bool] | None = None) -> int:
    """Argmax of BIC, ties to the smaller d*; inadmissible candidates are skipped."""
    cands = [d for d in sorted(bic) if admissible is None or admissible.get(d, True)]
    if not cands:
        raise NoIdentifyingVariation("no candidate d* has a finite pair estimate")
    best = cands[0]
    for d in cands[1:]:
        if bic[d] > bic[best]:
            best = d
    return best


@dataclass
class DstarSelection:
    """Concentrated likelihood and BIC per candidate cutoff.

    ``nu[n] = ln(#A_n / #B_n)`` estimates ``β_d(n) - β_d(n-1)``. The reported
    ``beta_at_selected`` is on the cost scale ``-ν̂(d̂*)``.
    """

    candidates: tuple[int, ...]
    loglik: dict[int, float]
    bic: dict[int, float]
    nu: dict[int, float]
    nu_se: dict[int, float]
    counts: dict[int, tuple[int, int]]
    admissible: dict[int, bool]
    N: int
    selected: int
    flagged: tuple[int, ...] = field(default=())

    @property
    def nu_at_selected(self) -> float:
        return self.nu[self.selected]

    @property
    def beta_at_selected(self) -> float:
        return -self.nu[self.selected]

    @property
    def se_at_selected(self) -> float:
        return self.nu_se[self.selected]

    def beta(self, d: int) -> tuple[float, float, float]:
        """``(β̂, se, two-sided p)`` at candidate ``d`` on the cost scale."""
        b, se = -self.nu[d], self.nu_se[d]
        p = 2 * stats.norm.sf(abs(b / se)) if np.isfinite(se) and se > 0 else float("nan")
        return b, se, float(p)

    def rows(self) -> list[dict]:
        out = []
        for d in self.candidates:
            b, se, p = self.beta(d)
            a_n, b_n = self.counts[d]
            out.append(
                {"dstar": d, "count_A": a_n, "count_B": b_n, "beta": b, "se": se, "p_value": p,
                 "loglik": self.loglik[d], "bic": self.bic[d], "admissible": self.admissible[d],
                 "selected": d == self.selected}
            )
        return out


def select_dstar_bic(data, L: int | None = None) -> DstarSelection:
    hs = as_histories(data)
    pc = pair_counts(hs, L)
    if L is None:
        L = max(pc) if pc else 1
    if L < 2:
        raise ValueError("need L >= 2 (probe pairs require T >= 5)")
    N = len(hs)
    cands = tuple(range(2, L + 1))
    ll = {d: concentrated_loglik(hs, d, counts=pc) for d in cands}
    bic = {d: ll[d] - (d / 2) * math.log(N) for d in cands}
    nu, nu_se, adm = {}, {}, {}
    for n in cands:
        a, b = pc.get(n, (0, 0))
        adm[n] = a > 0 and b > 0
        nu[n] = math.log(a / b) if adm[n] else float("nan")
        nu_se[n] = math.sqrt(1 / a + 1 / b) if adm[n] else float("nan")
    flagged = tuple(n for n in cands if pc.get(n, (0, 0)) == (0, 0))
    return DstarSelection(cands, ll, bic, nu, nu_se, {n: pc.get(n, (0, 0)) for n in cands},
                          adm, N, bic_select(bic, adm), flagged)
