"""Sufficient statistics U, identifying statistics S, and U-equivalence classes.

Each model variant writes the history log-probability as ``U'g_θ + S'β*``.
Conditioning on U removes θ; the within-class variation of S identifies β*.

Canonical U layout: hits by y, then deltas by y, then histograms by (y, d),
then tail aggregates. Duration-indexed blocks run over ``d = 1..dcap``; the
default ``dcap = T + d1`` covers every duration a history can reach.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .histories import ChoiceHistory, StatisticsBundle
from .model import ModelSpec, SolvedModel, history_log_prob, solve_many


class Kind(enum.Enum):
    MYOPIC_NO_DUR = "MyopicNoDur"
    FORWARD_NO_DUR = "ForwardNoDur"
    MYOPIC_DUR = "MyopicDur"
    FORWARD_DUR_UNRESTRICTED = "ForwardDurUnrestricted"
    FORWARD_DUR_ASSUMPTION2 = "ForwardDurAssumption2"


@dataclass(frozen=True)
class Variant:
    kind: Kind
    J: int = 1
    dstar: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        needs = kind is Kind.FORWARD_DUR_ASSUMPTION2
        if needs != (self.dstar is not None):
            raise ValueError(f"{kind.value}: dstar must be given iff the duration cutoff is imposed")
        if self.dstar is not None:
            ds = (int(self.dstar),) * self.J if np.isscalar(self.dstar) else tuple(int(x) for x in self.dstar)
            if len(ds) != self.J or min(ds) < 1:
                raise ValueError("dstar needs one cutoff >= 1 per alternative 1..J")
            object.__setattr__(self, "dstar", ds)

    @property
    def binary(self) -> bool:
        return self.J == 1

    def cut(self, y: int) -> int:
        assert self.dstar is not None
        return self.dstar[y - 1]


@dataclass(frozen=True)
class StatVector:
    """Integer vector with a stable, named component layout."""

    keys: tuple[str, ...]
    values: tuple[int, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)


def _dcap(h: ChoiceHistory, dcap: int | None) -> int:
    return h.T + h.d1 if dcap is None else dcap


def _check(v: Variant, h: ChoiceHistory) -> StatisticsBundle:
    if v.J != h.J:
        raise ValueError(f"variant has J={v.J} but history has J={h.J}")
    return h.stats


def u_vector(v: Variant, h: ChoiceHistory, dcap: int | None = None) -> StatVector:
    st = _check(v, h)
    J, D = v.J, _dcap(h, dcap)
    keys: list[str] = []
    vals: list[int] = []

    def put(k: str, x: int) -> None:
        keys.append(k)
        vals.append(int(x))

    if v.kind in (Kind.MYOPIC_NO_DUR, Kind.FORWARD_NO_DUR):
        for y in range(1, J + 1):
            put(f"T[{y}]", st.hits[y])
        for y in range(1, J + 1):
            put(f"Delta[{y}]", st.delta(y))
    elif v.kind is Kind.MYOPIC_DUR:
        for y in range(1, J + 1):
            put(f"Delta[{y}]", st.delta(y))
        for y in range(1, J + 1):
            for d in range(1, D + 1):
                put(f"H[{y},{d}]", st.H(y, d))
    elif v.kind is Kind.FORWARD_DUR_UNRESTRICTED:
        for y in range(1, J + 1):
            for d in range(1, D + 1):
                put(f"Delta[{y},{d}]", st.delta(y, d))
        for y in range(1, J + 1):
            for d in range(1, D + 1):
                put(f"H[{y},{d}]", st.H(y, d))
    else:
        for y in range(1, J + 1):
            for d in range(1, v.cut(y)):
                put(f"Delta[{y},{d}]", st.delta(y, d))
        for y in range(1, J + 1):
            for d in range(1, v.cut(y)):
                put(f"H[{y},{d}]", st.H(y, d))
        for y in range(1, J + 1):
            c = v.cut(y)
            put(f"H[{y},>={c}]", sum(n for (yy, d), n in st.state_hist.items() if yy == y and d >= c))
            put(f"Delta[{y},>={c}]", sum(n for (yy, d), n in st.delta_state.items() if yy == y and d >= c))
    return StatVector(tuple(keys), tuple(vals))


def s_vector(v: Variant, h: ChoiceHistory, dcap: int | None = None) -> StatVector:
    """Identifying statistics; each key names the parameter it multiplies.

    ``btilde[y,y_prev]`` multiplies ``D(y_prev, y)``; ``gamma[y,d-1]`` multiplies
    ``Δ(y)(d)`` for ``d >= 2`` (``Δ(y)(1)`` is the baseline, since the ``Δ(y)(d)``
    sum to ``Δ(y)`` in U, so ``γ(y, 0) = 0``); ``beta_d_star[y]`` multiplies ``Δ(y)(d*_y)`` and equals
    ``-(β_d(y, d*_y) - β_d(y, d*_y - 1))``. For the unrestricted forward-looking
    duration model the ``gamma`` block is listed but lies in the span of U.
    """
    st = _check(v, h)
    J, D = v.J, _dcap(h, dcap)
    keys: list[str] = []
    vals: list[int] = []
    if v.kind in (Kind.MYOPIC_NO_DUR, Kind.FORWARD_NO_DUR):
        pairs = [(yp, y) for yp in range(1, J + 1) for y in range(1, J + 1)]
    elif J > 1:
        pairs = [(yp, y) for yp in range(1, J + 1) for y in range(1, J + 1) if y != yp]
    else:
        pairs = []
    for yp, y in pairs:
        keys.append(f"btilde[{y},{yp}]")
        vals.append(int(st.dyads[yp, y]))
    if v.kind in (Kind.MYOPIC_DUR, Kind.FORWARD_DUR_UNRESTRICTED):
        for y in range(1, J + 1):
            for d in range(2, D + 1):
                keys.append(f"gamma[{y},{d - 1}]")
                vals.append(st.delta(y, d))
    elif v.kind is Kind.FORWARD_DUR_ASSUMPTION2:
        for y in range(1, J + 1):
            keys.append(f"beta_d_star[{y}]")
            vals.append(st.delta(y, v.cut(y)))
    return StatVector(tuple(keys), tuple(vals))


@dataclass(frozen=True)
class EquivalenceClass:
    u: StatVector
    members: tuple[ChoiceHistory, ...]
    s: np.ndarray  # (m, dim S)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def has_variation(self) -> bool:
        return self.size > 1 and bool(np.any(self.s != self.s[0]))


def group_histories(
    v: Variant, hs: Iterable[ChoiceHistory], dcap: int | None = None
) -> list[EquivalenceClass]:
    """Partition histories sharing ``(J, T, y0, d1)`` into classes of equal U."""
    hs = list(dict.fromkeys(hs))
    if not hs:
        return []
    strata = {(h.J, h.T, h.y0, h.d1) for h in hs}
    if len(strata) > 1:
        raise ValueError(f"group_histories needs a single (J, T, y0, d1) stratum, got {sorted(strata)}")
    groups: dict[tuple[int, ...], list[ChoiceHistory]] = defaultdict(list)
    ukeys: dict[tuple[int, ...], StatVector] = {}
    for h in hs:
        u = u_vector(v, h, dcap)
        groups[u.values].append(h)
        ukeys[u.values] = u
    out = []
    for key in sorted(groups):
        members = tuple(groups[key])
        s = np.array([s_vector(v, m, dcap).values for m in members], dtype=float).reshape(len(members), -1)
        out.append(EquivalenceClass(ukeys[key], members, s))
    return out


def conditional_probs(model: ModelSpec | SolvedModel, members: Sequence[ChoiceHistory]) -> np.ndarray:
    """``P(h | U, θ)`` for each member of one class."""
    solved = model if isinstance(model, SolvedModel) else solve_many([model])[0]
    lp = np.array([history_log_prob(solved, h) for h in members])
    lp -= lp.max()
    p = np.exp(lp)
    return p / p.sum()


def check_sufficiency(
    v: Variant,
    cls: EquivalenceClass,
    theta1: ModelSpec | SolvedModel,
    theta2: ModelSpec | SolvedModel,
) -> float:
    """Largest gap in within-class conditional probabilities between two types.

    Already-solved models may be passed to avoid re-solving per class.
    """
    if any(getattr(t, "spec", t).J != v.J for t in (theta1, theta2)):
        raise ValueError("types and variant disagree on J")
    p1 = conditional_probs(theta1, cls.members)
    p2 = conditional_probs(theta2, cls.members)
    return float(np.max(np.abs(p1 - p2)))


def dstar_probe_pairs(n: int, T: int, y: int = 1, J: int = 1) -> tuple[ChoiceHistory, ChoiceHistory]:
    """``A_n = {0,0 | y_{n-1}, 0, y_{T-n}}`` and ``B_n = {0,0 | y_n, 0, y_{T-n-1}}``.

    At ``T = 2n + 1`` these are the symmetric pairs ``{y_{n-1},0,y_{n+1}}`` and
    ``{y_n,0,y_n}``. Longer horizons extend both with the same run of ``y``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if 2 * n + 1 > T:
        raise ValueError(f"horizon too short: probe pairs need 2n+1 <= T, got n={n}, T={T}")
    a = (y,) * (n - 1) + (0,) + (y,) * (T - n)
    b = (y,) * n + (0,) + (y,) * (T - n - 1)
    return ChoiceHistory(0, 0, a, J), ChoiceHistory(0, 0, b, J)
