"""Choice histories, the duration transition, and per-history summary statistics."""

from __future__ import annotations

import csv
import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class ChoiceHistory:
    """Initial condition ``(y0, d1)`` plus the observed choices ``y_1..y_T``.

    Alternative 0 is the baseline. Its duration is pinned to 0, so ``y0 == 0``
    requires ``d1 == 0`` and ``y0 > 0`` requires ``d1 >= 1``.
    """

    y0: int
    d1: int
    choices: tuple[int, ...]
    J: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "choices", tuple(int(c) for c in self.choices))
        if self.J < 1:
            raise ValueError(f"J must be >= 1, got {self.J}")
        if len(self.choices) < 1:
            raise ValueError("a history needs at least one period")
        for c in (self.y0, *self.choices):
            if not 0 <= c <= self.J:
                raise ValueError(f"choice {c} outside 0..{self.J}")
        if self.y0 == 0 and self.d1 != 0:
            raise ValueError("y0 = 0 requires d1 = 0")
        if self.y0 > 0 and self.d1 < 1:
            raise ValueError("y0 > 0 requires d1 >= 1")

    @property
    def T(self) -> int:
        return len(self.choices)

    @property
    def init(self) -> tuple[int, int]:
        return (self.y0, self.d1)

    @cached_property
    def durations(self) -> tuple[int, ...]:
        return duration_path(self)

    @cached_property
    def stats(self) -> StatisticsBundle:
        return compute_statistics(self)

    def compact(self) -> str:
        """Digit string of the choices, e.g. ``"110111"`` (J <= 9)."""
        if self.J > 9:
            raise ValueError("compact form needs J <= 9")
        return "".join(str(c) for c in self.choices)

    @classmethod
    def from_compact(cls, s: str, y0: int = 0, d1: int = 0, J: int = 1) -> ChoiceHistory:
        return cls(y0, d1, tuple(int(ch) for ch in s.strip()), J)


def duration_path(h: ChoiceHistory) -> tuple[int, ...]:
    """Return ``d_1..d_{T+1}`` under ``d' = 1{y = y_prev} d + 1`` for ``y > 0``, else 0."""
    out = [h.d1]
    prev, d = h.y0, h.d1
    for y in h.choices:
        d = (d + 1 if y == prev else 1) if y > 0 else 0
        out.append(d)
        prev = y
    return tuple(out)


@dataclass(frozen=True)
class StatisticsBundle:
    """Hits, dyads, state histograms and final-minus-initial indicators of one history.

    ``dyads[a, b]`` counts transitions from ``y_{t-1} = a`` to ``y_t = b``.
    The sparse maps are keyed by ``(y, d)`` and omit zeros.
    """

    J: int
    T: int
    hits: np.ndarray
    dyads: np.ndarray
    state_hist: Mapping[tuple[int, int], int]
    ext_hist: Mapping[tuple[int, int], int]
    delta_state: Mapping[tuple[int, int], int]
    delta_choice: np.ndarray = field(repr=False)

    def H(self, y: int, d: int) -> int:
        return self.state_hist.get((y, d), 0)

    def X(self, y: int, d: int) -> int:
        return self.ext_hist.get((y, d), 0)

    def delta(self, y: int, d: int | None = None) -> int:
        """``Δ(y)(d)`` when ``d`` is given, otherwise ``Δ(y)``."""
        if d is None:
            return int(self.delta_choice[y])
        return self.delta_state.get((y, d), 0)


def compute_statistics(h: ChoiceHistory) -> StatisticsBundle:
    J, T = h.J, h.T
    durs = h.durations
    hits = np.zeros(J + 1, dtype=np.int64)
    dyads = np.zeros((J + 1, J + 1), dtype=np.int64)
    state_hist: Counter[tuple[int, int]] = Counter()
    ext_hist: Counter[tuple[int, int]] = Counter()
    prev = h.y0
    for t, y in enumerate(h.choices):
        d = durs[t]
        hits[y] += 1
        dyads[prev, y] += 1
        state_hist[(prev, d)] += 1
        if y == prev:
            ext_hist[(y, d)] += 1
        prev = y
    delta_state: dict[tuple[int, int], int] = defaultdict(int)
    delta_state[(h.choices[-1], durs[-1])] += 1
    delta_state[(h.y0, h.d1)] -= 1
    delta_choice = np.zeros(J + 1, dtype=np.int64)
    delta_choice[h.choices[-1]] += 1
    delta_choice[h.y0] -= 1
    hits.setflags(write=False)
    dyads.setflags(write=False)
    delta_choice.setflags(write=False)
    return StatisticsBundle(
        J=J,
        T=T,
        hits=hits,
        dyads=dyads,
        state_hist=dict(state_hist),
        ext_hist=dict(ext_hist),
        delta_state={k: v for k, v in delta_state.items() if v != 0},
        delta_choice=delta_choice,
    )


class EnumerationTooLarge(ValueError):
    pass


def enumerate_histories(
    J: int, T: int, init: tuple[int, int] = (0, 0), cap: int = ENUMERATION_CAP
) -> list[ChoiceHistory]:
    """All ``(J+1)^T`` histories with the given initial condition, in lexicographic order."""
    size = (J + 1) ** T
    if size > cap:
        raise EnumerationTooLarge(f"enumeration too large: (J+1)^T = {size} exceeds cap {cap}")
    y0, d1 = init
    return [ChoiceHistory(y0, d1, seq, J) for seq in itertools.product(range(J + 1), repeat=T)]


def tally(histories: Iterable[ChoiceHistory]) -> Counter[ChoiceHistory]:
    """Multiplicity of each distinct history."""
    return Counter(histories)


def as_histories(data: object) -> list[ChoiceHistory]:
    """Accept a panel-like object (with ``.histories``) or a sequence of histories."""
    hs = getattr(data, "histories", data)
    return list(hs)  # type: ignore[arg-type]


# --- long-format CSV -------------------------------------------------------


def read_panel_csv(path: str | Path, J: int | None = None) -> list[ChoiceHistory]:
    """Read a long panel with columns ``id,t,y`` and an optional ``d``.

    A row with ``t = 0`` supplies ``y0``. When the ``d`` column is present the
    ``t = 1`` row supplies ``d1`` and every later duration is checked against the
    transition rule. Without it ``d1`` defaults to 0 if ``y0 = 0`` and 1 otherwise.
    Without a ``t = 0`` row ``y0`` defaults to 0. ``J`` defaults to the largest
    observed choice (at least 1).
    """
    rows: dict[str, list[tuple[int, int, int | None]]] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "t", "y"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"panel CSV missing columns: {sorted(missing)}")
        has_d = "d" in (reader.fieldnames or ())
        for r in reader:
            d = r.get("d") if has_d else None
            rows[r["id"]].append((int(r["t"]), int(r["y"]), int(d) if d not in (None, "") else None))
    if J is None:
        J = max(1, max(y for recs in rows.values() for _, y, _ in recs))
    out = []
    for pid, recs in rows.items():
        recs.sort()
        y0 = 0
        if recs[0][0] == 0:
            y0 = recs[0][1]
            recs = recs[1:]
        ts = [t for t, _, _ in recs]
        if ts != list(range(1, len(ts) + 1)):
            raise ValueError(f"id {pid}: periods must run 1..T without gaps")
        ds = [d for _, _, d in recs]
        if ds and ds[0] is not None:
            d1 = ds[0]
        else:
            d1 = 0 if y0 == 0 else 1
        h = ChoiceHistory(y0, d1, tuple(y for _, y, _ in recs), J)
        stored = [d for d in ds if d is not None]
        if stored and tuple(ds) != h.durations[:-1]:
            raise ValueError(f"id {pid}: stored durations violate the transition rule")
        out.append(h)
    return out


def write_panel_csv(histories: Sequence[ChoiceHistory], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "t", "y", "d"])
        for i, h in enumerate(histories):
            w.writerow([i, 0, h.y0, ""])
            for t, (y, d) in enumerate(zip(h.choices, h.durations), start=1):
                w.writerow([i, t, y, d])
