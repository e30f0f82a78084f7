from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from dynfe.histories import ChoiceHistory
from dynfe.model import ModelSpec


@st.composite
def histories(draw, max_J: int = 3, max_T: int = 12) -> ChoiceHistory:
    J = draw(st.integers(1, max_J))
    T = draw(st.integers(1, max_T))
    y0 = draw(st.integers(0, J))
    d1 = 0 if y0 == 0 else draw(st.integers(1, 6))
    choices = draw(st.lists(st.integers(0, J), min_size=T, max_size=T))
    return ChoiceHistory(y0, d1, tuple(choices), J)


def random_history(rng: np.random.Generator, J: int, T: int) -> ChoiceHistory:
    y0 = int(rng.integers(0, J + 1))
    d1 = 0 if y0 == 0 else int(rng.integers(1, 6))
    return ChoiceHistory(y0, d1, tuple(int(c) for c in rng.integers(0, J + 1, size=T)), J)


def random_spec(
    rng: np.random.Generator,
    J: int,
    *,
    forward: bool,
    duration: bool,
    dstar: int | tuple[int, ...] = 3,
    delta: float = 0.9,
    beta_y: np.ndarray | None = None,
    beta_d: np.ndarray | None = None,
    alpha: np.ndarray | None = None,
) -> ModelSpec:
    """Random payoffs; pass ``beta_y``/``beta_d`` to hold structural parameters fixed across draws."""
    if beta_y is None:
        beta_y = rng.normal(size=(J + 1, J + 1))
        np.fill_diagonal(beta_y, 0.0)
    if beta_d is None:
        beta_d = rng.normal(size=(J + 1, 32))
    alpha = rng.normal(scale=1.5, size=J + 1) if alpha is None else alpha
    bd = beta_d
    return ModelSpec.build(
        J,
        delta if forward else 0.0,
        alpha,
        beta_y,
        (lambda y, d: float(bd[y, d])) if duration else None,
        dstar=dstar,
        forward_looking=forward,
        duration_on=duration,
    )


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
