"""Hausman comparison of a robust (CMLE) and an efficient-under-the-null (MLE) estimate."""

from __future__ import annotations

from dataclasses import dataclass

from scipy import stats


@dataclass(frozen=True)
class HausmanResult:
    statistic: float
    df: int
    p_value: float
    var_diff: float
    nonpositive_variance: bool

    def rejects(self, level: float) -> bool:
        return self.p_value < level


def hausman_from_estimates(b_robust: float, se_robust: float, b_eff: float, se_eff: float) -> HausmanResult:
    """``H = (b_C - b_M)² / (V_C - V_M)`` against χ²(1).

    A non-positive variance difference gives ``H = 0`` (p = 1) and sets the flag.
    """
    vd = se_robust**2 - se_eff**2
    if vd <= 0:
        return HausmanResult(0.0, 1, 1.0, vd, True)
    h = (b_robust - b_eff) ** 2 / vd
    return HausmanResult(h, 1, float(stats.chi2.sf(h, 1)), vd, False)


def hausman_test(robust, efficient, component: str) -> HausmanResult:
    """Compare one named component of two fitted estimators (anything with ``estimate(name)``)."""
    try:
        bc, sc = robust.estimate(component)
        bm, sm = efficient.estimate(component)
    except KeyError as e:
        raise ValueError(f"component {component!r} missing from a fit") from e
    return hausman_from_estimates(bc, sc, bm, sm)
