"""Monte Carlo driver for the four replacement-cost DGPs and sample windows A/B/C."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cmle import fit_cmle, select_dstar_bic
from ..mle import MixtureSpec, fit_mle_nfxp, replacement_builder
from ..simulate import BETA, DELTA, DSTAR, SAMPLES, simulate_panel, benchmark_dgp, window_sample
from ..suffstats import Kind, Variant
from .hausman import hausman_from_estimates

ESTIMATORS = ("cmle_true", "cmle_bic", "mle_nouh", "mle_2types")
TESTS = {"no_uh": ("cmle_bic", "mle_nouh"), "two_types": ("cmle_bic", "mle_2types")}
LEVELS = (0.01, 0.05, 0.10)
WORKERS_ENV = "DYNFE_WORKERS"

# starting values at the truth (or its closest counterpart inside each model)
_NOUH_START = {1: 8.0, 2: 6.75, 3: 8.5, 4: 8.0}
_TWO_START = {1: (6.0, 10.0), 2: (4.5, 9.0), 3: (8.0, 9.0), 4: (7.5, 8.5)}


@dataclass(frozen=True)
class McConfig:
    dgp: int
    sample: str
    reps: int
    seed: int = 0
    estimators: tuple[str, ...] = ESTIMATORS
    N: int = 1000
    T_max: int = 25
    out: str | None = None

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.dgp not in (1, 2, 3, 4):
            raise ValueError("dgp must be 1..4")
        if self.sample not in SAMPLES:
            raise ValueError(f"sample must be one of {sorted(SAMPLES)}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")


def replication_seed(seed: int, r: int) -> int:
    return int(np.random.SeedSequence([seed, r]).generate_state(1, dtype=np.uint64)[0] >> 1)


def run_replication(cfg: McConfig, r: int) -> dict:
    """Estimates ``(beta, se)`` per estimator for replication ``r``; failures are recorded as NaN."""
    panel = simulate_panel(benchmark_dgp(cfg.dgp, cfg.N, cfg.T_max, replication_seed(cfg.seed, r)))
    data = window_sample(panel, *SAMPLES[cfg.sample])
    out: dict = {"rep": r, "errors": {}}
    build = replacement_builder(DSTAR, DELTA)
    for est in cfg.estimators:
        try:
            if est == "cmle_true":
                f = fit_cmle(data, Variant(Kind.FORWARD_DUR_ASSUMPTION2, 1, (DSTAR,)))
                b, se = f.estimate("beta_d_star[1]")
            elif est == "cmle_bic":
                sel = select_dstar_bic(data)
                b, se = sel.beta_at_selected, sel.se_at_selected
                out["dstar_bic"] = sel.selected
            elif est == "mle_nouh":
                tmpl = MixtureSpec({"beta": BETA}, ({"RC": _NOUH_START[cfg.dgp]},), (1.0,), build)
                b, se = fit_mle_nfxp(data, tmpl, n_starts=1).estimate("beta_d_star[1]")
            else:
                lo, hi = _TWO_START[cfg.dgp]
                tmpl = MixtureSpec({"beta": BETA}, ({"RC": lo}, {"RC": hi}), (0.5, 0.5), build)
                b, se = fit_mle_nfxp(data, tmpl, n_starts=1).estimate("beta_d_star[1]")
            if not (math.isfinite(b) and math.isfinite(se)):
                raise ValueError("non-finite estimate")
            out[est] = (b, se)
        except Exception as e:  # recorded and excluded from the summary
            out["errors"][est] = f"{type(e).__name__}: {e}"
            out[est] = (math.nan, math.nan)
    return out


@dataclass
class McSummary:
    config: McConfig
    estimators: dict[str, dict[str, float]]
    tests: dict[str, dict[str, float]]
    dstar_hit_rate: float | None
    replications: list[dict] = field(repr=False, default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for name, s in self.estimators.items():
            out.append({"kind": "estimator", "name": name, **s})
        for name, s in self.tests.items():
            out.append({"kind": "hausman", "name": name, **s})
        if self.dstar_hit_rate is not None:
            out.append({"kind": "dstar", "name": "bic_selects_true", "mean": self.dstar_hit_rate})
        return out

    def write_csv(self, path: str | Path) -> None:
        cols = ["kind", "name", "mean", "median", "sd", "rej_1pct", "rej_5pct", "rej_10pct", "n_ok", "n_failed"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, restval="")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _describe(x: np.ndarray) -> dict[str, float]:
    ok = x[np.isfinite(x)]
    return {
        "mean": float(ok.mean()) if ok.size else math.nan,
        "median": float(np.median(ok)) if ok.size else math.nan,
        "sd": float(ok.std(ddof=1)) if ok.size > 1 else math.nan,
        "n_ok": int(ok.size),
        "n_failed": int(x.size - ok.size),
    }


def summarize(cfg: McConfig, reps: list[dict]) -> McSummary:
    est = {e: _describe(np.array([r[e][0] for r in reps])) for e in cfg.estimators}
    tests = {}
    for name, (a, b) in TESTS.items():
        if a not in cfg.estimators or b not in cfg.estimators:
            continue
        res = [
            hausman_from_estimates(*r[a], *r[b])
            for r in reps
            if all(math.isfinite(v) for v in (*r[a], *r[b]))
        ]
        row = {f"rej_{round(lv * 100)}pct": (float(np.mean([h.p_value < lv for h in res])) if res else math.nan)
               for lv in LEVELS}
        row.update({"n_ok": len(res), "n_failed": len(reps) - len(res)})
        tests[name] = row
    hit = None
    if "cmle_bic" in cfg.estimators:
        sel = [r.get("dstar_bic") for r in reps if "dstar_bic" in r]
        hit = float(np.mean([d == DSTAR for d in sel])) if sel else math.nan
    return McSummary(cfg, est, tests, hit, reps)


def _work(args: tuple[McConfig, int]) -> dict:
    return run_replication(*args)


def run_monte_carlo(cfg: McConfig, workers: int | None = None) -> McSummary:
    """Run all replications; parallel across processes when ``DYNFE_WORKERS`` > 1."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(cfg, r) for r in range(cfg.reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            reps = list(ex.map(_work, jobs))
    else:
        reps = [_work(j) for j in jobs]
    summary = summarize(cfg, reps)
    if cfg.out:
        summary.write_csv(cfg.out)
    return summary
