"""Command-line entry point. Every subcommand takes ``--config``, ``--seed`` and ``--out``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

from ..cmle import fit_cmle, select_dstar_bic
from ..histories import read_panel_csv, write_panel_csv
from ..mle import MixtureSpec, fit_mle_nfxp, replacement_builder
from ..simulate import SAMPLES, simulate_panel, benchmark_dgp, window_sample
from ..suffstats import Kind, Variant
from .bus import bus_replication
from .config import load_config
from .hausman import hausman_from_estimates
from .montecarlo import ESTIMATORS, McConfig, run_monte_carlo


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _emit(obj: Any, out: str | None) -> None:
    text = json.dumps(_clean(obj), indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _require(cfg: dict, key: str) -> Any:
    if key not in cfg:
        raise SystemExit(f"config is missing required key {key!r}")
    return cfg[key]


def cmd_simulate(cfg: dict, seed: int, out: str | None) -> int:
    panel = simulate_panel(benchmark_dgp(int(cfg.get("dgp", 4)), int(cfg.get("N", 1000)), int(cfg.get("T_max", 25)), seed))
    if "sample" in cfg:
        panel = window_sample(panel, *SAMPLES[cfg["sample"]])
    elif "t_start" in cfg or "t_end" in cfg:
        panel = window_sample(panel, int(cfg.get("t_start", 1)), int(cfg.get("t_end", cfg.get("T_max", 25))))
    if out:
        write_panel_csv(panel.histories, out)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["id", "history", "y0", "d1"])
        for i, h in enumerate(panel.histories):
            w.writerow([i, h.compact(), h.y0, h.d1])
    return 0


def _variant(cfg: dict) -> Variant:
    kind = Kind(cfg.get("variant", "ForwardDurAssumption2"))
    J = int(cfg.get("J", 1))
    ds = cfg.get("dstar")
    if kind is Kind.FORWARD_DUR_ASSUMPTION2:
        ds = tuple(int(x) for x in str(ds if ds is not None else 3).split(","))
        ds = ds * J if len(ds) == 1 else ds
        return Variant(kind, J, ds)
    return Variant(kind, J)


def cmd_fit_cmle(cfg: dict, seed: int, out: str | None) -> int:
    data = read_panel_csv(_require(cfg, "data"), J=cfg.get("J"))
    _emit(fit_cmle(data, _variant(cfg)).to_dict(), out)
    return 0


def cmd_fit_mle(cfg: dict, seed: int, out: str | None) -> int:
    data = read_panel_csv(_require(cfg, "data"), J=1)
    build = replacement_builder(int(cfg.get("dstar", 3)), float(cfg.get("delta", 0.95)), cfg.get("shape", "linear"))
    rcs = [float(x) for x in str(cfg.get("rc_start", "8.0")).split(",")]
    tmpl = MixtureSpec({"beta": float(cfg.get("beta_start", 1.0))}, tuple({"RC": r} for r in rcs),
                       tuple(1.0 / len(rcs) for _ in rcs), build)
    fit = fit_mle_nfxp(data, tmpl, n_starts=int(cfg.get("n_starts", 20)), seed=seed)
    _emit(fit.to_dict(), out)
    return 0 if fit.converged else 2


def cmd_select_dstar(cfg: dict, seed: int, out: str | None) -> int:
    data = read_panel_csv(_require(cfg, "data"), J=1)
    sel = select_dstar_bic(data, cfg.get("L"))
    _emit({"N": sel.N, "selected": sel.selected, "beta_at_selected": sel.beta_at_selected,
           "se_at_selected": sel.se_at_selected, "rows": sel.rows()}, out)
    return 0


def cmd_hausman(cfg: dict, seed: int, out: str | None) -> int:
    h = hausman_from_estimates(*(float(_require(cfg, k)) for k in ("b_robust", "se_robust", "b_efficient", "se_efficient")))
    _emit(h.__dict__, out)
    return 0


def cmd_montecarlo(cfg: dict, seed: int, out: str | None) -> int:
    est = cfg.get("estimators", ",".join(ESTIMATORS))
    mc = McConfig(
        dgp=int(cfg.get("dgp", 1)),
        sample=str(cfg.get("sample", "A")),
        reps=int(cfg.get("reps", 200)),
        seed=seed,
        estimators=tuple(e.strip() for e in str(est).split(",")),
        N=int(cfg.get("N", 1000)),
        T_max=int(cfg.get("T_max", 25)),
        out=out,
    )
    s = run_monte_carlo(mc)
    if not out:
        _emit(s.rows(), None)
    failed = sum(v["n_failed"] for v in s.estimators.values())
    return 0 if failed == 0 else 3


def cmd_bus(cfg: dict, seed: int, out: str | None) -> int:
    _emit(bus_replication(), out)
    return 0


COMMANDS: dict[str, Callable[[dict, int, str | None], int]] = {
    "simulate": cmd_simulate,
    "fit-cmle": cmd_fit_cmle,
    "fit-mle": cmd_fit_mle,
    "select-dstar": cmd_select_dstar,
    "hausman": cmd_hausman,
    "montecarlo": cmd_montecarlo,
    "bus-replication": cmd_bus,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynfe", description="Fixed-effects dynamic logit estimation")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key: value YAML file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output path (stdout when omitted)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    try:
        return COMMANDS[args.command](cfg, args.seed, args.out)
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
