"""Fixed-effects estimation of structural dynamic discrete-choice logit models."""

from .cmle import CmleFit, DstarSelection, concentrated_loglik, conditional_loglik, fit_cmle, select_dstar_bic
from .histories import ChoiceHistory, StatisticsBundle, compute_statistics, duration_path, enumerate_histories
from .mle import MixtureSpec, MleFit, fit_mle_nfxp, mixture_loglik, recover_type_distribution
from .model import ModelSpec, SolvedModel, ccp, history_log_prob, solve_bellman
from .simulate import DgpSpec, Panel, simulate_panel, window_sample
from .suffstats import Kind, Variant, check_sufficiency, dstar_probe_pairs, group_histories, s_vector, u_vector

__all__ = [
    "ChoiceHistory", "CmleFit", "DgpSpec", "DstarSelection", "Kind", "MixtureSpec", "MleFit", "ModelSpec",
    "Panel", "SolvedModel", "StatisticsBundle", "Variant", "ccp", "check_sufficiency", "compute_statistics",
    "concentrated_loglik", "conditional_loglik", "dstar_probe_pairs", "duration_path", "enumerate_histories",
    "fit_cmle", "fit_mle_nfxp", "group_histories", "history_log_prob", "mixture_loglik",
    "recover_type_distribution", "s_vector", "select_dstar_bic", "simulate_panel", "solve_bellman", "u_vector",
    "window_sample",
]
