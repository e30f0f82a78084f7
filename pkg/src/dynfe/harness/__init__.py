from .bus import BUS_COUNTS, load_bus_histories
from .hausman import HausmanResult, hausman_from_estimates, hausman_test
from .montecarlo import McConfig, run_monte_carlo

__all__ = [
    "BUS_COUNTS",
    "HausmanResult",
    "McConfig",
    "hausman_from_estimates",
    "hausman_test",
    "load_bus_histories",
    "run_monte_carlo",
]
