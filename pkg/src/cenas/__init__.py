"""Cross-entropy view of iterative generator-driven architecture search, as a numpy simulator."""
from . import arch_space, ce_engine, error_channel, harness, novelty, proxy_stats

__version__ = "0.1.0"

__all__ = ["arch_space", "ce_engine", "error_channel", "harness", "novelty", "proxy_stats"]
