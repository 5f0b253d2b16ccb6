"""Pipeline-parallel training planner and simulator for heterogeneous GPU
clusters: structural layer construction, deduplicated stage profiling, a
latency-bound DP strategy search, communication-aware 1F1B launch counts,
and an exact DAG schedule simulator."""

from ._core import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
