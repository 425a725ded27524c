"""edurt: a demand-driven multi-tier execution runtime.

Work is expressed as demands deposited into a store; worker loops withdraw
and execute them; completed results are memoized by demand signature so an
equal computation is never run twice. Tiers (store, generator, worker,
manager) can be added to and removed from running nodes, and the whole
network is steered through an HTTP management API and the ``edurt`` CLI.
"""

from .errors import EdurtError

__all__ = ["EdurtError", "__version__"]

__version__ = "0.1.0"
