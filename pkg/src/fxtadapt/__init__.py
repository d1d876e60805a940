"""Fixed-time parameter adaptation with adaptive safety filters.

Submodules:

* ``linalg``: rank, rowspace and nullspace utilities with explicit tolerances.
* ``systems``: control-affine plant models and wind disturbances.
* ``estimation``: measurement schemes, adaptation laws, envelopes and bounds.
* ``safety``: barrier and Lyapunov functions with their adaptive margins.
* ``qp``: controller QPs and the dense active-set solver behind them.
* ``sim``: the closed-loop simulator and the shipped scenarios.
* ``verify``: randomized property suites.
* ``cli``: the ``fxtadapt`` command.
"""
from fxtadapt._backend import BACKEND, available_backends

__version__ = "0.1.0"

__all__ = ["BACKEND", "available_backends", "__version__"]
