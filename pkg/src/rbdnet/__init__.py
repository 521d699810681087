"""rbdnet: deterministic rigid-body simulation, dataset pipeline, residual
network surrogate, and evaluation bench.

The hot simulation loop runs on a compiled kernel when available and on a
bit-identical pure-Python fallback otherwise; ``rbdnet.BACKEND`` names the
one in use.
"""
from ._backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
