"""Continuous-time Lipschitz recurrent units in plain NumPy.

Submodules: ``linalg`` (eigen/singular solvers), ``params`` (symmetric-skew
weights), ``cell`` (dynamics and integrators), ``autodiff`` (BPTT),
``stability`` (certificates, decay fits), ``data``, ``optim``,
``robustness``, ``config``, ``train`` and ``cli``.
"""

__version__ = "0.1.0"

from .cell import LipschitzCell, init_cell, forward, forward_batch  # noqa: E402
from .params import SymSkewParam, materialize, spectrum_interval  # noqa: E402

__all__ = ["__version__", "LipschitzCell", "init_cell", "forward", "forward_batch",
           "SymSkewParam", "materialize", "spectrum_interval"]
