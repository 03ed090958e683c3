"""Toolkit for three-terminal quantum absorption chillers.

Set ``CHILLER_MAX_THREADS`` before the first import to cap BLAS/OpenMP/numba
threads.
"""
import os as _os

_cap = _os.environ.get("CHILLER_MAX_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)

__version__ = "0.1.0"

from .models import (  # noqa: E402
    BATHS,
    BathSpec,
    Flat,
    HighCutoff,
    Lorentzian,
    ModelKind,
    SystemModel,
    build_model,
    eigendecompose,
    make_baths,
)
from .thermo import SteadyReport, solve  # noqa: E402

__all__ = [
    "BATHS",
    "BathSpec",
    "Flat",
    "HighCutoff",
    "Lorentzian",
    "ModelKind",
    "SteadyReport",
    "SystemModel",
    "build_model",
    "eigendecompose",
    "make_baths",
    "solve",
    "__version__",
]
