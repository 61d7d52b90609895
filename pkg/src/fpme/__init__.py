"""Numerical laboratory for the weighted fractional porous medium equation."""

import os as _os

if "FPME_THREADS" in _os.environ:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _os.environ["FPME_THREADS"])

from .fields import Field, Grid, build_grid
from .operators import (
    build_quadrature_operator,
    build_riesz_operator,
    check_inverse_identity,
    frac_laplacian_spectral,
    riesz_potential,
)

__version__ = "0.1.0"
