"""Weights rho(x) in both decay regimes and their self-similar rescalings.

Slow and fast kinds realize the bounded regularized profile
c_inf (eps^2 + |x|^2)^(-gamma/2); the pure-power kind realizes the exact
homogeneous weight c_inf |x|^(-gamma), with the origin node carrying the
exact cell average so the lattice measure of the origin cell stays finite
and scale-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fields import Field, Grid

__all__ = ["ModelParams", "DensityModel", "make_density", "verify_envelope", "rescale_density"]

KINDS = ("slow", "fast", "pure-power")


@dataclass(frozen=True)
class ModelParams:
    """Scalar symbols of the equations; regime flags derive from them."""

    m: float = 2.0
    s: float = 0.25
    d: int = 1
    gamma: float = 0.0
    gamma0: float = 0.0
    c_inf: float = 1.0
    C0: float = 1.0
    c_env: float = 1.0
    C_env: float = 1.0
    M: float = 1.0
    eps_reg: float = 1.0

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"m must exceed 1, got {self.m}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.d > 2 * self.s:
            raise ValueError(f"d > 2s required, got d={self.d}, s={self.s}")
        if self.gamma < 0 or not 0 <= self.gamma0 <= max(self.gamma, 0):
            raise ValueError("need gamma >= 0 and 0 <= gamma0 <= gamma")
        if self.c_inf <= 0 or self.M <= 0 or self.eps_reg <= 0:
            raise ValueError("c_inf, M, eps_reg must be positive")

    @property
    def slow_regime(self) -> bool:
        return self.gamma < 2 * self.s and self.gamma <= self.d - 2 * self.s

    @property
    def fast_regime(self) -> bool:
        return self.gamma > 2 * self.s

    @property
    def parabolic_uniqueness_grade(self) -> bool:
        return (
            self.d > 4 * self.s
            and 2 * self.s < self.gamma <= self.d - 2 * self.s
            and self.gamma > 4 * self.s
        )

    @property
    def elliptic_uniqueness_grade(self) -> bool:
        return self.d > 4 * self.s and self.gamma > 4 * self.s


def _origin_cell_average_power(grid: Grid, gamma: float) -> float:
    """Exact average of |x|^(-gamma) over the origin cell."""
    a = grid.spacing / 2.0
    if grid.dim == 1:
        # (1/h) * 2 a^(1-gamma) / (1-gamma)
        if gamma >= 1.0:
            raise ValueError("pure-power weight needs gamma < d for an integrable origin cell")
        return a ** (-gamma) / (1.0 - gamma)
    if gamma >= 2.0:
        raise ValueError("pure-power weight needs gamma < d for an integrable origin cell")
    from scipy.integrate import quad

    ang, _ = quad(lambda th: np.cos(th) ** (gamma - 2.0), 0.0, np.pi / 4)
    integral = (8.0 / (2.0 - gamma)) * a ** (2.0 - gamma) * ang
    return integral / grid.cell_volume()


def _power_weight_values(grid: Grid, gamma: float, scale: float = 1.0) -> np.ndarray:
    r = grid.radii()
    vals = np.empty_like(r)
    nz = r > 0
    vals[nz] = r[nz] ** (-gamma)
    vals[~nz] = _origin_cell_average_power(grid, gamma)
    return scale * vals


@dataclass
class DensityModel:
    kind: str
    params: ModelParams
    rho: Field
    lam: float = 1.0  # accumulated rescaling factor
    kappa: float = 0.0  # exponent used in the rescaling

    @property
    def grid(self) -> Grid:
        return self.rho.grid


def _evaluate_rho(kind: str, params: ModelParams, grid: Grid, lam: float, kappa: float) -> np.ndarray:
    """Analytic evaluation of lam^(kappa*gamma) rho(lam^kappa x) on the grid."""
    g = params.gamma
    pref = lam ** (kappa * g)
    stretch = lam ** kappa
    if kind == "pure-power":
        # homogeneous: lam^(kappa*g) |lam^kappa x|^(-g) = |x|^(-g), exactly
        return _power_weight_values(grid, g, scale=params.c_inf)
    r = grid.radii()
    return pref * params.c_inf * (params.eps_reg ** 2 + (stretch * r) ** 2) ** (-g / 2.0)


def make_density(kind: str, params: ModelParams, grid: Grid) -> DensityModel:
    """Realize the weight on the grid; rejects regime/parameter mismatches."""
    if kind not in KINDS:
        raise ValueError(f"unknown density kind {kind!r}; expected one of {KINDS}")
    two_s = 2 * params.s
    if kind == "slow" and not params.slow_regime:
        raise ValueError(
            f"slow regime requires gamma < 2s = {two_s:g} and gamma <= d - 2s = "
            f"{params.d - two_s:g}: got gamma={params.gamma:g}"
        )
    if kind == "fast" and not params.fast_regime:
        raise ValueError(
            f"fast regime requires gamma > 2s = {two_s:g}: got gamma={params.gamma:g}"
        )
    if kind == "pure-power" and not params.gamma < params.d:
        raise ValueError(f"pure-power kind requires gamma < d, got gamma={params.gamma:g}")
    vals = _evaluate_rho(kind, params, grid, lam=1.0, kappa=0.0)
    if np.min(vals) <= 0:
        raise ValueError("realized weight must be strictly positive")
    return DensityModel(kind=kind, params=params, rho=Field(grid, vals))


def verify_envelope(model: DensityModel) -> dict:
    """Tightest envelope constants on the box and pass flags.

    Far field (|x| >= 1): c |x|^(-gamma) <= rho <= C |x|^(-gamma).
    Near field (|x| < 1, gamma0 = 0): constants for c <= rho <= C.
    The origin node is excluded for the pure-power kind.
    """
    grid = model.grid
    r = grid.radii().ravel()
    rho = model.rho.flat()
    p = model.params
    keep = np.ones_like(r, dtype=bool)
    if model.kind == "pure-power":
        keep = r > 0
    far = keep & (r >= 1.0)
    near = keep & (r < 1.0)
    report: dict = {"kind": model.kind, "gamma": p.gamma}
    if np.any(far):
        ratio = rho[far] * r[far] ** p.gamma
        report["far_c"] = float(np.min(ratio))
        report["far_C"] = float(np.max(ratio))
        report["far_pass"] = bool(
            report["far_C"] <= p.C_env * (1 + 1e-12) and report["far_c"] >= p.c_env * (1 - 1e-12)
        )
        report["C0_pass"] = bool(report["far_C"] <= p.C0 * (1 + 1e-12))
    if np.any(near):
        report["near_min"] = float(np.min(rho[near]))
        report["near_max"] = float(np.max(rho[near]))
    report["min_rho"] = float(np.min(rho[keep]))
    return report


def rescale_density(model: DensityModel, lam: float, kappa: float) -> Field:
    """rho_lambda(x) = lam^(kappa*gamma) rho(lam^kappa x), evaluated analytically."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    total = model.lam * lam
    vals = _evaluate_rho(model.kind, model.params, model.grid, lam=total, kappa=kappa)
    return Field(model.grid, vals)


def rescaled_model(model: DensityModel, lam: float, kappa: float) -> DensityModel:
    """DensityModel view of a rescaled weight, so rescalings compose."""
    return DensityModel(
        kind=model.kind,
        params=model.params,
        rho=rescale_density(model, lam, kappa),
        lam=model.lam * lam,
        kappa=kappa,
    )
