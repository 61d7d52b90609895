"""Self-similar rescaling machinery and the long-time convergence verdicts.

Slow decay: rescaled solutions t^alpha u(t^kappa x, t) are compared with a
numerically computed source-type profile of the pure-power problem in the
weighted L1 metric. Fast decay: v(tau) = t^(1/(m-1)) u is compared with the
separable profile C_m w^(1/m) built from the minimal elliptic solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .density import DensityModel, ModelParams, make_density
from .fields import Field, Grid
from .pme import EvolutionState, evolve, make_bump_datum, make_state, weighted_mass

__all__ = [
    "ScalingExponents",
    "AsymptoticVerdict",
    "scaling_exponents",
    "RescaledProfile",
    "rescaled_profile",
    "weighted_l1_distance",
    "power_weight",
    "barenblatt_profile",
    "BarenblattResult",
    "slow_decay_verdict",
    "fast_decay_verdict",
]


@dataclass(frozen=True)
class ScalingExponents:
    alpha_ss: float  # self-similar amplitude exponent
    kappa: float  # self-similar spatial exponent
    alpha_sm: float  # smoothing-estimate decay exponent (equals alpha_ss)
    beta_sm: float  # smoothing-estimate mass exponent
    C_m: float  # (m-1)^(-1/(m-1))


def scaling_exponents(params: ModelParams) -> ScalingExponents:
    m, d, s, g = params.m, params.d, params.s, params.gamma
    denom = (m - 1.0) * (d - g) + 2.0 * s - g
    if abs(denom) < 1e-14:
        raise ValueError("vanishing exponent denominator (critical parameters)")
    kappa = 1.0 / denom
    alpha = (d - g) * kappa
    beta = (2.0 * s - g) * kappa
    C_m = (m - 1.0) ** (-1.0 / (m - 1.0))
    return ScalingExponents(alpha_ss=alpha, kappa=kappa, alpha_sm=alpha, beta_sm=beta, C_m=C_m)


@dataclass
class RescaledProfile:
    field: Field
    valid: np.ndarray  # nodes where t^kappa x stayed inside the box
    t: float

    def values(self) -> np.ndarray:
        return self.field.values


def rescaled_profile(u_snapshot: Field, t: float, exponents: ScalingExponents) -> RescaledProfile:
    """x -> t^alpha u(t^kappa x, t), sampled by linear interpolation; nodes
    whose stretched coordinate leaves the box are marked invalid."""
    if t <= 0:
        raise ValueError("t must be positive")
    grid = u_snapshot.grid
    stretch = t ** exponents.kappa
    ax = grid.axis()
    lo, hi = ax[0], ax[-1]
    if grid.dim == 1:
        pts = stretch * ax
        valid = (pts >= lo) & (pts <= hi)
        vals = np.zeros_like(pts)
        vals[valid] = np.interp(pts[valid], ax, u_snapshot.values)
    else:
        interp = RegularGridInterpolator(
            (ax, ax), u_snapshot.values, bounds_error=False, fill_value=0.0
        )
        X, Y = np.meshgrid(stretch * ax, stretch * ax, indexing="ij")
        valid = (
            (X >= lo) & (X <= hi) & (Y >= lo) & (Y <= hi)
        )
        vals = interp(np.stack([X.ravel(), Y.ravel()], axis=-1)).reshape(X.shape)
        vals[~valid] = 0.0
    if not np.any(valid):
        raise ValueError(f"t={t:g} stretches every node outside the box")
    return RescaledProfile(Field(grid, t ** exponents.alpha_ss * vals), valid, t)


def zoom_rescaled_datum(u: Field, t: float, lam: float, exponents: ScalingExponents) -> tuple[Field, float]:
    """Map a snapshot at time t through the exact self-similar scaling
    u -> lam^alpha u(lam^kappa x), yielding a datum at time t / lam.

    Continuing the flow from the returned datum reproduces the original
    solution at lam times the clock, so a bounded box can follow the
    self-similar regime across more decades than it can hold directly.
    """
    if lam <= 1.0:
        raise ValueError("zoom factor must exceed 1")
    grid = u.grid
    ax = grid.axis()
    if grid.dim != 1:
        raise NotImplementedError("zoom continuation implemented for dim 1")
    vals = lam ** exponents.alpha_ss * np.interp(lam ** exponents.kappa * ax, ax, u.values)
    return Field(grid, vals), t / lam


def power_weight(grid: Grid, gamma: float, eps: float = 0.0) -> np.ndarray:
    """(eps^2 + |x|^2)^(-gamma/2) with the origin node carrying the exact
    cell average of the pure power when eps is below the cell scale."""
    r = grid.radii()
    if eps > 0:
        w = (eps ** 2 + r ** 2) ** (-gamma / 2.0)
    else:
        w = np.empty_like(r)
        nz = r > 0
        w[nz] = r[nz] ** (-gamma)
        w[~nz] = np.inf
    origin = r == 0
    if np.any(origin) and (eps == 0.0 or eps < grid.spacing):
        from .density import _origin_cell_average_power

        w[origin] = _origin_cell_average_power(grid, gamma)
    return w


def weighted_l1_distance(
    f, g, gamma: float, eps: float = 0.0, mask: np.ndarray | None = None
) -> float:
    """Sum of |f - g| (eps^2 + |x|^2)^(-gamma/2) h^d over valid nodes.

    Accepts Fields or RescaledProfiles; invalid nodes of rescaled profiles
    are excluded automatically, on top of any explicit mask.
    """
    valid = None

    def unpack(obj):
        nonlocal valid
        if isinstance(obj, RescaledProfile):
            valid = obj.valid if valid is None else (valid & obj.valid)
            return obj.field
        return obj

    f = unpack(f)
    g = unpack(g)
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    if mask is not None:
        valid = mask if valid is None else (valid & mask)
    if valid is None:
        valid = np.ones(f.grid.shape, dtype=bool)
    w = power_weight(f.grid, gamma, eps)
    diff = np.abs(f.values - g.values)
    return float(np.sum(diff[valid] * w[valid]) * f.grid.cell_volume())


@dataclass
class AsymptoticVerdict:
    regime: str
    times: list
    metric: list
    monotone_from: int | None
    final_error: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)


def _eventually_nonincreasing(values, slack: float = 0.01) -> int | None:
    """Smallest index k0 from which the sequence never increases by more
    than the relative slack; None if only the final pair qualifies."""
    n = len(values)
    k0 = None
    for start in range(n - 2):
        ok = all(
            values[k + 1] <= values[k] * (1.0 + slack) for k in range(start, n - 1)
        )
        if ok:
            k0 = start
            break
    return k0


@dataclass
class BarenblattResult:
    profile: Field  # numerical u^{c_inf}_M(., 1)
    mass_weighted: float  # mass of the profile in the pure-power weight
    self_similarity_error: float | None
    leakage_fraction: float
    state: EvolutionState


def barenblatt_profile(
    mass: float,
    params: ModelParams,
    grid: Grid,
    t_ref: float,
    exponents: ScalingExponents | None = None,
    check_at_factor: float | None = 4.0,
    dt_max: float = 0.05,
    leakage_tol: float = 0.01,
) -> BarenblattResult:
    """Evolve the pure-power problem from a concentrated bump of the given
    weighted mass and extract the self-similar profile at t_ref.

    When check_at_factor is set, a second extraction at t_ref * factor is
    compared in the weighted L1 metric (self-similarity identity).
    """
    if exponents is None:
        exponents = scaling_exponents(params)
    model = make_density("pure-power", params, grid)
    u0 = make_bump_datum(grid, model, mass)
    state = make_state(u0, model, dt_max=dt_max)
    times = [t_ref] if not check_at_factor else [t_ref, t_ref * check_at_factor]
    evolve(state, max(times), snapshot_times=times)
    prof_ref = rescaled_profile(
        Field(grid, state.log.snapshot_at(t_ref)), t_ref, exponents
    )
    self_sim = None
    if check_at_factor:
        prof_late = rescaled_profile(
            Field(grid, state.log.snapshot_at(t_ref * check_at_factor)),
            t_ref * check_at_factor,
            exponents,
        )
        self_sim = weighted_l1_distance(prof_ref, prof_late, params.gamma) / (
            mass / params.c_inf
        )
    leak = state.tail_flux / mass
    if leak > leakage_tol:
        raise RuntimeError(f"mass leakage {leak:.3e} beyond tolerance before t_ref")
    w = power_weight(grid, params.gamma)
    mass_w = float(np.sum(prof_ref.field.values[prof_ref.valid] * w[prof_ref.valid]) * grid.cell_volume())
    return BarenblattResult(
        profile=prof_ref.field,
        mass_weighted=mass_w,
        self_similarity_error=self_sim,
        leakage_fraction=leak,
        state=state,
    )


def slow_decay_verdict(
    state: EvolutionState,
    barenblatt,
    exponents: ScalingExponents,
    times,
    mass: float,
    threshold: float = 0.10,
    slack: float = 0.01,
) -> AsymptoticVerdict:
    """Weighted-L1 distance of the rescaled solution to the source-type
    profile along dyadic times, normalized by M / c_inf; passes when the
    sequence is eventually nonincreasing and ends at or below threshold.

    The reference may be a Field (a fixed profile extraction) or the
    EvolutionState of the pure-power reference run, in which case each
    comparison uses the extraction at the matching time so that the
    finite-age transients of the two numerical solutions cancel.
    """
    p = state.model.params
    norm = mass / p.c_inf
    dist = []
    for t in times:
        prof = rescaled_profile(Field(state.grid, state.log.snapshot_at(t)), t, exponents)
        if isinstance(barenblatt, Field):
            ref = barenblatt
        else:
            ref = rescaled_profile(
                Field(state.grid, barenblatt.log.snapshot_at(t)), t, exponents
            )
        dist.append(weighted_l1_distance(prof, ref, p.gamma) / norm)
    k0 = _eventually_nonincreasing(dist, slack)
    final = dist[-1]
    passed = k0 is not None and final <= threshold
    return AsymptoticVerdict(
        regime="slow",
        times=list(times),
        metric=dist,
        monotone_from=k0,
        final_error=final,
        threshold=threshold,
        passed=passed,
        details={"normalization": norm},
    )


def fast_decay_verdict(
    state: EvolutionState,
    w: Field,
    exponents: ScalingExponents,
    times,
    inner_frac: float = 0.25,
    threshold: float = 0.05,
    giant_slack: float = 1e-8,
    monotone_slack: float = 1e-10,
) -> AsymptoticVerdict:
    """Checks along logged times t_k, with v(tau_k) = t_k^(1/(m-1)) u(t_k):

    (i) separable upper bound u <= C_m t^(-1/(m-1)) w^(1/m) nodewise within
        giant_slack * sup u;
    (ii) v(tau_k) nondecreasing in k nodewise within monotone_slack * sup v;
    (iii) inner-region relative L1 error of v(tau_K) against C_m w^(1/m)
        at or below threshold (the sup-mode error is reported alongside).
    """
    if w.grid != state.grid:
        raise ValueError("elliptic solution lives on a different grid")
    p = state.model.params
    m = p.m
    beta = 1.0 / (m - 1.0)
    target = exponents.C_m * w.values ** (1.0 / m)
    r = state.grid.radii()
    inner = r <= inner_frac * state.grid.half_extent

    v_prev = None
    giant_ok, monotone_ok = True, True
    worst_giant, worst_drop = 0.0, 0.0
    history = []
    for t in times:
        u = state.log.snapshot_at(t)
        v = t ** beta * u
        sup_v = float(np.max(v)) or 1.0
        excess = float(np.max(v - target))
        worst_giant = max(worst_giant, excess / sup_v)
        if excess > giant_slack * sup_v:
            giant_ok = False
        if v_prev is not None:
            drop = float(np.max(v_prev - v))
            worst_drop = max(worst_drop, drop / sup_v)
            if drop > monotone_slack * sup_v:
                monotone_ok = False
        v_prev = v
        l1 = float(np.sum(np.abs(v - target)[inner])) / float(np.sum(target[inner]))
        history.append(l1)
    final_l1 = history[-1]
    v_K = times[-1] ** beta * state.log.snapshot_at(times[-1])
    sup_rel = float(np.max(np.abs(v_K[inner] / target[inner] - 1.0)))
    passed = giant_ok and monotone_ok and final_l1 <= threshold
    return AsymptoticVerdict(
        regime="fast",
        times=list(times),
        metric=history,
        monotone_from=0 if monotone_ok else None,
        final_error=final_l1,
        threshold=threshold,
        passed=passed,
        details={
            "giant_ok": giant_ok,
            "worst_giant_excess": worst_giant,
            "monotone_ok": monotone_ok,
            "worst_monotone_drop": worst_drop,
            "inner_sup_relative_error": sup_rel,
        },
    )
