"""Explicit time integration of rho u_t + (-Delta)^s(u^m) = 0.

Forward Euler on the monotone quadrature operator: u' = u - dt rho^-1 A(u^m).
The M-matrix structure plus the CFL bound below gives positivity, ordering
of solutions, and exact conservation of the weighted mass (up to the
explicit exterior leakage when the tail term is enabled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityModel
from .fields import Field, Grid
from .operators import DiscreteOperator, build_quadrature_operator

__all__ = [
    "EvolutionState",
    "RunLog",
    "make_state",
    "make_bump_datum",
    "weighted_mass",
    "cfl_dt",
    "step",
    "evolve",
    "energy_report",
    "smoothing_diagnostic",
    "contraction_check",
    "flux_potential_check",
    "time_derivative_check",
]

CFL_SAFETY = 0.9


class CFLViolation(RuntimeError):
    pass


class NegativityError(RuntimeError):
    pass


@dataclass
class RunLog:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, values) pairs

    def snapshot_at(self, t: float):
        for tk, vals in self.snapshots:
            if math.isclose(tk, t, rel_tol=1e-12, abs_tol=1e-15):
                return vals
        raise KeyError(f"no snapshot at t={t}")


@dataclass
class EvolutionState:
    t: float
    u: Field
    model: DensityModel
    operator: DiscreteOperator
    m: float
    tail_enabled: bool = True
    dt_max: float = 0.1
    steps: int = 0
    tail_flux: float = 0.0  # accumulated weighted-mass leakage
    log: RunLog = field(default_factory=RunLog)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def rho(self) -> np.ndarray:
        return self.model.rho.values


def make_state(
    u0: Field,
    model: DensityModel,
    m: float | None = None,
    t0: float = 0.0,
    tail_enabled: bool = True,
    dt_max: float = 0.1,
) -> EvolutionState:
    if u0.grid is not model.grid and u0.grid != model.grid:
        raise ValueError("datum and density live on different grids")
    if np.min(u0.values) < 0:
        raise ValueError("datum must be nonnegative")
    if m is None:
        m = model.params.m
    op = build_quadrature_operator(model.grid, model.params.s)
    return EvolutionState(
        t=t0, u=u0.copy(), model=model, operator=op, m=m,
        tail_enabled=tail_enabled, dt_max=dt_max,
    )


def make_bump_datum(
    grid: Grid,
    model: DensityModel,
    mass: float,
    center=0.0,
    width: float | None = None,
) -> Field:
    """Concentrated bump (w^2 + |x - c|^2)^(-(d+2)/2) normalized to the given
    weighted mass; default width 4h ties the point-datum approximation to
    the grid resolution."""
    if width is None:
        width = 4.0 * grid.spacing
    d = grid.dim
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def profile(*xs):
        r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
        return (width ** 2 + r2) ** (-(d + 2.0) / 2.0)

    f = Field.from_function(grid, profile)
    current = weighted_mass(f, model.rho)
    f.values *= mass / current
    return f


def weighted_mass(u: Field, rho: Field) -> float:
    """Sum of u rho h^d."""
    if u.grid != rho.grid:
        raise ValueError("grid mismatch")
    return float(np.dot(u.flat(), rho.flat()) * u.grid.cell_volume())


def cfl_dt(state: EvolutionState) -> float:
    """Stable explicit step: theta * min_i rho_i / (m max(u)^(m-1) (W_row_i + T_i) C)."""
    sup_u = float(np.max(state.u.values))
    if sup_u == 0.0:
        return state.dt_max
    op = state.operator
    denom = op.row_sum + (op.edge_corr + op.tail_raw if state.tail_enabled else 0.0)
    bound = CFL_SAFETY * float(np.min(state.rho.ravel() / denom)) / (
        state.m * sup_u ** (state.m - 1.0) * op.c_ds
    )
    return min(bound, state.dt_max)


def step(state: EvolutionState, dt: float) -> EvolutionState:
    """One forward Euler step; refuses dt above the CFL bound, flags negative
    values beyond round-off (no clamping beyond zeroing float dust)."""
    if dt > cfl_dt(state) * (1.0 + 1e-9):
        raise CFLViolation(f"dt={dt:g} exceeds the stable bound {cfl_dt(state):g}")
    u = state.u.values
    um = u ** state.m
    au = state.operator.apply_values(um, tail=state.tail_enabled)
    u_new = u - dt * au / state.rho
    sup = float(np.max(u)) or 1.0
    worst = float(np.min(u_new))
    if worst < -1e-14 * sup:
        raise NegativityError(f"negative value {worst:.3e} beyond round-off; scheme bug")
    if worst < 0.0:
        u_new[u_new < 0.0] = 0.0
    if state.tail_enabled:
        state.tail_flux += dt * float(
            np.dot(state.operator.tail_total().ravel(), um.ravel())
        ) * state.grid.cell_volume()
    state.u = Field(state.grid, u_new)
    state.t += dt
    state.steps += 1
    return state


def _record(state: EvolutionState) -> None:
    log = state.log
    log.times.append(state.t)
    log.mass.append(weighted_mass(state.u, state.model.rho))
    log.sup.append(state.u.sup_norm())
    E, D = energy_report(state)
    log.energy.append(E)
    log.dissipation.append(D)


def evolve(
    state: EvolutionState,
    t_end: float,
    snapshot_times=(),
    log_points_per_decade: int = 16,
    observers=(),
) -> EvolutionState:
    """CFL-bounded steps to t_end, landing exactly on snapshot times.

    Diagnostics (mass, sup, energy) are recorded on a geometric schedule
    with the given density plus at every snapshot time and at t_end.
    """
    if t_end < state.t:
        raise ValueError("t_end must not precede the current time")
    snapshot_times = sorted(t for t in snapshot_times if t >= state.t - 1e-15)
    if not state.log.times:
        _record(state)
    if snapshot_times and math.isclose(snapshot_times[0], state.t, rel_tol=1e-12, abs_tol=1e-15):
        state.log.snapshots.append((state.t, state.u.values.copy()))
        snapshot_times = snapshot_times[1:]

    ratio = 10.0 ** (1.0 / log_points_per_decade)
    events: list[float] = []
    tk = max(state.t, 1e-4)
    while tk < t_end:
        tk *= ratio
        events.append(min(tk, t_end))
    events.extend(snapshot_times)
    if not events or events[-1] < t_end:
        events.append(t_end)
    events = sorted(set(events))

    snap_left = list(snapshot_times)
    for t_event in events:
        if t_event <= state.t + 1e-15:
            continue
        while state.t < t_event - 1e-13 * max(1.0, t_event):
            dt = min(cfl_dt(state), t_event - state.t)
            step(state, dt)
        state.t = t_event  # absorb accumulated round-off in the clock
        if snap_left and math.isclose(t_event, snap_left[0], rel_tol=1e-12, abs_tol=1e-15):
            state.log.snapshots.append((state.t, state.u.values.copy()))
            snap_left.pop(0)
        _record(state)
        for obs in observers:
            obs(state)
    return state


def energy_report(state: EvolutionState) -> tuple[float, float]:
    """(E, D): E = (m+1)^-1 sum u^(m+1) rho h^d, D = <A(u^m), u^m> h^d."""
    u = state.u.values
    hd = state.grid.cell_volume()
    E = float(np.dot((u ** (state.m + 1.0)).ravel(), state.rho.ravel()) * hd) / (
        state.m + 1.0
    )
    um = u ** state.m
    D = float(
        np.dot(
            state.operator.apply_values(um, tail=state.tail_enabled).ravel(), um.ravel()
        )
        * hd
    )
    return E, D


def energy_identity_misfit(state: EvolutionState, t1: float, t2: float) -> float:
    """|E(t1) - E(t2) - int_t1^t2 D dt| / E(t1), trapezoidal in time on the
    logged schedule."""
    times = np.asarray(state.log.times)
    E = np.asarray(state.log.energy)
    D = np.asarray(state.log.dissipation)
    sel = (times >= t1 - 1e-12) & (times <= t2 + 1e-12)
    ts, Ds = times[sel], D[sel]
    if len(ts) < 3:
        raise ValueError("not enough logged points between t1 and t2")
    integral = float(np.trapezoid(Ds, ts))
    E1 = float(E[sel][0])
    E2 = float(E[sel][-1])
    return abs(E1 - E2 - integral) / E1


def smoothing_diagnostic(
    times, sups, alpha: float, beta: float, mass: float, t_min: float = 0.1
) -> tuple[float, float]:
    """Least-squares decay exponent of sup u(t) and the smoothing prefactor.

    Fits log sup u against log t on t >= t_min (requires >= 2 decades) and
    returns (alpha_hat, K_hat) with K_hat = max_t sup u(t) t^alpha M^-beta
    using the theoretical exponents.
    """
    times = np.asarray(times, dtype=float)
    sups = np.asarray(sups, dtype=float)
    sel = (times >= t_min) & (sups > 0)
    ts, ss = times[sel], sups[sel]
    if len(ts) < 4 or ts[-1] / ts[0] < 99.0:
        raise ValueError("need sup-norm history spanning at least two decades")
    slope, _ = np.polyfit(np.log(ts), np.log(ss), 1)
    K_hat = float(np.max(ss * ts ** alpha) * mass ** (-beta))
    return float(-slope), K_hat


def contraction_check(
    u1_initial: Field, u2_initial: Field, u1_final: Field, u2_final: Field, rho: Field
) -> float:
    """Excess of the weighted positive-part distance at the final time over
    the initial one; nonpositive up to round-off for the monotone scheme."""
    for f in (u1_initial, u2_initial, u1_final, u2_final):
        if f.grid != rho.grid:
            raise ValueError("grid mismatch")
    hd = rho.grid.cell_volume()
    before = float(
        np.sum(np.maximum(u1_initial.values - u2_initial.values, 0.0) * rho.values) * hd
    )
    after = float(
        np.sum(np.maximum(u1_final.values - u2_final.values, 0.0) * rho.values) * hd
    )
    return after - before


def flux_potential_check(
    state: EvolutionState, t0: float, pot_rho: np.ndarray, fit_window: tuple = (0.3, 0.7)
) -> dict:
    """Accumulated flux potential U(t0; x, t) = int_t0^t u^m dtau from the
    logged snapshots, its smallest nodewise envelope constant against the
    weight's Riesz potential, and the far-field slope of U.

    Requires a fast-decay model; the envelope is not asserted otherwise.
    """
    if not state.model.params.fast_regime:
        raise ValueError("flux-potential bound is asserted in the fast regime only")
    snaps = [(t, v) for t, v in state.log.snapshots if t >= t0 - 1e-12]
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots from t0 onward")
    m = state.m
    U = np.zeros_like(snaps[0][1])
    history = []
    prev_t, prev_u = snaps[0]
    history.append((prev_t, U.copy()))
    for t, u in snaps[1:]:
        U = U + 0.5 * (t - prev_t) * (prev_u ** m + u ** m)
        history.append((t, U.copy()))
        prev_t, prev_u = t, u
    nondecreasing = all(
        np.all(history[k + 1][1] >= history[k][1] - 1e-15) for k in range(len(history) - 1)
    )
    C_min = float(np.max(U.ravel() / pot_rho.ravel()))
    # far-field slope of the final U
    grid = state.grid
    r = grid.radii().ravel()
    L = grid.half_extent
    vals = U.ravel()
    sel = (r >= fit_window[0] * L) & (r < fit_window[1] * L) & (vals > 0)
    slope, _ = np.polyfit(np.log1p(r[sel]), np.log(vals[sel]), 1)
    p = state.model.params
    return {
        "C_min": C_min,
        "envelope_finite": bool(np.isfinite(C_min)),
        "nondecreasing": bool(nondecreasing),
        "slope": float(slope),
        "expected_slope": -(p.gamma - 2 * p.s) if p.gamma < p.d else -(p.d - 2 * p.s),
        "t_final": history[-1][0],
    }


def time_derivative_check(
    state: EvolutionState, mass: float, tol: float = 0.05, t_min: float = 0.1
) -> dict:
    """Difference-quotient checks between consecutive snapshots:

    * ||u(t2) - u(t1)|| / (t2 - t1) in the weighted L1 norm against
      (1 + tol) 2M / ((m - 1) t1);
    * the lower bound u_t >= -u / ((m-1) t) nodewise, i.e.
      u(t2) >= u(t1) (t1/t2)^(1/(m-1)) within tol slack.
    """
    snaps = [(t, v) for t, v in state.log.snapshots if t >= t_min]
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots at t >= t_min")
    m = state.m
    rho = state.rho
    hd = state.grid.cell_volume()
    beta = 1.0 / (m - 1.0)
    l1_ok, bc_ok = True, True
    worst_l1, worst_bc = 0.0, 0.0
    for (t1, u1), (t2, u2) in zip(snaps[:-1], snaps[1:]):
        rate = float(np.sum(np.abs(u2 - u1) * rho) * hd / (t2 - t1))
        bound = 2.0 * mass / ((m - 1.0) * t1)
        worst_l1 = max(worst_l1, rate / bound)
        if rate > (1.0 + tol) * bound:
            l1_ok = False
        floor = u1 * (t1 / t2) ** beta
        slack = tol * max(float(np.max(u1)), 1e-300)
        deficit = float(np.max(floor - u2))
        worst_bc = max(worst_bc, deficit / max(float(np.max(u1)), 1e-300))
        if deficit > slack:
            bc_ok = False
    return {
        "l1_bound_ok": l1_ok,
        "benilan_crandall_ok": bc_ok,
        "worst_l1_ratio": worst_l1,
        "worst_bc_deficit": worst_bc,
    }
