"""Reproducible batch driver: config parsing, experiment orchestration,
artifact emission.

Experiments run from a line-based ``key = value`` config with one section
per module. Every run writes a manifest recording the fully resolved
configuration and derived constants, sufficient to replay it.
"""

from __future__ import annotations

import os

if "FPME_THREADS" in os.environ:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, os.environ["FPME_THREADS"])

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .density import ModelParams, make_density
from .fields import Field, build_grid, inner_mask, write_field_binary, write_field_csv
from .operators import (
    build_quadrature_operator,
    check_inverse_identity,
    frac_lap_constant,
    frac_laplacian_spectral,
    riesz_constant,
)
from .pme import (
    evolve,
    flux_potential_check,
    make_bump_datum,
    make_state,
    smoothing_diagnostic,
    time_derivative_check,
    weighted_mass,
)
from . import elliptic as ell
from .asymptotics import (
    barenblatt_profile,
    fast_decay_verdict,
    rescaled_profile,
    scaling_exponents,
    slow_decay_verdict,
    weighted_l1_distance,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_THRESHOLD = 4

EXPERIMENTS = (
    "validate-operators",
    "run-parabolic",
    "solve-elliptic",
    "barenblatt",
    "verdict-slow",
    "verdict-fast",
    "report",
)


class ConfigError(Exception):
    pass


class InvariantViolation(Exception):
    pass


DEFAULTS: dict = {
    "grid": {"dim": 1, "n": 1024, "L": 40.0},
    "model": {
        "m": 2.0,
        "s": 0.25,
        "gamma": 0.0,
        "gamma0": 0.0,
        "c_inf": 1.0,
        "C0": 1.0,
        "M": 1.0,
        "eps_reg": 1.0,
        "density": "slow",
    },
    "datum": {
        "type": "bump",
        "width": 0.0,  # 0 means the default 4h
        "center": 0.0,
        "centers": "1.2,-0.8",
        "widths": "0.5,0.3",
        "weights": "1.0,0.5",
    },
    "schedule": {
        "t0": 0.0,
        "t_end": 10.0,
        "dyadic_start": 0.25,
        "dyadic_count": 0,
        "log_per_decade": 16,
        "dt_max": 0.1,
        "tail": True,
        "fit_t_min": 0.1,
    },
    "elliptic": {
        "alpha": 0.0,  # 0 means 1/m
        "tol": 1e-6,
        "seed_scale": 0.0,  # 0 means the default small seed
        "max_iter": 800,
        "operator": "riesz",
        "input": "",
        "branch": "both",
    },
    "thresholds": {
        "slow_threshold": 0.10,
        "fast_threshold": 0.05,
        "giant_slack": 1e-8,
        "monotone_slack": 1e-10,
        "consistency_tol": 0.02,
        "selfsim_tol": 0.02,
        "identity_tol": 0.02,
        "cross_tol": 0.02,
        "leakage_tol": 0.5,
        "inner_frac": 0.25,
        "flux_t0": 1.0,
    },
    "output": {"dir": "out", "write_fields": True, "seed": 0},
}


@dataclass
class RunConfig:
    kind: str
    sections: dict

    def __getitem__(self, sec: str) -> dict:
        return self.sections[sec]


def _coerce(section: str, key: str, raw: str, lineno: int):
    ref = DEFAULTS[section][key]
    raw = raw.strip()
    try:
        if isinstance(ref, bool):
            if raw.lower() in ("true", "on", "yes", "1"):
                return True
            if raw.lower() in ("false", "off", "no", "0"):
                return False
            raise ValueError(raw)
        if isinstance(ref, int) and not isinstance(ref, bool):
            return int(raw)
        if isinstance(ref, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {raw!r} for {section}.{key}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config; unknown keys are rejected, defaults
    fill everything else."""
    sections = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    kind = None
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in sections:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            current = name
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {stripped!r}")
        key, val = (part.strip() for part in stripped.split("=", 1))
        if current is None:
            if key != "kind":
                raise ConfigError(
                    f"line {lineno}: key {key!r} outside any section (only 'kind' is top-level)"
                )
            if val not in EXPERIMENTS:
                raise ConfigError(
                    f"line {lineno}: unknown experiment kind {val!r}; expected one of {EXPERIMENTS}"
                )
            kind = val
            continue
        if key not in sections[current]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{current}]")
        sections[current][key] = _coerce(current, key, val, lineno)
    if kind is None:
        raise ConfigError("missing required key: kind")
    cfg = RunConfig(kind=kind, sections=sections)
    _validate(cfg)
    return cfg


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        path, val = item.split("=", 1)
        if path.strip() == "kind":
            if val.strip() not in EXPERIMENTS:
                raise ConfigError(f"unknown experiment kind {val!r}")
            cfg.kind = val.strip()
            continue
        if "." not in path:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        sec, key = (p.strip() for p in path.split(".", 1))
        if sec not in cfg.sections or key not in cfg.sections[sec]:
            raise ConfigError(f"unknown override target {sec}.{key}")
        cfg.sections[sec][key] = _coerce(sec, key, val, 0)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    md = cfg["model"]
    two_s = 2.0 * md["s"]
    if not 0.0 < md["s"] < 1.0:
        raise ConfigError(f"s must lie in (0, 1): got s={md['s']:g}")
    if md["density"] == "slow":
        if not md["gamma"] < two_s:
            raise ConfigError(
                f"slow regime requires gamma < 2s = {two_s:g}: got gamma={md['gamma']:g}, s={md['s']:g}"
            )
        if md["gamma"] > cfg["grid"]["dim"] - two_s:
            raise ConfigError(
                f"slow regime requires gamma <= d - 2s = {cfg['grid']['dim'] - two_s:g}: "
                f"got gamma={md['gamma']:g}"
            )
    elif md["density"] == "fast":
        if not md["gamma"] > two_s:
            raise ConfigError(
                f"fast regime requires gamma > 2s = {two_s:g}: got gamma={md['gamma']:g}, s={md['s']:g}"
            )
    elif md["density"] == "pure-power":
        if not md["gamma"] < cfg["grid"]["dim"]:
            raise ConfigError(
                f"pure-power weight requires gamma < d: got gamma={md['gamma']:g}"
            )
    else:
        raise ConfigError(f"unknown density kind {md['density']!r}")
    if cfg["grid"]["n"] % 2 != 0 or cfg["grid"]["L"] <= 0:
        raise ConfigError("grid requires even n and positive L")


# --- assembly helpers -------------------------------------------------------


def _model_params(cfg: RunConfig) -> ModelParams:
    md = cfg["model"]
    return ModelParams(
        m=md["m"],
        s=md["s"],
        d=cfg["grid"]["dim"],
        gamma=md["gamma"],
        gamma0=md["gamma0"],
        c_inf=md["c_inf"],
        C0=md["C0"],
        M=md["M"],
        eps_reg=md["eps_reg"],
    )


def _grid(cfg: RunConfig):
    g = cfg["grid"]
    return build_grid(g["dim"], g["n"], g["L"])


def _dyadic_times(cfg: RunConfig):
    sc = cfg["schedule"]
    if sc["dyadic_count"] <= 0:
        return []
    return [sc["dyadic_start"] * 2.0 ** k for k in range(sc["dyadic_count"])]


def _parse_floats(raw: str):
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def _datum(cfg: RunConfig, grid, model) -> Field:
    dt = cfg["datum"]
    mass = cfg["model"]["M"]
    if dt["type"] == "bump":
        width = dt["width"] if dt["width"] > 0 else None
        return make_bump_datum(grid, model, mass, center=dt["center"], width=width)
    if dt["type"] == "bimodal":
        centers = _parse_floats(dt["centers"])
        widths = _parse_floats(dt["widths"])
        weights = _parse_floats(dt["weights"])
        if not len(centers) == len(widths) == len(weights):
            raise ConfigError("bimodal datum needs matching centers/widths/weights lists")
        d = grid.dim

        def profile(*xs):
            out = 0.0
            for c, w, a in zip(centers, widths, weights):
                r2 = sum((x - c) ** 2 for x in xs)
                out = out + a * (w ** 2 + r2) ** (-(d + 2.0) / 2.0)
            return out

        f = Field.from_function(grid, profile)
        f.values *= mass / weighted_mass(f, model.rho)
        return f
    if dt["type"] == "separable":
        raise ConfigError("the separable datum is built by verdict-fast from the elliptic solution")
    raise ConfigError(f"unknown datum type {dt['type']!r}")


def _derived(cfg: RunConfig) -> dict:
    md = cfg["model"]
    d = cfg["grid"]["dim"]
    out = {
        "h": 2.0 * cfg["grid"]["L"] / cfg["grid"]["n"],
        "C_ds": frac_lap_constant(d, md["s"]),
        "k_sd": riesz_constant(d, md["s"]) if d > 2 * md["s"] else None,
        "C_m": (md["m"] - 1.0) ** (-1.0 / (md["m"] - 1.0)),
    }
    if md["gamma"] < 2.0 * md["s"]:
        try:
            ex = scaling_exponents(_model_params(cfg))
            out.update({"kappa": ex.kappa, "alpha": ex.alpha_ss, "beta": ex.beta_sm})
        except ValueError:
            pass
    return out


def write_manifest(cfg: RunConfig, out_dir: Path, artifacts, summary) -> Path:
    manifest = {
        "kind": cfg.kind,
        "config": cfg.sections,
        "derived": _derived(cfg),
        "artifacts": sorted(artifacts),
        "summary": summary,
        "fpme_version": __version__,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return path


def _write_csv_rows(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _write_run_log(state, out_dir: Path, artifacts) -> None:
    log = state.log
    path = out_dir / "run_log.csv"
    _write_csv_rows(
        path,
        ["t", "mass", "sup", "energy", "dissipation"],
        zip(log.times, log.mass, log.sup, log.energy, log.dissipation),
    )
    artifacts.append(path.name)


# --- experiments ------------------------------------------------------------


def _exp_validate_operators(cfg: RunConfig, out_dir: Path):
    md = cfg["model"]
    th = cfg["thresholds"]
    s = md["s"]
    gdef = cfg["grid"]
    artifacts: list = []
    rows = []
    residuals = []
    for n in (gdef["n"] // 4, gdef["n"] // 2, gdef["n"]):
        grid = build_grid(gdef["dim"], n, gdef["L"])
        g = Field.from_function(grid, lambda x: np.exp(-(x ** 2)))
        res = check_inverse_identity(g, s)
        residuals.append(res)
        rows.append((n, res))
    ok = residuals[-1] <= th["identity_tol"] and all(
        residuals[i + 1] < residuals[i] for i in range(len(residuals) - 1)
    )
    grid = build_grid(gdef["dim"], gdef["n"], gdef["L"])
    op = build_quadrature_operator(grid, s)
    mask = inner_mask(grid, 0.5)
    cross = []
    for fn in (
        lambda x: np.exp(-(x ** 2)),
        lambda x: np.exp(-0.7 * (x - 2.0) ** 2),
        lambda x: np.exp(-0.5 * x ** 2) * np.cos(2.0 * x),
    ):
        f = Field.from_function(grid, fn)
        rel = float(
            np.max(np.abs(op.apply(f).values[mask] - frac_laplacian_spectral(f, s).values[mask]))
            / np.max(np.abs(frac_laplacian_spectral(f, s).values))
        )
        cross.append(rel)
    ok = ok and all(c <= th["cross_tol"] for c in cross)
    path = out_dir / "operator_residuals.csv"
    _write_csv_rows(path, ["n", "inverse_identity_residual"], rows)
    artifacts.append(path.name)
    summary = {
        "inverse_identity": residuals,
        "cross_validation": cross,
        "passed": bool(ok),
    }
    return (EXIT_OK if ok else EXIT_THRESHOLD), artifacts, summary


def _run_state(cfg: RunConfig, out_dir: Path, artifacts):
    grid = _grid(cfg)
    params = _model_params(cfg)
    model = make_density(cfg["model"]["density"], params, grid)
    sc = cfg["schedule"]
    u0 = _datum(cfg, grid, model)
    state = make_state(
        u0, model, t0=sc["t0"], tail_enabled=sc["tail"], dt_max=sc["dt_max"]
    )
    times = [t for t in _dyadic_times(cfg) if t >= sc["t0"]]
    evolve(state, sc["t_end"], snapshot_times=times, log_points_per_decade=sc["log_per_decade"])
    return state, times


def _exp_run_parabolic(cfg: RunConfig, out_dir: Path):
    artifacts: list = []
    state, _ = _run_state(cfg, out_dir, artifacts)
    _write_run_log(state, out_dir, artifacts)
    if cfg["output"]["write_fields"]:
        fpath = out_dir / "final_field.bin"
        write_field_binary(state.u, fpath, s=cfg["model"]["s"])
        write_field_csv(state.u, out_dir / "final_field.csv")
        artifacts += [fpath.name, "final_field.csv"]
    sup = np.asarray(state.log.sup)
    sup_monotone = bool(np.all(np.diff(sup) <= 1e-12 * sup[0]))
    mass0 = state.log.mass[0]
    identity_residual = abs(state.log.mass[-1] + state.tail_flux - mass0) / mass0
    ok = identity_residual <= 1e-9
    summary = {
        "steps": state.steps,
        "mass_initial": mass0,
        "mass_final": state.log.mass[-1],
        "tail_flux": state.tail_flux,
        "leakage_identity_residual": identity_residual,
        "sup_monotone": sup_monotone,
    }
    if not ok or not sup_monotone:
        return EXIT_INVARIANT, artifacts, summary
    return EXIT_OK, artifacts, summary


def _solve_elliptic(cfg: RunConfig, grid=None):
    params = _model_params(cfg)
    if grid is None:
        grid = _grid(cfg)
    model = make_density("fast", params, grid)
    ec = cfg["elliptic"]
    alpha = ec["alpha"] if ec["alpha"] > 0 else 1.0 / params.m
    problem = ell.make_problem(model, alpha, operator=ec["operator"])
    seed = ec["seed_scale"] if ec["seed_scale"] > 0 else None
    sols = {}
    if ec["branch"] in ("above", "both"):
        sols["above"] = ell.solve_from_above(problem, tol=ec["tol"], max_iter=ec["max_iter"])
    if ec["branch"] in ("below", "both"):
        sols["below"] = ell.solve_from_below(
            problem, tol=ec["tol"], seed_scale=seed, max_iter=ec["max_iter"]
        )
    return problem, sols


def _exp_solve_elliptic(cfg: RunConfig, out_dir: Path):
    artifacts: list = []
    problem, sols = _solve_elliptic(cfg)
    primary = sols.get("above") or sols.get("below")
    w = primary.w
    md = cfg["model"]
    fit = ell.decay_fit(w, problem)
    sidecar = {
        "alpha": problem.alpha,
        "gamma": md["gamma"],
        "s": md["s"],
        "operator": problem.operator,
        "C_hat": problem.C_hat,
        "C_bar": problem.C_bar,
        "iterations": {k: s.iterations for k, s in sols.items()},
        "residual": primary.fixed_point_residual(),
        "kappa_hat": fit["kappa_hat"],
        "expected_kappa": fit["expected_kappa"],
        "energy": primary.energy,
    }
    if len(sols) == 2:
        gap = float(
            np.max(np.abs(sols["above"].w.values - sols["below"].w.values))
            / np.max(sols["above"].w.values)
        )
        sidecar["branch_gap"] = gap
        ok = gap <= 10.0 * cfg["elliptic"]["tol"]
    else:
        ok = True
    e59 = bool(np.all(w.values <= problem.C_bar * problem.pot_rho + 1e-12 * problem.C_hat))
    sidecar["e59_bound"] = e59
    if cfg["output"]["write_fields"]:
        write_field_binary(w, out_dir / "elliptic_w.bin", s=md["s"])
        write_field_csv(w, out_dir / "elliptic_w.csv")
        artifacts += ["elliptic_w.bin", "elliptic_w.csv"]
    (out_dir / "elliptic.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=float) + "\n")
    artifacts.append("elliptic.json")
    if not e59:
        return EXIT_INVARIANT, artifacts, sidecar
    return (EXIT_OK if ok else EXIT_THRESHOLD), artifacts, sidecar


def _exp_barenblatt(cfg: RunConfig, out_dir: Path):
    artifacts: list = []
    grid = _grid(cfg)
    params = _model_params(cfg)
    th = cfg["thresholds"]
    t_ref = cfg["schedule"]["t_end"]
    result = barenblatt_profile(
        params.M,
        params,
        grid,
        t_ref,
        check_at_factor=4.0,
        dt_max=cfg["schedule"]["dt_max"],
        leakage_tol=th["leakage_tol"],
    )
    if cfg["output"]["write_fields"]:
        write_field_binary(result.profile, out_dir / "barenblatt_profile.bin", s=params.s)
        write_field_csv(result.profile, out_dir / "barenblatt_profile.csv")
        artifacts += ["barenblatt_profile.bin", "barenblatt_profile.csv"]
    summary = {
        "t_ref": t_ref,
        "self_similarity_error": result.self_similarity_error,
        "mass_weighted": result.mass_weighted,
        "mass_expected": params.M / params.c_inf,
        "leakage_fraction": result.leakage_fraction,
    }
    ok = result.self_similarity_error <= th["selfsim_tol"]
    (out_dir / "barenblatt.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    artifacts.append("barenblatt.json")
    return (EXIT_OK if ok else EXIT_THRESHOLD), artifacts, summary


def _exp_verdict_slow(cfg: RunConfig, out_dir: Path):
    artifacts: list = []
    grid = _grid(cfg)
    params = _model_params(cfg)
    th = cfg["thresholds"]
    sc = cfg["schedule"]
    exponents = scaling_exponents(params)
    model = make_density(cfg["model"]["density"], params, grid)
    u0 = _datum(cfg, grid, model)
    state = make_state(u0, model, t0=sc["t0"], dt_max=sc["dt_max"])
    times = _dyadic_times(cfg)
    if len(times) < 6:
        raise ConfigError("verdict-slow needs at least 6 dyadic times (schedule.dyadic_count)")
    evolve(state, times[-1], snapshot_times=times)
    # reference: the source-type solution of the pure-power problem on the
    # same grid, compared at equal times so extraction transients cancel
    pp = ModelParams(
        m=params.m, s=params.s, d=params.d, gamma=params.gamma,
        c_inf=params.c_inf, M=params.M, eps_reg=1e-9 * grid.spacing,
    )
    ref_model = make_density("pure-power", pp, grid)
    ref_state = make_state(make_bump_datum(grid, ref_model, params.M), ref_model, dt_max=sc["dt_max"])
    evolve(ref_state, times[-1], snapshot_times=times)
    verdict = slow_decay_verdict(
        state, ref_state, exponents, times, params.M, threshold=th["slow_threshold"]
    )
    _write_csv_rows(out_dir / "slow_distance.csv", ["t", "distance"], zip(verdict.times, verdict.metric))
    artifacts.append("slow_distance.csv")
    summary = {
        "passed": verdict.passed,
        "final_error": verdict.final_error,
        "monotone_from": verdict.monotone_from,
        "threshold": verdict.threshold,
        "metric": verdict.metric,
        "times": verdict.times,
    }
    (out_dir / "verdict_slow.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    artifacts.append("verdict_slow.json")
    return (EXIT_OK if verdict.passed else EXIT_THRESHOLD), artifacts, summary


def _load_or_solve_w(cfg: RunConfig, grid):
    ec = cfg["elliptic"]
    if not ec["input"]:
        raise ConfigError(
            "verdict-fast requires elliptic.input (path to a solution binary or 'inline')"
        )
    if ec["input"] == "inline":
        _, sols = _solve_elliptic(cfg, grid=grid)
        sol = sols.get("above") or sols.get("below")
        return sol.w
    path = Path(ec["input"])
    if not path.exists():
        raise ConfigError(f"elliptic.input path does not exist: {path}")
    from .fields import read_field_binary

    w, _ = read_field_binary(path)
    if w.grid != grid:
        raise ConfigError("elliptic solution grid does not match the run grid")
    return w


def _exp_verdict_fast(cfg: RunConfig, out_dir: Path):
    artifacts: list = []
    grid = _grid(cfg)
    params = _model_params(cfg)
    th = cfg["thresholds"]
    sc = cfg["schedule"]
    model = make_density("fast", params, grid)
    w = _load_or_solve_w(cfg, grid)
    C_m = (params.m - 1.0) ** (-1.0 / (params.m - 1.0))
    exponents = scaling_exponents(
        ModelParams(m=params.m, s=params.s, d=params.d, gamma=0.0)
    )
    times = _dyadic_times(cfg)
    if len(times) < 3:
        raise ConfigError("verdict-fast needs dyadic times (schedule.dyadic_count)")
    target = C_m * w.values ** (1.0 / params.m)
    if cfg["datum"]["type"] == "separable":
        # consistency run: datum C_m w^(1/m) placed at t = dyadic_start
        u0 = Field(grid, target.copy())
        t0 = times[0]
        state = make_state(u0, model, t0=t0, dt_max=sc["dt_max"])
        evolve(state, times[-1], snapshot_times=times)
        inner = grid.radii() <= th["inner_frac"] * grid.half_extent
        devs = []
        for t in times:
            v = t ** (1.0 / (params.m - 1.0)) * state.log.snapshot_at(t)
            devs.append(float(np.sum(np.abs(v - target)[inner]) / np.sum(target[inner])))
        worst = max(devs)
        summary = {
            "mode": "consistency",
            "deviations": devs,
            "worst": worst,
            "passed": worst <= th["consistency_tol"],
            "times": times,
        }
        (out_dir / "verdict_fast.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n"
        )
        artifacts.append("verdict_fast.json")
        return (EXIT_OK if summary["passed"] else EXIT_THRESHOLD), artifacts, summary
    u0 = _datum(cfg, grid, model)
    state = make_state(u0, model, t0=sc["t0"], dt_max=sc["dt_max"])
    evolve(state, times[-1], snapshot_times=times)
    verdict = fast_decay_verdict(
        state,
        w,
        exponents,
        times,
        inner_frac=th["inner_frac"],
        threshold=th["fast_threshold"],
        giant_slack=th["giant_slack"],
        monotone_slack=th["monotone_slack"],
    )
    pot = ell.build_riesz_operator(grid, params.s).apply_values(model.rho.values)
    flux = flux_potential_check(state, th["flux_t0"], pot)
    deriv = time_derivative_check(state, params.M)
    _write_csv_rows(out_dir / "fast_distance.csv", ["t", "inner_l1"], zip(verdict.times, verdict.metric))
    artifacts.append("fast_distance.csv")
    summary = {
        "passed": verdict.passed,
        "final_error": verdict.final_error,
        "threshold": verdict.threshold,
        "details": verdict.details,
        "metric": verdict.metric,
        "times": verdict.times,
        "flux_potential": flux,
        "time_derivative": deriv,
    }
    (out_dir / "verdict_fast.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    artifacts.append("verdict_fast.json")
    return (EXIT_OK if verdict.passed else EXIT_THRESHOLD), artifacts, summary


def _exp_report(cfg: RunConfig, out_dir: Path):
    artifacts: list = []
    scanned = []
    root = Path(cfg["output"]["dir"])
    for mf in sorted(root.glob("**/manifest.json")):
        try:
            data = json.loads(mf.read_text())
        except json.JSONDecodeError:
            continue
        scanned.append(
            {
                "path": str(mf.parent),
                "kind": data.get("kind"),
                "summary": data.get("summary", {}),
            }
        )
    lines = ["# fpme report", ""]
    for entry in scanned:
        lines.append(f"## {entry['kind']} ({entry['path']})")
        for key, val in sorted(entry["summary"].items()):
            lines.append(f"- {key}: {val}")
        lines.append("")
    (out_dir / "report.md").write_text("\n".join(lines))
    (out_dir / "report.json").write_text(json.dumps(scanned, indent=2, sort_keys=True, default=float) + "\n")
    artifacts += ["report.md", "report.json"]
    return EXIT_OK, artifacts, {"runs": len(scanned)}


_RUNNERS = {
    "validate-operators": _exp_validate_operators,
    "run-parabolic": _exp_run_parabolic,
    "solve-elliptic": _exp_solve_elliptic,
    "barenblatt": _exp_barenblatt,
    "verdict-slow": _exp_verdict_slow,
    "verdict-fast": _exp_verdict_fast,
    "report": _exp_report,
}


def run(cfg: RunConfig, out_dir=None) -> int:
    """Execute the configured experiment; returns the exit status."""
    out_dir = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg["output"]["seed"])
    try:
        code, artifacts, summary = _RUNNERS[cfg.kind](cfg, out_dir)
    except ConfigError:
        raise
    except (InvariantViolation, RuntimeError) as exc:
        write_manifest(cfg, out_dir, [], {"error": str(exc)})
        return EXIT_INVARIANT
    manifest = write_manifest(cfg, out_dir, artifacts, summary)
    ex = _derived(cfg)
    if "kappa" in ex:
        print(f"exponents: kappa = {ex['kappa']:g}, alpha = {ex['alpha']:g}")
    print(f"{cfg.kind}: exit {code}; manifest {manifest}")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fpme",
        description="Numerical experiments for the weighted fractional porous medium equation",
    )
    parser.add_argument("kind", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to the run configuration")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config entry (repeatable)",
    )
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_text())
        cfg.kind = args.kind
        _validate(cfg)
        cfg = apply_overrides(cfg, args.override)
        return run(cfg, out_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
