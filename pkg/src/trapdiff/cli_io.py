"""Command-line front end: config parsing, scenario orchestration, CSV output.

Every experiment is a named scenario driven by a line-oriented ``key = value``
config file plus ``--key value`` overrides.  All parameters are validated
before any solver starts; outputs are deterministic CSVs plus an
``effective_config.txt`` echo that round-trips through the parser.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path


from .errors import ConfigurationError, TrapdiffError
from .geometry import CartesianGrid2D, CircleLevelSet, Interval1D
from .potential import (PotentialSpec, max_drift_slope, peclet_number,
                        solve_phi_for_M, sutherland_constant, tail_ratio,
                        taylor_coefficient_Mk, trap_capacity_I,
                        trap_coefficient_M)
from .solver_full import (FullConfig, FullSolver1D, FullSolver2D, GaussianIC,
                          SlabGrid2D, write_series, write_snapshot_1d,
                          write_snapshot_2d)
from .solver_multiscale import MultiscaleConfig, MultiscaleSolver1D, MultiscaleSolver2D
from . import validation as val

FLOAT_FMT = "%.17g"

SCENARIOS = ("full-1d", "multiscale-1d", "full-2d-slab", "full-2d-bubble",
             "multiscale-2d-bubble", "compare-1d", "compare-2d", "coeffs",
             "dof", "reproduce-paper")

# key -> (type, default).  Defaults marked None are required per scenario.
_FLOAT_LIST = "float_list"
KEY_SPECS = {
    "D": (float, 1.0),
    "L": (float, 2.0),
    "phi": (float, None),
    "M": (float, None),
    "eps": (float, None),
    "dx": (float, None),
    "dt": (float, None),          # default: dx (or 2a/N in 2D)
    "t_final": (float, None),
    "sigma": (float, None),
    "v0": (float, None),
    "x_m": (float, None),
    "y_m": (float, None),
    "N": (int, None),             # cells per side (2D) / bulk cells (reduced 1D)
    "n_y": (int, None),
    "a": (float, 1.0),            # half-width of the 2D box
    "R": (float, None),           # bubble radius
    "n_b": (int, None),           # surface nodes (2D reduced model)
    "saturation": (bool, False),
    "mobility": (str, "linear"),
    "eps_list": (_FLOAT_LIST, None),
    "dx_list": (_FLOAT_LIST, None),
    "out_stride": (int, 1),
    "n": (int, None),             # points across the layer (dof scenario)
    "N_bulk": (int, None),        # bulk resolution (dof scenario)
    "eps_tilde": (float, None),
    "k_max": (int, 3),            # Taylor orders reported by the coeffs scenario
}

_REQUIRED = {
    "full-1d": ("eps", "phi", "dx", "t_final", "sigma", "v0", "x_m"),
    "multiscale-1d": ("M", "dx", "t_final", "sigma", "v0", "x_m"),
    "full-2d-slab": ("eps", "phi", "N", "n_y", "t_final", "sigma", "v0", "x_m", "y_m"),
    "full-2d-bubble": ("eps", "phi", "N", "R", "t_final", "sigma", "v0", "x_m", "y_m"),
    "multiscale-2d-bubble": ("M", "N", "R", "t_final", "sigma", "v0", "x_m", "y_m"),
    "compare-1d": ("M", "eps_list", "dx", "t_final", "sigma", "v0", "x_m"),
    "compare-2d": ("eps", "phi", "N", "R", "t_final", "sigma", "v0", "x_m", "y_m"),
    "coeffs": ("phi", "eps"),
    "dof": ("n", "N_bulk", "eps_tilde"),
    "reproduce-paper": (),
}


@dataclass
class ScenarioConfig:
    """One fully validated scenario: its name plus every effective parameter."""

    scenario: str
    params: dict

    def get(self, key, default=None):
        return self.params.get(key, default)

    def __getitem__(self, key):
        return self.params[key]


def _coerce(key: str, raw: str):
    if key not in KEY_SPECS:
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = KEY_SPECS[key][0]
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == _FLOAT_LIST:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key!r}: {raw!r}") from exc


def _read_kv_file(path: Path) -> dict:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("scenario"):
            key, _, raw = text.partition("=")
            if key.strip() == "scenario":
                values["scenario"] = raw.strip()
                continue
        if "=" not in text:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in text.split("=", 1))
        values[key] = _coerce(key, raw)
    return values


def parse_config(scenario: str, config_file: Path | None,
                 overrides: dict) -> ScenarioConfig:
    """Merge file values and flag overrides, fill defaults, validate fail-fast."""
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {scenario!r}")
    values = {}
    if config_file is not None:
        file_values = _read_kv_file(config_file)
        file_scenario = file_values.pop("scenario", None)
        if file_scenario is not None and file_scenario != scenario:
            raise ConfigurationError(
                f"config file names scenario {file_scenario!r}, got {scenario!r}"
            )
        values.update(file_values)
    for key, raw in overrides.items():
        values[key] = _coerce(key, raw)
    for key, (_, default) in KEY_SPECS.items():
        if key not in values and default is not None:
            values[key] = default
    missing = [k for k in _REQUIRED[scenario] if k not in values]
    if missing:
        raise ConfigurationError(
            f"scenario {scenario!r} requires keys: {', '.join(missing)}"
        )
    cfg = ScenarioConfig(scenario=scenario, params=values)
    _validate(cfg)
    return cfg


def _spec_of(cfg: ScenarioConfig) -> PotentialSpec:
    return PotentialSpec(phi=cfg["phi"], epsilon=cfg["eps"], L=cfg["L"])


def _ic_of(cfg: ScenarioConfig) -> GaussianIC:
    return GaussianIC(v0=cfg["v0"], sigma=cfg["sigma"], x_m=cfg["x_m"],
                      y_m=cfg.get("y_m"))


def _full_1d_config(cfg: ScenarioConfig) -> FullConfig:
    spec = _spec_of(cfg)
    dx = cfg["dx"]
    n = int(round((1.0 + cfg["eps"]) / dx))
    grid = Interval1D(x_left=1.0 - n * dx, n_cells=n, x_right=1.0)
    return FullConfig(spec=spec, grid=grid, ic=_ic_of(cfg),
                      t_final=cfg["t_final"], dt=cfg.get("dt"), D=cfg["D"],
                      mobility=cfg["mobility"])


def _multiscale_1d_config(cfg: ScenarioConfig) -> MultiscaleConfig:
    grid = Interval1D(x_left=0.0, n_cells=int(round(1.0 / cfg["dx"])))
    spec = None
    if cfg["saturation"]:
        eps = cfg.get("eps")
        if eps is None:
            raise ConfigurationError("saturated runs need eps (layer width)")
        phi = cfg.get("phi")
        if phi is None:
            phi = solve_phi_for_M(cfg["M"], eps, cfg["L"])
        spec = PotentialSpec(phi=phi, epsilon=eps, L=cfg["L"])
    return MultiscaleConfig(M=cfg["M"], grid=grid, ic=_ic_of(cfg),
                            t_final=cfg["t_final"], dt=cfg.get("dt"),
                            D=cfg["D"], saturation=cfg["saturation"], spec=spec)


def _full_2d_slab_config(cfg: ScenarioConfig) -> FullConfig:
    spec = _spec_of(cfg)
    grid = SlabGrid2D(x_left=-cfg["eps"], n_x=cfg["N"], n_y=cfg["n_y"])
    return FullConfig(spec=spec, grid=grid, ic=_ic_of(cfg),
                      t_final=cfg["t_final"], dt=cfg.get("dt"), D=cfg["D"],
                      mobility=cfg["mobility"])


def _full_2d_bubble_config(cfg: ScenarioConfig) -> FullConfig:
    spec = _spec_of(cfg)
    grid = CartesianGrid2D(a=cfg["a"], N=cfg["N"])
    ls = CircleLevelSet(radius=cfg["R"])
    return FullConfig(spec=spec, grid=grid, ic=_ic_of(cfg),
                      t_final=cfg["t_final"], dt=cfg.get("dt"), D=cfg["D"],
                      mobility=cfg["mobility"], level_set=ls)


def _multiscale_2d_config(cfg: ScenarioConfig) -> MultiscaleConfig:
    grid = CartesianGrid2D(a=cfg["a"], N=cfg["N"])
    ls = CircleLevelSet(radius=cfg["R"])
    spec = None
    if cfg["saturation"]:
        eps = cfg.get("eps")
        phi = cfg.get("phi")
        if eps is None:
            raise ConfigurationError("saturated runs need eps (layer width)")
        if phi is None:
            phi = solve_phi_for_M(cfg["M"], eps, cfg["L"])
        spec = PotentialSpec(phi=phi, epsilon=eps, L=cfg["L"])
    return MultiscaleConfig(M=cfg["M"], grid=grid, ic=_ic_of(cfg),
                            t_final=cfg["t_final"], dt=cfg.get("dt"),
                            D=cfg["D"], saturation=cfg["saturation"],
                            spec=spec, level_set=ls, n_b=cfg.get("n_b"))


_BUILDERS = {
    "full-1d": _full_1d_config,
    "multiscale-1d": _multiscale_1d_config,
    "full-2d-slab": _full_2d_slab_config,
    "full-2d-bubble": _full_2d_bubble_config,
    "multiscale-2d-bubble": _multiscale_2d_config,
}


def _validate(cfg: ScenarioConfig):
    """Construct every solver config the scenario will need, without running."""
    s = cfg.scenario
    if s in _BUILDERS:
        _BUILDERS[s](cfg)
    elif s == "compare-1d":
        for eps in cfg["eps_list"]:
            if cfg["dx"] > eps * cfg["L"] / 10.0:
                raise ConfigurationError(
                    f"dx = {cfg['dx']} does not resolve the trap layer at "
                    f"eps = {eps} (need dx <= eps L/10)"
                )
        _multiscale_1d_config(cfg)
    elif s == "compare-2d":
        _full_2d_bubble_config(cfg)
        sub = ScenarioConfig("multiscale-2d-bubble",
                             dict(cfg.params, M=trap_coefficient_M(_spec_of(cfg))))
        _multiscale_2d_config(sub)
    elif s == "coeffs":
        _spec_of(cfg)
    elif s == "dof":
        for d in (1, 2, 3):
            val.dof_estimate(d, cfg["n"], cfg["N_bulk"], cfg["eps_tilde"])


def write_effective_config(cfg: ScenarioConfig, out_dir: Path):
    lines = [f"scenario = {cfg.scenario}"]
    for key in sorted(cfg.params):
        v = cfg.params[key]
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = FLOAT_FMT % v
        elif isinstance(v, tuple):
            text = ", ".join(FLOAT_FMT % x for x in v)
        else:
            text = str(v)
        lines.append(f"{key} = {text}")
    (out_dir / "effective_config.txt").write_text("\n".join(lines) + "\n")


# -- scenario runners --------------------------------------------------------

def _stride(series, k):
    return series[::max(1, k)]


def _run_full_1d(cfg, out):
    solver = FullSolver1D(_full_1d_config(cfg))
    _, series = solver.run()
    write_snapshot_1d(out / "snapshot.csv", solver.x, solver.state.field)
    write_series(out / "series.csv", _stride(series, cfg["out_stride"]))
    val.write_fraction_series(
        val.entrapped_fraction_series(series, cfg["v0"]), out / "fraction-vs-time.csv")


def _run_multiscale_1d(cfg, out):
    solver = MultiscaleSolver1D(_multiscale_1d_config(cfg))
    _, series = solver.run()
    x = solver.config.grid.centers()
    write_snapshot_1d(out / "snapshot.csv", x, solver.u[1:])
    write_series(out / "series.csv", _stride(series, cfg["out_stride"]))
    val.write_fraction_series(
        val.entrapped_fraction_series(series, cfg["v0"]), out / "fraction-vs-time.csv")


def _run_full_2d_slab(cfg, out):
    solver = FullSolver2D(_full_2d_slab_config(cfg))
    _, series = solver.run()
    write_snapshot_2d(out / "snapshot.csv", solver.xs, solver.ys, solver.state.field)
    write_series(out / "series.csv", _stride(series, cfg["out_stride"]))


def _run_full_2d_bubble(cfg, out):
    solver = FullSolver2D(_full_2d_bubble_config(cfg))
    _, series = solver.run()
    write_snapshot_2d(out / "snapshot.csv", solver.xs, solver.ys, solver.state.field)
    write_series(out / "series.csv", _stride(series, cfg["out_stride"]))


def _run_multiscale_2d(cfg, out):
    solver = MultiscaleSolver2D(_multiscale_2d_config(cfg))
    _, series = solver.run()
    grid = solver.config.grid
    write_snapshot_2d(out / "snapshot.csv", grid.centers_1d(), grid.centers_1d(),
                      solver.bulk_field())
    write_series(out / "series.csv", _stride(series, cfg["out_stride"]))
    st = solver.surface_state()
    val.write_boundary_profile(st.thetas, st.c_B, out / "boundary-profile-vs-theta.csv")
    val.write_fraction_series(
        val.entrapped_fraction_series(series, cfg["v0"]), out / "fraction-vs-time.csv")


def _compare_cell(args):
    """One (eps) cell of the 1D comparison sweep; used by worker processes."""
    M, eps, ic_fields, t_final, dx, L, D, out_times = args
    ic = GaussianIC(**ic_fields)
    full, ms = val.build_comparison_pair(M, eps, ic, t_final, dx, L=L, D=D)
    return val.compare_models_1d(full, ms, out_times)


def _run_compare_1d(cfg, out, jobs=1):
    M, dx, t_final = cfg["M"], cfg["dx"], cfg["t_final"]
    n_out = 10
    out_times = [round(k * t_final / n_out, 12) for k in range(1, n_out + 1)]
    out_times = [t for t in out_times
                 if abs(t / dx - round(t / dx)) < 1e-9] or [t_final]
    ic_fields = dict(v0=cfg["v0"], sigma=cfg["sigma"], x_m=cfg["x_m"])
    cells = [(M, eps, ic_fields, t_final, dx, cfg["L"], cfg["D"], out_times)
             for eps in cfg["eps_list"]]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_compare_cell, cells))
    else:
        reports = [_compare_cell(c) for c in cells]
    for rep in reports:
        val.write_error_report(
            rep, out / ("errors-vs-time-eps%.3g.csv" % rep.meta["eps"]))
    val.write_error_vs_eps(reports, out / "error-vs-eps.csv")
    if cfg.get("dx_list"):
        errors, _ = val.dx_independence_study(
            M, cfg["eps_list"], cfg["dx_list"], GaussianIC(**ic_fields),
            t_final, L=cfg["L"])
        val.write_error_vs_dx(cfg["eps_list"], cfg["dx_list"], errors,
                              out / "error-vs-dx.csv")


def _run_compare_2d(cfg, out):
    spec = _spec_of(cfg)
    full = FullSolver2D(_full_2d_bubble_config(cfg))
    full.state = full.init_gaussian_equilibrated()
    sub = ScenarioConfig("multiscale-2d-bubble",
                         dict(cfg.params, M=trap_coefficient_M(spec)))
    ms = MultiscaleSolver2D(_multiscale_2d_config(sub))
    _, series_f = full.run()
    _, series_m = ms.run()
    n = min(len(series_f), len(series_m))
    v0 = cfg["v0"]
    rows = [(float(series_f[k, 0]),
             abs(series_f[k, 2] - series_m[k, 2]) / v0,
             abs((series_f[k, 1] - series_f[k, 2]) - series_m[k, 1]) / v0)
            for k in range(n)]
    val._write_rows(out / "errors-vs-time.csv", ["t", "e_S", "e_B_mass"], rows)
    st = ms.surface_state()
    val.write_boundary_profile(st.thetas, st.c_B, out / "boundary-profile-vs-theta.csv")


def _run_coeffs(cfg, out):
    spec = _spec_of(cfg)
    phi, L, eps = spec.phi, spec.L, spec.epsilon
    I_L = trap_capacity_I(phi, L)
    rows = [
        ("I_L", I_L),
        ("M", trap_coefficient_M(spec)),
        ("sutherland_constant", sutherland_constant(spec)),
        ("tail_ratio", tail_ratio(phi, L).value),
        ("max_drift_slope", max_drift_slope(spec)),
        ("peclet_at_dx_eps", peclet_number(spec, eps)),
    ]
    for k in range(1, cfg["k_max"] + 1):
        rows.append((f"M{k}", taylor_coefficient_Mk(spec, k)))
    val._write_rows(out / "coeffs.csv", ["quantity", "value"], rows)


def _run_dof(cfg, out):
    estimates = [val.dof_estimate(d, cfg["n"], cfg["N_bulk"], cfg["eps_tilde"])
                 for d in (1, 2, 3)]
    val.write_dof_table(estimates, out / "dof.csv")


def run_scenario(cfg: ScenarioConfig, out_dir: Path, jobs: int = 1) -> int:
    """Execute one scenario into out_dir; returns a process exit status."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out_dir)
    s = cfg.scenario
    if s == "full-1d":
        _run_full_1d(cfg, out_dir)
    elif s == "multiscale-1d":
        _run_multiscale_1d(cfg, out_dir)
    elif s == "full-2d-slab":
        _run_full_2d_slab(cfg, out_dir)
    elif s == "full-2d-bubble":
        _run_full_2d_bubble(cfg, out_dir)
    elif s == "multiscale-2d-bubble":
        _run_multiscale_2d(cfg, out_dir)
    elif s == "compare-1d":
        _run_compare_1d(cfg, out_dir, jobs=jobs)
    elif s == "compare-2d":
        _run_compare_2d(cfg, out_dir)
    elif s == "coeffs":
        _run_coeffs(cfg, out_dir)
    elif s == "dof":
        _run_dof(cfg, out_dir)
    else:
        raise ConfigurationError(f"unknown scenario {s!r}")
    return 0


# Desk-scale versions of every published experiment, runnable in minutes.
_REPRODUCE = [
    ("coeffs", {"phi": "10", "eps": "4e-3"}),
    ("dof", {"n": "10", "N_bulk": "100", "eps_tilde": "4e-3"}),
    ("full-1d", {"phi": "3.16", "eps": "4e-3", "dx": "2e-4",
                 "t_final": "0.05", "sigma": "0.1", "v0": "1e-6", "x_m": "0.5"}),
    ("multiscale-1d", {"M": "3", "dx": "1e-3", "t_final": "0.05",
                       "sigma": "0.1", "v0": "1e-6", "x_m": "0.5"}),
    ("compare-1d", {"M": "1", "eps_list": "4e-3,2e-3,1e-3", "dx": "1e-4",
                    "t_final": "0.05", "sigma": "0.1", "v0": "1e-6",
                    "x_m": "0.5"}),
    ("full-2d-slab", {"phi": "6", "eps": "0.02", "N": "512", "n_y": "64",
                      "t_final": "0.02", "sigma": "0.1", "v0": "1e-6",
                      "x_m": "0.5", "y_m": "0.5"}),
    ("full-2d-bubble", {"phi": "6", "eps": "0.02", "N": "512", "R": "0.25",
                        "a": "0.5", "t_final": "0.01", "sigma": "0.1",
                        "v0": "1e-6", "x_m": "0.0", "y_m": "0.35"}),
    ("multiscale-2d-bubble", {"M": "1", "N": "100", "R": "0.25", "a": "0.5",
                              "t_final": "0.05", "sigma": "0.1", "v0": "1e-6",
                              "x_m": "0.0", "y_m": "0.35"}),
    ("compare-2d", {"phi": "6", "eps": "0.02", "N": "512", "R": "0.25",
                    "a": "0.5", "t_final": "0.01", "sigma": "0.1",
                    "v0": "1e-6", "x_m": "0.0", "y_m": "0.35"}),
]


def run_reproduce(out_dir: Path, jobs: int = 1) -> int:
    """Run the desk-scale version of every scenario into subdirectories."""
    configs = [(name, parse_config(name, None, overrides))
               for name, overrides in _REPRODUCE]  # validate all up front
    status = 0
    for k, (name, cfg) in enumerate(configs):
        sub = out_dir / f"{k:02d}-{name}"
        print(f"[{k + 1}/{len(configs)}] {name} -> {sub}")
        status |= run_scenario(cfg, sub, jobs=jobs)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trapdiff",
        description="Particle diffusion with trapping boundary layers: "
                    "resolved and reduced models, comparisons, and tables.",
    )
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", type=Path, default=None,
                        help="key = value config file")
    parser.add_argument("--out", type=Path, required=True,
                        help="output directory (created if missing)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="max concurrent sweep cells")
    parser.add_argument("--key", action="append", nargs=2, default=[],
                        metavar=("NAME", "VALUE"),
                        help="override a config value (repeatable)")
    args, extra = parser.parse_known_args(argv)
    overrides = dict(args.key)
    # also accept bare --name value overrides for any known key
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            parser.error(f"unexpected argument {tok!r}")
        name = tok[2:]
        if name not in KEY_SPECS:
            parser.error(f"unknown config key {name!r}")
        try:
            overrides[name] = next(it)
        except StopIteration:
            parser.error(f"missing value for --{name}")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        if args.scenario == "reproduce-paper":
            if overrides:
                parser.error("reproduce-paper takes no config overrides")
            return run_reproduce(args.out, jobs=args.jobs)
        cfg = parse_config(args.scenario, args.config, overrides)
        return run_scenario(cfg, args.out, jobs=args.jobs)
    except TrapdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
