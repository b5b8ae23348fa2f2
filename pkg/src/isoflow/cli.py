"""Command-line entry point: ``isoflow <command> [options]``.

Parameters come from built-in defaults, then an optional flat ``key = value``
file (``--config``), then ``--set key=value`` and the dedicated flags. Every
run writes ``manifest.json`` into the output directory before any data file.

Exit codes: 0 success, 2 invalid configuration, 3 numerical guard tripped.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import bracket_flow as bf
from . import disorder_averages as da
from . import equilibrium_ensemble as ee
from . import fokker_planck_solver as fp
from . import stochastic_thermalizer as st
from . import su3_partition as su3
from .hermitian_core import reference_hamiltonian, to_bloch

EXIT_OK, EXIT_INVALID, EXIT_GUARD = 0, 2, 3
GUARD_ERRORS = (
    bf.FlowGuardError,
    st.EnsembleGuardError,
    fp.CFLError,
    fp.ConvergenceError,
    su3.QuadratureError,
)
COMMANDS = ("flow", "thermalize", "equilibrium", "fpde", "averages", "partition", "figures")
SEED_MAX = 2**64


class ConfigError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# -- value parsers ------------------------------------------------------------------


def _float(s):
    return float(s)


def _positive(s):
    x = float(s)
    if not x > 0:
        raise ValueError("must be positive")
    return x


def _nonneg(s):
    x = float(s)
    if not x >= 0:
        raise ValueError("must be nonnegative")
    return x


def _count(s):
    x = float(s)
    if x != int(x) or x < 1:
        raise ValueError("must be a positive integer")
    return int(x)


def _opt_positive(s):
    if s is None or str(s).strip().lower() in ("", "none", "auto"):
        return None
    return _positive(s)


def _choice(*options):
    def parse(s):
        s = str(s).strip()
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s

    return parse


def _float_list(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    vals = [float(x) for x in str(s).split(",") if x.strip()]
    if not vals:
        raise ValueError("must be a comma-separated list of numbers")
    return vals


def _triple(s):
    vals = _float_list(s)
    if len(vals) != 3:
        raise ValueError("must have exactly three entries")
    return vals


@dataclass(frozen=True)
class Key:
    parse: Callable[[Any], Any]
    default: Any


_CONV = Key(_choice(*st.CONVENTIONS), "section6")
_LAM = Key(_positive, 1.0)
_MU = Key(_positive, 2.0)
_NU = Key(_positive, 1.0)

SCHEMA: dict[str, dict[str, Key]] = {
    "flow": {
        "lambda": _LAM, "mu": _MU, "nu": _NU, "u0": Key(_float, 0.0), "v": Key(_float, 0.0),
        "theta0": Key(_float, 0.3), "phi0": Key(_float, 0.0),
        "dt": Key(_positive, 1e-3), "t_final": Key(_positive, 5.0),
        "variant": Key(_choice(*bf.VARIANTS), "with_unitary"),
        "unitary_sign": Key(_choice("1", "-1"), "1"), "stride": Key(_count, 10),
    },
    "thermalize": {
        "lambda": _LAM, "mu": _MU, "nu": _NU, "theta0": Key(_float, np.pi / 2), "phi0": Key(_float, 0.0),
        "paths": Key(_count, 10_000), "dt": Key(_positive, 1e-3), "t_final": Key(_opt_positive, None),
        "scheme": Key(_choice(*st.SCHEMES), "angle_em"), "convention": _CONV,
        "record_stride": Key(_opt_positive, None), "pole_cap": Key(_nonneg, st.POLE_CAP),
        "bins": Key(_count, st.N_HIST_BINS),
    },
    "equilibrium": {
        "lambda": _LAM, "mu": _MU, "nu": _NU, "convention": _CONV,
        "samples": Key(_count, 10_000), "n_theta": Key(_count, 181),
    },
    "fpde": {
        "lambda": _LAM, "mu": _MU, "nu": _NU, "convention": _CONV,
        "n_theta": Key(_count, 256), "dt_pde": Key(_opt_positive, None), "tol": Key(_positive, 1e-8),
        "max_steps": Key(_count, 2_000_000), "scheme": Key(_choice(*fp.FLUX_SCHEMES), "sg"),
        "center": Key(_float, np.pi / 2), "width": Key(_positive, 0.05),
    },
    "averages": {
        "lambda": Key(_positive, 10.0), "mu": _MU, "nu": _NU, "v": Key(_float, 0.0),
        "beta": Key(_nonneg, 2.0), "convention": _CONV, "samples": Key(_count, 20_000),
        "t_min": Key(_positive, 0.02), "t_max": Key(_positive, 5.0), "n_points": Key(_count, 200),
    },
    "partition": {
        "e": Key(_triple, [-1.0, 0.0, 1.0]), "g": Key(_triple, [-1.0, 0.0, 1.0]),
        "lambdas": Key(_float_list, [0.0, 0.5, 1.0, 2.0]), "samples": Key(_count, 200_000),
        "n_nodes": Key(_count, su3.DEFAULT_NODES),
    },
    "figures": {
        "which": Key(_choice("2", "3", "4", "all"), "all"), "convention": _CONV,
        "samples": Key(_count, 20_000),
    },
}

FLAG_KEYS = {
    "paths": "paths", "dt": "dt", "t_final": "t_final", "lam": "lambda", "mu": "mu", "nu": "nu",
    "beta": "beta", "convention": "convention", "which": "which",
}


def _exponent(convention: str) -> str:
    # stationary cosine coefficient: lam mu / 2 (section6) or lam nu mu / 2 (canonical)
    return "section6" if convention == "section6" else "trace"


def _read_config_file(path) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        text = Path(path).read_text()
        cp.read_string("[params]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return {k.strip(): v.strip() for k, v in cp.items("params")}


def resolve_config(command: str, raw: dict[str, Any], seed=None) -> tuple[dict, int]:
    """Validate ``raw`` against the command schema; return ``(params, seed)``.

    All problems are collected and reported together.
    """
    schema = SCHEMA[command]
    problems = []
    raw = dict(raw)
    if "seed" in raw:
        seed = raw.pop("seed") if seed is None else seed
        raw.pop("seed", None)
    for k in sorted(set(raw) - set(schema)):
        problems.append(f"unknown key {k!r} for command {command!r}")
    params = {}
    for k, key in schema.items():
        if k in raw:
            try:
                params[k] = key.parse(raw[k])
            except (TypeError, ValueError) as exc:
                problems.append(f"{k}={raw[k]!r}: {exc}")
        else:
            params[k] = key.default
    try:
        seed = 0 if seed is None else int(str(seed), 0)
        if not 0 <= seed < SEED_MAX:
            raise ValueError
    except ValueError:
        problems.append(f"seed={seed!r}: must be an integer in [0, 2**64)")
    if command == "averages" and not problems and params["t_min"] >= params["t_max"]:
        problems.append("t_min must be smaller than t_max")
    if problems:
        raise ConfigError(problems)
    return params, seed


# -- output bookkeeping ----------------------------------------------------------------


class _Outputs:
    def __init__(self, out: Path):
        self.dir = out
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return p

    def remove(self):
        for p in self.files:
            if p.exists():
                p.unlink()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


# -- commands --------------------------------------------------------------------------


def _flow_trajectory(p):
    H0 = bf.initial_2x2(p["u0"], p["nu"], p["theta0"], p["phi0"])
    G = reference_hamiltonian(p["mu"], p["v"])
    fparams = bf.FlowParams(lam=p["lambda"], dt=p["dt"], t_final=p["t_final"], variant=p["variant"],
                            unitary_sign=float(p["unitary_sign"]), stride=p["stride"])
    traj = bf.integrate(H0, G, fparams)
    sol = bf.Analytic2x2Solution.from_initial(p["u0"], p["nu"], p["theta0"], p["phi0"], p["lambda"], p["mu"])
    theta = np.array([to_bloch(H).theta for H in traj.states])
    phi = np.unwrap(np.array([to_bloch(H).phi for H in traj.states]))
    summary = {
        "max_theta_error": float(np.max(np.abs(theta - bf.analytic_theta(sol, traj.times)))),
        "final_alignment": float(traj.alignment[-1]),
        "final_energy": float(traj.energy[-1]),
        "notes": list(traj.notes),
    }
    if p["variant"] == "with_unitary":
        rate = float(p["unitary_sign"]) * p["mu"]
        summary["max_azimuth_error"] = float(np.max(np.abs(phi - p["phi0"] - rate * traj.times)))
    else:
        summary["max_frobenius_error"] = float(
            max(np.linalg.norm(H - bf.analytic_2x2(sol, t)) for t, H in zip(traj.times, traj.states))
        )
    return traj, summary


def cmd_flow(p, seed, out: _Outputs):
    traj, summary = _flow_trajectory(p)
    bf.write_trajectory_csv(traj, out.path("trajectory.csv"))
    out.json("summary.json", _jsonable(summary))
    return summary


def cmd_thermalize(p, seed, out: _Outputs):
    G = reference_hamiltonian(p["mu"])
    noise = st.NoiseConfig(convention=p["convention"], nu=p["nu"], master_seed=seed)
    omega = p["lambda"] * p["nu"] * p["mu"]
    t_final = p["t_final"] if p["t_final"] is not None else 10.0 / omega
    spec = st.EnsembleSpec(n_paths=p["paths"], dt=p["dt"], t_final=t_final, scheme=p["scheme"],
                           record_stride=None if p["record_stride"] is None else int(p["record_stride"]),
                           pole_cap=p["pole_cap"])
    res = st.run_ensemble(st.SphereState(p["theta0"], p["phi0"]), spec, noise, p["lambda"], G, nu=p["nu"])
    res.write_paths_csv(out.path("paths.csv"))
    eq = ee.CanonicalParams(lam=p["lambda"], mu=p["mu"], nu=p["nu"], exponent=_exponent(p["convention"]))
    c = res.terminal_cos
    edges = np.linspace(-1.0, 1.0, p["bins"] + 1)
    emp = np.histogram(c, bins=edges)[0] / c.size
    pred = np.diff(ee.cos_theta_cdf(edges, eq))
    _write_rows(out.path("histogram.csv"), ["bin_lo", "bin_hi", "empirical", "predicted"],
                zip(edges[:-1], edges[1:], emp, pred))
    summary = res.summary(bins=p["bins"])
    summary.update(mean_cos_predicted=ee.mean_cos(eq), total_variation=float(0.5 * np.abs(emp - pred).sum()))
    out.json("summary.json", _jsonable(summary))
    return {k: summary[k] for k in ("mean_cos_theta", "se_cos_theta", "mean_cos_predicted", "total_variation")}


def cmd_equilibrium(p, seed, out: _Outputs):
    eq = ee.CanonicalParams(lam=p["lambda"], mu=p["mu"], nu=p["nu"], exponent=_exponent(p["convention"]))
    theta = np.linspace(0.0, np.pi, p["n_theta"])
    _write_rows(out.path("density.csv"), ["theta", "density", "cos_theta", "cos_theta_pdf"],
                zip(theta, ee.density(theta, eq), np.cos(theta), ee.cos_theta_pdf(np.cos(theta), eq)))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    c = ee.sample_cos_theta(eq, rng, p["samples"])
    summary = {
        "mean_cos_closed": ee.mean_cos(eq),
        "mean_cos_sampled": float(np.mean(c)),
        "se_sampled": float(np.std(c, ddof=1) / np.sqrt(c.size)),
        "coupling": eq.coupling,
    }
    out.json("summary.json", summary)
    return summary


def cmd_fpde(p, seed, out: _Outputs):
    D = 2.0 * p["nu"] if p["convention"] == "section6" else 2.0
    omega = p["lambda"] * p["nu"] * p["mu"]
    grid = fp.FpGrid(n_theta=p["n_theta"], dt_pde=p["dt_pde"])
    q0 = fp.bump(grid, p["center"], p["width"])
    res = fp.evolve_to_stationarity(q0, grid, omega, D, tol=p["tol"], max_steps=p["max_steps"],
                                    scheme=p["scheme"])
    fp.write_profile_csv(out.path("profile.csv"), grid, res.q, omega, D)
    fp.write_residuals_csv(out.path("residuals.csv"), res.residuals)
    eq = ee.CanonicalParams(lam=p["lambda"], mu=p["mu"], nu=p["nu"], exponent=_exponent(p["convention"]))
    summary = {
        "t_reached": res.t_reached,
        "steps": res.steps,
        "l1_to_stationary": fp.l1_distance(res.q, fp.stationary_profile(grid, omega, D), grid),
        "mean_cos": fp.mean_cos_profile(res.q, grid),
        "mean_cos_closed": ee.mean_cos(eq),
        "mass": fp.mass(res.q, grid),
    }
    out.json("summary.json", summary)
    return summary


def _thermal_averages(p, seed, out: _Outputs, name):
    kw = dict(lam=p.get("lambda", 10.0), mu=p.get("mu", 2.0), nu=p.get("nu", 1.0), v=p.get("v", 0.0),
              n_samples=p["samples"], seed=seed, exponent=_exponent(p["convention"]))
    if "t_min" in p:
        kw.update(T_min=p["t_min"], T_max=p["t_max"], n_points=p["n_points"])
    da.write_thermal_average_csv(out.path(name), **kw)
    return kw


def cmd_averages(p, seed, out: _Outputs):
    kw = _thermal_averages(p, seed, out, "averages.csv")
    eq = ee.CanonicalParams(lam=kw["lam"], mu=kw["mu"], nu=kw["nu"], v=kw["v"], exponent=kw["exponent"])
    t = da.ThermalParams(p["beta"])
    O = da.reference_observable(eq)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    q, se = da.quenched_average_mc(O, eq, t, p["samples"], rng)
    summary = {
        "beta": p["beta"],
        "G_quenched_mc": q,
        "G_quenched_se": se,
        "G_quenched_closed": da.quenched_closed_G(eq, t),
        "G_annealed": da.annealed_average(O, eq, t),
        "G_quenched_ground": da.quenched_closed_G(eq, da.ThermalParams(np.inf)),
        "G_annealed_ground": da.annealed_closed_G(eq, da.ThermalParams(np.inf)),
    }
    out.json("summary.json", summary)
    return summary


def cmd_partition(p, seed, out: _Outputs):
    su3.write_z_table_csv(out.path("z_table.csv"), p["e"], p["g"], p["lambdas"],
                          n_samples=p["samples"], seed=seed, n_nodes=p["n_nodes"])
    summary = {"total_volume": su3.TOTAL_VOLUME, "lambdas": p["lambdas"]}
    out.json("summary.json", summary)
    return summary


def cmd_figures(p, seed, out: _Outputs):
    which = ("2", "3", "4") if p["which"] == "all" else (p["which"],)
    summary = {}
    if "2" in which:
        fp2 = {k: v.default for k, v in SCHEMA["flow"].items()}
        traj, s2 = _flow_trajectory(fp2)
        bf.write_trajectory_csv(traj, out.path("spiral_trajectory.csv"))
        summary["spiral_trajectory"] = s2
    if "3" in which:
        ee.write_mean_cos_csv(out.path("mean_cos_curve.csv"), exponent=_exponent(p["convention"]))
        summary["mean_cos_curve"] = {"mu": 2.0, "n_points": 200}
    if "4" in which:
        kw = _thermal_averages(p, seed, out, "thermal_averages.csv")
        eq = ee.CanonicalParams(lam=kw["lam"], mu=kw["mu"], nu=kw["nu"], exponent=kw["exponent"])
        summary["thermal_averages"] = {
            "G_quenched_ground": da.quenched_closed_G(eq, da.ThermalParams(np.inf)),
            "G_annealed_ground": da.annealed_closed_G(eq, da.ThermalParams(np.inf)),
        }
    out.json("summary.json", _jsonable(summary))
    return summary


HANDLERS = {
    "flow": cmd_flow,
    "thermalize": cmd_thermalize,
    "equilibrium": cmd_equilibrium,
    "fpde": cmd_fpde,
    "averages": cmd_averages,
    "partition": cmd_partition,
    "figures": cmd_figures,
}


def run(command: str, params: dict, seed: int, out_dir) -> int:
    """Run a validated command, writing the manifest first and cleaning up on failure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "params": _jsonable(params),
        "seed": seed,
        "version": __version__,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "status": "running",
    }
    mpath = out_dir / "manifest.json"

    def write_manifest():
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    write_manifest()
    out = _Outputs(out_dir)
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        result = HANDLERS[command](params, seed, out)
        manifest.update(status="ok", outputs=[p.name for p in out.files], result=_jsonable(result))
    except GUARD_ERRORS as exc:
        code = EXIT_GUARD
        out.remove()
        manifest.update(status="failed", error=str(exc), error_type=type(exc).__name__)
        print(f"error: {exc}", file=sys.stderr)
    except ValueError as exc:
        code = EXIT_INVALID
        out.remove()
        manifest.update(status="failed", error=str(exc), error_type=type(exc).__name__)
        print(f"error: {exc}", file=sys.stderr)
    except BaseException:
        out.remove()
        raise
    manifest["wall_clock_seconds"] = time.perf_counter() - t0
    write_manifest()
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value parameter file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one parameter (repeatable)")
    common.add_argument("--seed", help="master seed, 64-bit unsigned integer")
    common.add_argument("--out", metavar="DIR", help="output directory (default isoflow_out/<command>)")
    common.add_argument("--paths")
    common.add_argument("--dt")
    common.add_argument("--t-final", dest="t_final")
    common.add_argument("--lambda", dest="lam")
    common.add_argument("--mu")
    common.add_argument("--nu")
    common.add_argument("--beta")
    common.add_argument("--convention")
    parser = argparse.ArgumentParser(prog="isoflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"isoflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "figures":
            sp.add_argument("--which", help="2: spiral trajectory, 3: mean cos(theta) curve, 4: thermal averages, all")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    problems = []
    raw: dict[str, Any] = {}
    if args.config:
        try:
            raw.update(_read_config_file(args.config))
        except ConfigError as exc:
            problems += exc.problems
    for item in args.set:
        k, sep, v = item.partition("=")
        if not sep:
            problems.append(f"--set expects KEY=VALUE, got {item!r}")
        else:
            raw[k.strip()] = v.strip()
    for attr, key in FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            raw[key] = val
    try:
        params, seed = resolve_config(args.command, raw, args.seed)
    except ConfigError as exc:
        problems += exc.problems
    if problems:
        for msg in problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = args.out or Path("isoflow_out") / args.command
    return run(args.command, params, seed, out_dir)


if __name__ == "__main__":
    raise SystemExit(main())
