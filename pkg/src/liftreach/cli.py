"""Config-driven front end: run / bench / inspect.

Configs are YAML (key-value with nesting); custom dynamics use prefix
notation, e.g. ``(mul 2 (sub x1 (div (powi 3 x1) 3)))``.  ``liftreach run``
writes trajectory.csv, summary.json, and (with mc_trials > 0)
validation.json into the configured output directory.

Exit codes: 0 success, 1 error, 2 soundness violation detected by the
Monte-Carlo validation, 3 obstacle clearance verdict UNSAFE.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import models as models_mod
from .embedding import (
    EmbeddingState,
    bound_size,
    integrate,
    monte_carlo_validate,
    trajectory_to_csv,
)
from .errors import ConfigError, LiftReachError
from .exprgraph import parse_dynamics
from .intervals import Box, interval_hull_matvec
from .lifting import expected_row_count, make_lifting, null_basis, subspace_sample_matrix
from .models import ModelSpec, ObstacleSpec, check_obstacle_clearance
from .refinement import IdentityRefiner, LpRefiner, SamplingRefiner

VIOLATION_TOL = 1e-6
SEED_ENV_VAR = "LIFTREACH_SEED"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSOUND = 2
EXIT_UNSAFE = 3


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return data


_REQUIRED = object()


def _field(cfg: dict, key: str, types, where: str, default=_REQUIRED):
    if key not in cfg:
        if default is _REQUIRED:
            raise ConfigError(f"missing required field '{where}{key}'")
        return default
    value = cfg[key]
    if types is not None and not isinstance(value, types):
        raise ConfigError(
            f"field '{where}{key}' has type {type(value).__name__}, "
            f"expected {'/'.join(t.__name__ for t in types)}"
        )
    return value


def _parse_box(raw, dim: int | None, where: str) -> Box:
    if not isinstance(raw, dict) or "lo" not in raw or "hi" not in raw:
        raise ConfigError(f"'{where}' must be a mapping with 'lo' and 'hi' lists")
    try:
        box = Box(raw["lo"], raw["hi"])
    except Exception as exc:
        raise ConfigError(f"'{where}' is not a valid box: {exc}") from exc
    if dim is not None and len(box) != dim:
        raise ConfigError(f"'{where}' must have {dim} components, got {len(box)}")
    return box


@dataclass
class RunConfig:
    model: dict
    refinement: dict
    integrator: str
    dt: float
    t_final: float
    mc_trials: int
    seed: int
    output_dir: str
    overrides: dict

    def echo(self) -> dict:
        return {
            "model": self.model,
            "refinement": self.refinement,
            "integrator": self.integrator,
            "dt": self.dt,
            "t_final": self.t_final,
            "mc_trials": self.mc_trials,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "overrides": self.overrides,
        }


_MODEL_KINDS = ("vanderpol", "enzyme", "platoon", "custom")
_REFINEMENT_KINDS = ("none", "sampling", "lp")
_INTEGRATORS = ("euler", "rk4")


def resolve_run_config(raw: dict, where: str = "") -> RunConfig:
    model = _field(raw, "model", (dict,), where)
    kind = _field(model, "kind", (str,), where + "model.")
    if kind not in _MODEL_KINDS:
        raise ConfigError(
            f"'{where}model.kind' must be one of {_MODEL_KINDS}, got {kind!r}"
        )

    refinement = _field(raw, "refinement", (dict,), where, default={"kind": "sampling"})
    rkind = _field(refinement, "kind", (str,), where + "refinement.")
    if rkind not in _REFINEMENT_KINDS:
        raise ConfigError(
            f"'{where}refinement.kind' must be one of {_REFINEMENT_KINDS}, got {rkind!r}"
        )
    if rkind == "sampling":
        s = _field(refinement, "s", (int,), where + "refinement.", default=10)
        if s < 0:
            raise ConfigError(f"'{where}refinement.s' must be nonnegative")
        refinement = {"kind": "sampling", "s": s}
    else:
        refinement = {"kind": rkind}

    # model-provided defaults for timing fields
    defaults = {
        "vanderpol": ("rk4", 0.01, 2.0 * np.pi),
        "enzyme": ("rk4", 1e-3, 0.04),
        "platoon": ("euler", 0.01, 3.0),
        "custom": (None, None, None),
    }[kind]
    integrator = _field(raw, "integrator", (str,), where, default=defaults[0])
    dt = _field(raw, "dt", (int, float), where, default=defaults[1])
    t_final = _field(raw, "t_final", (int, float), where, default=defaults[2])
    if integrator is None or dt is None or t_final is None:
        raise ConfigError(
            f"custom models require explicit '{where}integrator', "
            f"'{where}dt', and '{where}t_final'"
        )
    if integrator not in _INTEGRATORS:
        raise ConfigError(
            f"'{where}integrator' must be one of {_INTEGRATORS}, got {integrator!r}"
        )
    dt = float(dt)
    t_final = float(t_final)
    if dt <= 0.0 or t_final <= 0.0:
        raise ConfigError(f"'{where}dt' and '{where}t_final' must be positive")

    mc_trials = _field(raw, "mc_trials", (int,), where, default=0)
    if mc_trials < 0:
        raise ConfigError(f"'{where}mc_trials' must be nonnegative")
    seed = _field(raw, "seed", (int,), where, default=0)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(
                f"environment variable {SEED_ENV_VAR}={env_seed!r} is not an integer"
            ) from None
    output_dir = _field(raw, "output_dir", (str,), where, default="out")
    overrides = _field(raw, "overrides", (dict,), where, default={})
    return RunConfig(
        model=model,
        refinement=refinement,
        integrator=integrator,
        dt=dt,
        t_final=t_final,
        mc_trials=mc_trials,
        seed=seed,
        output_dir=output_dir,
        overrides=overrides,
    )


def _build_custom_model(model: dict, cfg: RunConfig) -> ModelSpec:
    n = _field(model, "state_dim", (int,), "model.")
    p = _field(model, "dist_dim", (int,), "model.", default=0)
    param_names = tuple(_field(model, "param_names", (list,), "model.", default=[]))
    dynamics = _field(model, "dynamics", (list,), "model.")
    try:
        sys_ = parse_dynamics(dynamics, n, p, param_names)
    except LiftReachError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid custom dynamics: {exc}") from exc
    H = _field(model, "H", (list,), "model.")
    try:
        lift = make_lifting(np.array(H, dtype=float))
    except Exception as exc:
        raise ConfigError(f"invalid custom H: {exc}") from exc
    x0box = _parse_box(_field(model, "x0", (dict,), "model."), sys_.n, "model.x0")
    wbox = (
        _parse_box(model["w"], p, "model.w")
        if "w" in model
        else Box(np.zeros(p) if p == 0 else np.zeros(p), np.zeros(p))
    )
    thetabox = (
        _parse_box(model["theta"], len(param_names), "model.theta")
        if "theta" in model
        else Box(np.zeros(len(param_names)), np.zeros(len(param_names)))
    )
    safety = None
    if "obstacle" in model:
        ob = model["obstacle"]
        pairs = ob.get("position_indices")
        if not pairs:
            raise ConfigError("model.obstacle for custom models needs position_indices")
        safety = ObstacleSpec(
            center=(float(ob["cx"]), float(ob["cy"])),
            radius=float(ob["radius"]),
            agent_position_indices=tuple(tuple(int(i) for i in pr) for pr in pairs),
        )
    return ModelSpec(
        name="custom",
        sys=sys_,
        lift=lift,
        x0box=x0box,
        wbox=wbox,
        thetabox=thetabox,
        t_final=cfg.t_final,
        dt=cfg.dt,
        default_method=cfg.integrator,
        safety=safety,
    )


def build_model(cfg: RunConfig) -> ModelSpec:
    model = cfg.model
    kind = model["kind"]
    if kind == "vanderpol":
        spec = models_mod.vanderpol(
            l=int(model.get("l", 4)), mu=float(model.get("mu", 1.0))
        )
    elif kind == "enzyme":
        spec = models_mod.enzyme()
    elif kind == "platoon":
        ff = cfg.overrides.get("feedforward")
        spec = models_mod.platoon(
            P=int(model.get("P", 6)),
            t_final=cfg.t_final,
            dt=cfg.dt,
            feedforward=ff,
        )
    else:
        spec = _build_custom_model(model, cfg)

    ov = cfg.overrides
    for key in ov:
        if key not in ("x0", "w", "theta", "obstacle", "feedforward"):
            raise ConfigError(f"unknown override '{key}'")
    if "x0" in ov:
        spec.x0box = _parse_box(ov["x0"], spec.sys.n, "overrides.x0")
    if "w" in ov:
        if kind == "platoon":
            raise ConfigError(
                "platoon disturbances are scheduled; override the feedforward instead"
            )
        spec.wbox = _parse_box(ov["w"], spec.sys.p, "overrides.w")
    if "theta" in ov:
        spec.thetabox = _parse_box(ov["theta"], spec.sys.q, "overrides.theta")
    if "obstacle" in ov:
        ob = ov["obstacle"]
        pairs = None
        if spec.safety is not None:
            pairs = spec.safety.agent_position_indices
        if "position_indices" in ob:
            pairs = tuple(tuple(int(i) for i in pr) for pr in ob["position_indices"])
        if pairs is None:
            raise ConfigError(
                "obstacle override needs position_indices for this model"
            )
        spec.safety = ObstacleSpec(
            center=(float(ob["cx"]), float(ob["cy"])),
            radius=float(ob["radius"]),
            agent_position_indices=pairs,
        )
    return spec


def build_refiner(cfg: RunConfig, spec: ModelSpec):
    kind = cfg.refinement["kind"]
    if kind == "none":
        return IdentityRefiner()
    if kind == "sampling":
        A = subspace_sample_matrix(spec.lift, cfg.refinement["s"])
        return SamplingRefiner(A)
    return LpRefiner(spec.lift)


# ---------------------------------------------------------------------------
# run pipeline (also used directly by tests and scripts)
# ---------------------------------------------------------------------------

def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


@dataclass
class RunOutputs:
    summary: dict
    trajectory: object
    validation: object | None
    exit_code: int


def execute_run(cfg: RunConfig) -> RunOutputs:
    spec = build_model(cfg)
    refiner = build_refiner(cfg, spec)
    lifted = _build_lifted(spec)
    y0_box = interval_hull_matvec(spec.lift.H, spec.x0box)
    y0 = EmbeddingState(y0_box.lo, y0_box.hi)
    traj = integrate(
        lifted,
        refiner,
        y0,
        wbox=spec.wbox,
        thetabox=spec.thetabox,
        t_final=cfg.t_final,
        dt=cfg.dt,
        method=cfg.integrator,
    )

    validation = None
    if cfg.mc_trials > 0:
        validation = monte_carlo_validate(
            spec.sys,
            spec.lift,
            traj,
            spec.x0box,
            wbox=spec.wbox,
            thetabox=spec.thetabox,
            trials=cfg.mc_trials,
            seed=cfg.seed,
            method=cfg.integrator,
        )

    verdicts = None
    if spec.safety is not None:
        verdicts = check_obstacle_clearance(traj, spec.safety)

    exit_code = EXIT_OK
    if validation is not None and validation.max_violation > VIOLATION_TOL:
        exit_code = EXIT_UNSOUND
    elif verdicts is not None and any(not v.safe for v in verdicts):
        exit_code = EXIT_UNSAFE

    summary = {
        "model": spec.name,
        "n": spec.sys.n,
        "m": spec.lift.m,
        "refinement": refiner.label,
        "integrator": cfg.integrator,
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "seed": cfg.seed,
        "steps": traj.stats.steps,
        "wallclock_s": _sig6(traj.stats.wallclock_s),
        "final_bound_size_base": _sig6(bound_size(traj.final, spec.sys.n, "base")),
        "final_bound_size_lifted": _sig6(bound_size(traj.final, mode="lifted")),
        "vacuous_at": traj.vacuous_at,
        "collapsed_steps": traj.stats.collapsed_steps,
        "refinement_calls": traj.stats.refinement_calls,
        "lp_fallbacks": traj.stats.lp_fallbacks,
        "safety": None
        if verdicts is None
        else [
            {
                "agent": v.agent,
                "safe": v.safe,
                "min_distance": _sig6(v.min_distance),
                "first_unsafe_time": v.first_unsafe_time,
            }
            for v in verdicts
        ],
        "validation": None
        if validation is None
        else {
            "trials": validation.trials,
            "max_violation": validation.max_violation,
        },
        "config": cfg.echo(),
    }
    return RunOutputs(
        summary=summary, trajectory=traj, validation=validation, exit_code=exit_code
    )


def _build_lifted(spec: ModelSpec):
    from .exprgraph import build_lifted

    return build_lifted(spec.sys, spec.lift, spec.invariant_aux)


def write_run_artifacts(out: RunOutputs, output_dir) -> None:
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    trajectory_to_csv(out.trajectory, outdir / "trajectory.csv")
    with open(outdir / "summary.json", "w") as fh:
        json.dump(out.summary, fh, indent=2)
        fh.write("\n")
    if out.validation is not None:
        with open(outdir / "validation.json", "w") as fh:
            json.dump(out.validation.as_dict(), fh, indent=2)
            fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_run(config_path) -> int:
    try:
        cfg = resolve_run_config(load_config(config_path))
        out = execute_run(cfg)
        write_run_artifacts(out, cfg.output_dir)
    except LiftReachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(
        f"{out.summary['model']} refinement={out.summary['refinement']} "
        f"steps={out.summary['steps']} "
        f"final_bound_size_base={out.summary['final_bound_size_base']} "
        f"-> {cfg.output_dir}/summary.json"
    )
    if out.exit_code == EXIT_UNSOUND:
        print(
            f"soundness violation: max Monte-Carlo margin "
            f"{out.summary['validation']['max_violation']:.3g} > {VIOLATION_TOL:g}",
            file=sys.stderr,
        )
    elif out.exit_code == EXIT_UNSAFE:
        print("obstacle clearance verdict: UNSAFE", file=sys.stderr)
    return out.exit_code


def _bench_one(idx, entry, repeat):
    name = entry.get("name", f"run{idx}") if isinstance(entry, dict) else f"run{idx}"
    try:
        cfg = resolve_run_config(entry, where=f"runs[{idx}].")
        spec = build_model(cfg)
        refiner = build_refiner(cfg, spec)
        lifted = _build_lifted(spec)
        y0_box = interval_hull_matvec(spec.lift.H, spec.x0box)
        y0 = EmbeddingState(y0_box.lo, y0_box.hi)
        times = []
        sizes = []
        for _ in range(repeat):
            traj = integrate(
                lifted,
                refiner,
                y0,
                wbox=spec.wbox,
                thetabox=spec.thetabox,
                t_final=cfg.t_final,
                dt=cfg.dt,
                method=cfg.integrator,
            )
            times.append(traj.stats.wallclock_s)
            sizes.append(bound_size(traj.final, spec.sys.n, "base"))
        return {
            "name": name,
            "model": spec.name,
            "refinement": refiner.label,
            "repeat": repeat,
            "mean_time_s": statistics.fmean(times),
            "std_time_s": statistics.pstdev(times) if len(times) > 1 else 0.0,
            "mean_final_bound_base": statistics.fmean(sizes),
            "error": "",
        }
    except Exception as exc:  # record and continue
        return {
            "name": name,
            "model": "",
            "refinement": "",
            "repeat": repeat,
            "mean_time_s": float("nan"),
            "std_time_s": float("nan"),
            "mean_final_bound_base": float("nan"),
            "error": str(exc),
        }


def cmd_bench(config_path) -> int:
    try:
        raw = load_config(config_path)
        repeat = _field(raw, "repeat", (int,), "", default=10)
        if repeat < 1:
            raise ConfigError("'repeat' must be at least 1")
        runs = _field(raw, "runs", (list,), "", default=[])
        # parallel helps non-timing sweeps; sequential (default) keeps
        # wallclock numbers honest
        parallel = _field(raw, "parallel", (bool,), "", default=False)
        output_dir = Path(_field(raw, "output_dir", (str,), "", default="bench_out"))
    except LiftReachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if parallel and len(runs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            rows = list(
                pool.map(lambda ie: _bench_one(ie[0], ie[1], repeat), enumerate(runs))
            )
    else:
        rows = [_bench_one(idx, entry, repeat) for idx, entry in enumerate(runs)]

    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = output_dir / "bench.csv"
    cols = [
        "name",
        "model",
        "refinement",
        "repeat",
        "mean_time_s",
        "std_time_s",
        "mean_final_bound_base",
        "error",
    ]
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    f"{row[c]:.17g}"
                    if isinstance(row[c], float)
                    else str(row[c]).replace(",", ";")
                    for c in cols
                )
                + "\n"
            )

    table = _format_table(rows)
    with open(output_dir / "bench.txt", "w") as fh:
        fh.write(table)
    print(table, end="")
    return EXIT_OK


def _format_table(rows) -> str:
    headers = ["name", "model", "refinement", "time_s (mean+/-std)", "final_bound_base", "error"]
    body = []
    for row in rows:
        if row["error"]:
            timing = "-"
            size = "-"
        else:
            timing = f"{row['mean_time_s']:.4g} +/- {row['std_time_s']:.2g}"
            size = f"{row['mean_final_bound_base']:.6g}"
        body.append(
            [row["name"], row["model"], row["refinement"], timing, size, row["error"]]
        )
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in body)) if body else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for r in body:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))).rstrip())
    return "\n".join(lines) + "\n"


def _format_matrix(M, max_rows=24) -> str:
    M = np.atleast_2d(M)
    if M.shape[0] > max_rows:
        return f"  ({M.shape[0]}x{M.shape[1]} matrix, first rows)\n" + "\n".join(
            "  [" + ", ".join(f"{v:.6g}" for v in row) + "]" for row in M[:max_rows]
        )
    return "\n".join("  [" + ", ".join(f"{v:.6g}" for v in row) + "]" for row in M)


def cmd_inspect(config_path) -> int:
    try:
        cfg = resolve_run_config(load_config(config_path))
        spec = build_model(cfg)
    except LiftReachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    lift = spec.lift
    print(f"model: {spec.name}  (n={lift.n}, m={lift.m}, p={spec.sys.p}, q={spec.sys.q})")
    sv = np.linalg.svd(np.asarray(lift.H), compute_uv=False)
    print(f"rank(H) = {int((sv > 1e-12 * sv[0]).sum())}, cond(H_V) = "
          f"{np.linalg.cond(np.asarray(lift.H_V)):.6g}")
    print(f"H ({lift.m}x{lift.n}):")
    print(_format_matrix(lift.H))
    print(f"H+ ({lift.n}x{lift.m}):")
    print(_format_matrix(lift.H_plus))
    if lift.m > lift.n:
        L = null_basis(lift)
        print(f"L ({L.shape[0]}x{L.shape[1]}), max |L H| = "
              f"{np.max(np.abs(L @ np.asarray(lift.H))):.3g}:")
        print(_format_matrix(L))
    else:
        print("L: empty (m == n)")
    if cfg.refinement["kind"] == "sampling":
        s = cfg.refinement["s"]
        A = subspace_sample_matrix(lift, s)
        expected = expected_row_count(lift.m - lift.n, s)
        print(
            f"A: N = {A.rows} rows; formula (m-n) + s(m-n)(m-n-1) = {expected}"
            f"  [s={s}]"
        )
        print(f"max |A H| = {np.max(np.abs(A.matrix @ np.asarray(lift.H))):.3g}"
              if A.rows else "A: empty")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="liftreach",
        description="Interval reachability with lifted embedding systems and refinement",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "integrate the embedding system for one config"),
        ("bench", "run a list of configs repeatedly and tabulate timings"),
        ("inspect", "print lifting/refinement matrices and diagnostics"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML config file")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "bench":
        return cmd_bench(args.config)
    return cmd_inspect(args.config)


if __name__ == "__main__":
    sys.exit(main())
