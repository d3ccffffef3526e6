"""Command-line front end: scenario in, CSV/JSON artifacts out.

Every command is deterministic under a fixed seed and re-running a
command overwrites its outputs byte-identically.  Exit codes:
0 success, 1 usage/config error, 2 property violation found,
3 numerical failure.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, control as control_mod
from .config import ConfigError, ScenarioConfig
from .dynamics import Schedule, StiffnessError, flow
from .equilibria import GridResolutionError, NonHyperbolicRange, branch, components
from .landscape import check_hypotheses, default_grids
from .omega import OmegaConstructionError, build_omega

__all__ = ["main", "cli"]


class PropertyViolation(Exception):
    """A verification found counterexamples (exit code 2)."""


class NumericalFailure(Exception):
    """Construction or convergence failure (exit code 3)."""


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, sort_keys=True, indent=1,
                               default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _param_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=_json_default)
    return hashlib.sha1(blob.encode()).hexdigest()[:8]


def _out_dir(ctx) -> Path:
    cfg: ScenarioConfig = ctx.obj["config"]
    out = Path(ctx.obj["out"]) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="scenario YAML file")
@click.option("--out", default="out", show_default=True, help="output directory")
@click.option("--seed", default=None, type=int, help="override the scenario seed")
@click.option("--tol", default=None, type=float,
              help="override the flow relative tolerance")
@click.pass_context
def cli(ctx, config_path, out, seed, tol):
    """Audit, construct and verify controllable sets for one scenario."""
    cfg = ScenarioConfig.from_file(config_path, seed_override=seed)
    if tol is not None:
        cfg.tolerances["rtol"] = tol
    ctx.ensure_object(dict)
    ctx.obj.update(config=cfg, out=out)


@cli.command()
@click.pass_context
def check(ctx):
    """Audit the structural hypotheses on the working grids."""
    cfg: ScenarioConfig = ctx.obj["config"]
    opts = dict(cfg.options.get("check", {}))
    u_grid, a_grid = default_grids(cfg.landscape, cfg.grid_u(), cfg.grid_a())
    report = check_hypotheses(cfg.landscape, u_grid, a_grid)
    path = _out_dir(ctx) / f"check-{_param_hash({'u': cfg.grid_u(), 'a': cfg.grid_a(), **opts})}.json"
    _write_json(path, report.to_dict())
    click.echo(f"wrote {path}")
    if not report.all_passed:
        raise PropertyViolation("hypothesis audit failed; see report")


@cli.command()
@click.pass_context
def equilibria(ctx):
    """Equilibrium branch CSV plus feasible-component summary JSON."""
    cfg: ScenarioConfig = ctx.obj["config"]
    L, A = cfg.landscape, cfg.dose_range
    h = _param_hash({"range": list(A), "u_points": cfg.grid_u()})
    br = branch(L, cfg.grid_u())
    out = _out_dir(ctx)
    _write_csv(out / f"equilibria-branch-{h}.csv",
               ["u", "a_star", "h_star", "a_star_prime", "label"], br.csv_rows())
    comps = components(A, L, u_grid=cfg.grid_u())
    _write_json(out / f"equilibria-components-{h}.json", {
        "range": list(A),
        "count": len(comps),
        "components": [c.to_dict() for c in comps],
    })
    click.echo(f"wrote branch and {len(comps)} component(s) under {out}")


@cli.command()
@click.pass_context
def omega(ctx):
    """Boundary curves of all controllable sets for the scenario range."""
    cfg: ScenarioConfig = ctx.obj["config"]
    L, A = cfg.landscape, cfg.dose_range
    h = _param_hash({"range": list(A), "u_points": cfg.grid_u()})
    out = _out_dir(ctx)
    comps = components(A, L, u_grid=cfg.grid_u())
    summaries = []
    for i, comp in enumerate(comps):
        om = build_omega(comp, L, eta=cfg.tol("eta", 1e-8),
                         rtol=cfg.tol("rtol", 1e-9), atol=cfg.tol("atol", 1e-12))
        _write_csv(out / f"omega-{i}-{h}.csv", ["u", "n", "piece"], om.csv_rows())
        summaries.append({"index": i, **om.summary()})
    _write_json(out / f"omega-summary-{h}.json",
                {"range": list(A), "curves": summaries})
    click.echo(f"wrote {len(comps)} curve(s) under {out}")


@cli.command()
@click.pass_context
def simulate(ctx):
    """Integrate one trajectory under a configured schedule."""
    cfg: ScenarioConfig = ctx.obj["config"]
    opts = dict(cfg.options.get("simulate", {}))
    if "x0" not in opts or "schedule" not in opts:
        raise ConfigError("simulate needs 'x0' and 'schedule' in the scenario")
    x0 = [float(v) for v in opts["x0"]]
    sched = Schedule.from_pairs(opts["schedule"], repeat=bool(opts.get("repeat", False)))
    sched.validate_range(cfg.dose_range)
    system = opts.get("system", "reduced")
    horizon = float(opts.get("horizon", 100.0))
    traj = flow(np.array(x0), sched, cfg.landscape, system=system,
                horizon=horizon, rtol=cfg.tol("rtol", 1e-9),
                atol=cfg.tol("atol", 1e-12),
                eta=cfg.tol("eta", 1e-8))
    h = _param_hash({"x0": x0, "schedule": list(map(list, sched.segments)),
                     "system": system, "horizon": horizon})
    path = _out_dir(ctx) / f"simulate-{h}.csv"
    _write_csv(path, ["t", "u", "n", "a"], traj.csv_rows())
    click.echo(f"wrote {path} (status: {traj.status})")


_VERIFY_DISPATCH = {
    "angle-condition", "forward-invariance", "controllability", "no-return",
    "limit-sets", "b-delta", "curative",
}


@cli.command()
@click.pass_context
def verify(ctx):
    """Run one verification property and write its report."""
    cfg: ScenarioConfig = ctx.obj["config"]
    opts = dict(cfg.options.get("verify", {}))
    prop = opts.pop("property", None)
    if prop not in _VERIFY_DISPATCH:
        raise ConfigError(f"verify.property must be one of {sorted(_VERIFY_DISPATCH)}")
    L, A, seed = cfg.landscape, cfg.dose_range, cfg.seed
    h = _param_hash({"property": prop, "range": list(A), "seed": seed, **opts})

    def omega_for(kind_filter):
        comps = components(A, L, u_grid=cfg.grid_u())
        picked = [c for c in comps if c.kind in kind_filter]
        if not picked:
            raise NumericalFailure(f"no component of type {kind_filter} in range {A}")
        idx = int(opts.pop("component", 0))
        return build_omega(picked[idx], L)

    if prop == "angle-condition":
        report = analysis.verify_angle_condition(
            L, n_samples=int(opts.pop("n_samples", 10_000)),
            band=float(opts.pop("band", 1e-3)), seed=seed)
    elif prop == "forward-invariance":
        om = omega_for((1,))
        report = analysis.verify_forward_invariance(
            om, L, n_points=int(opts.pop("n_points", 100)),
            n_schedules=int(opts.pop("n_schedules", 50)),
            horizon=opts.pop("horizon", None), seed=seed)
    elif prop == "controllability":
        om = omega_for((1, 2, 3))
        report = analysis.verify_controllability(
            om, L, n_pairs=int(opts.pop("n_pairs", 50)),
            tol_target=float(opts.pop("tol_target", 1e-3)), seed=seed)
    elif prop == "no-return":
        om = omega_for((2, 3))
        report = analysis.verify_no_return(
            om, L, n_points=int(opts.pop("n_points", 100)),
            horizon=opts.pop("horizon", None), seed=seed)
    elif prop == "limit-sets":
        comps = components(A, L, u_grid=cfg.grid_u())
        omegas = [build_omega(c, L) for c in comps]
        report = analysis.verify_limit_sets(
            L, A, omegas, n_points=int(opts.pop("n_points", 100)),
            horizon=opts.pop("horizon", None), seed=seed)
    elif prop == "b-delta":
        report = analysis.verify_band_invariance(
            L, A, delta=float(opts.pop("delta", 0.0)),
            n_points=int(opts.pop("n_points", 50)),
            n_schedules=int(opts.pop("n_schedules", 10)),
            horizon=opts.pop("horizon", None), seed=seed)
    else:  # curative
        field = analysis.estimate_curative_set(
            L, A, grid=tuple(opts.pop("grid", (61, 41))),
            schedule_budget=int(opts.pop("schedule_budget", 5)),
            horizon=opts.pop("horizon", None), seed=seed)
        out = _out_dir(ctx)
        _write_csv(out / f"curative-{h}.csv", ["u", "n", "curative"],
                   field.csv_rows())
        _write_json(out / f"curative-{h}.json",
                    {"fraction": field.fraction, "tried": field.tried})
        click.echo(f"wrote curative field ({field.fraction:.3%} marked)")
        return

    path = _out_dir(ctx) / f"verify-{prop}-{h}.json"
    _write_json(path, report.to_dict())
    click.echo(f"wrote {path} (passed: {report.passed})")
    if not report.passed:
        raise PropertyViolation(f"{prop}: {len(report.violations)} violation(s)")


@cli.command()
@click.pass_context
def sweep(ctx):
    """Range-inflation sweep: components, omega types, merge events."""
    cfg: ScenarioConfig = ctx.obj["config"]
    opts = dict(cfg.options.get("sweep", {}))
    deltas = [float(d) for d in opts.get("deltas", [0.0])]
    result = analysis.bifurcation_sweep(cfg.landscape, cfg.dose_range, deltas,
                                        u_grid=cfg.grid_u())
    h = _param_hash({"range": list(cfg.dose_range), "deltas": deltas})
    out = _out_dir(ctx)
    for entry in result.entries:
        for i, om in enumerate(entry.get("omegas", [])):
            _write_csv(out / f"sweep-d{entry['delta']:g}-omega{i}-{h}.csv",
                       ["u", "n", "piece"], om.csv_rows())
    _write_json(out / f"sweep-{h}.json", result.to_dict())
    click.echo(f"wrote sweep bundle under {out} "
               f"({len(result.merge_events)} merge event(s))")


@cli.command()
@click.pass_context
def control(ctx):
    """Dose-minimal periodic therapy run (and optional exit classification)."""
    cfg: ScenarioConfig = ctx.obj["config"]
    opts = dict(cfg.options.get("control", {}))
    if "x0" not in opts:
        raise ConfigError("control needs 'x0' in the scenario")
    x0 = [float(v) for v in opts["x0"]]
    T = float(opts.get("T", 30.0))
    classify = bool(opts.get("classify", False))
    L, A = cfg.landscape, cfg.dose_range
    run = control_mod.fbsm_solve(
        x0, T, A, L, tol_ctrl=float(opts.get("tol_ctrl", 1e-4)),
        max_iter=int(opts.get("max_iter", 200)),
        relax=float(opts.get("relax", 0.5)))
    verdict = None
    if classify:
        verdict = control_mod.classify_exit(run, L,
                                            max_cycles=int(opts.get("max_cycles", 40)))
        run.exit = verdict["exit"]
    h = _param_hash({"x0": x0, "T": T, "range": list(A), "classify": classify})
    out = _out_dir(ctx)
    _write_csv(out / f"control-{h}.csv",
               ["t", "u", "n", "alpha", "lambda_u", "lambda_n"], run.csv_rows())
    payload = run.summary()
    if verdict is not None:
        payload["classification"] = verdict
    _write_json(out / f"control-{h}.json", payload)
    click.echo(f"wrote control bundle (converged: {run.converged}, exit: {run.exit})")
    if not run.converged and not (classify and run.exit in ("left", "right")):
        raise NumericalFailure("optimization did not converge; see bundle")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except (ConfigError, click.ClickException, click.UsageError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except PropertyViolation as exc:
        click.echo(f"property violation: {exc}", err=True)
        return 2
    except (NumericalFailure, NonHyperbolicRange, GridResolutionError,
            OmegaConstructionError, StiffnessError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except click.exceptions.Abort:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
