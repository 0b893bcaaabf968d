"""Reproducible experiment runner.

Configuration is a versioned YAML mapping (see README for the schema);
unknown keys are rejected before any computation.  Subcommands pick which
entries of the `analyses` list run:

    simulate     trajectory (n_paths=1) or ensemble statistics CSV
    check        invariance | equilibrium | lyapunov | first-integral | symplecticity
    convergence  strong-order estimate CSV
    stability    stability | attraction estimates CSV

Every output file carries the full resolved config and seed in '# ' comment
lines; identical (config, seed) give byte-identical files regardless of the
thread count.  Exit codes: 0 success, 1 failed check or integration abort,
2 invalid configuration (nothing written).
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from . import __version__
from .analyze import (
    check_equilibrium,
    check_invariance,
    check_symplecticity,
    empirical_convergence_order,
    equilibrium_attraction,
    fibonacci_sphere,
    first_integral_drift,
    lyapunov_monotonicity,
    report_to_csv,
    stability_probability,
    uniform_sphere_sampler,
)
from .integrate import (
    SCHEMES,
    IntegrationError,
    Trajectory,
    default_scheme,
    run_ensemble,
    write_csv,
)
from .models import build_model, kubo_exact, scalar_linear_exact, wrap_angles
from .noise import sample_brownian
from .vecalg import ScalarField, norm_squared_field, sphere_field


class ConfigError(Exception):
    """Invalid configuration; reported on stderr with exit code 2."""


_TOP_KEYS = {"version", "seed", "model", "scheme", "T", "h", "n_paths", "x0",
             "functionals", "analyses"}
_MODEL_KEYS = {"name", "params"}

# analysis kind -> (subcommand, required option keys, optional defaults)
_ANALYSES = {
    "invariance": ("check", {"tol"},
                   {"samples": 200, "manifold": "sphere", "eta_T": 10.0, "eta_h": 1e-3}),
    "equilibrium": ("check", {"tol", "point"}, {}),
    "lyapunov": ("check", {"functional"}, {"step_tol": 1e-6}),
    "first-integral": ("check", {"functional", "tol"}, {}),
    "symplecticity": ("check", {"tol"}, {}),
    "convergence": ("convergence", {"oracle", "levels", "n_paths"},
                    {"scheme": None, "h0": 2.0**-6, "T": 1.0, "oracle_gap": 3}),
    "stability": ("stability", {"x0_radius", "delta"}, {}),
    "attraction": ("stability", {"target", "eps"}, {}),
}


def _fail(msg: str) -> "ConfigError":
    return ConfigError(msg)


def _check_keys(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise _fail(f"{where} must be a mapping")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise _fail(f"{where}: unknown keys {sorted(unknown)}")


def _plain(obj):
    """Config values as plain Python types for a deterministic YAML dump."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def load_config(path: str, seed_override, task: str):
    """Parse, validate and resolve the experiment configuration.

    Returns (resolved config dict, built ModelSpec, seed).  Every schema
    violation raises ConfigError before anything is computed or written.
    """
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise _fail(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise _fail(f"config is not valid YAML: {exc}")
    _check_keys(raw, _TOP_KEYS, "config")
    if raw.get("version") != 1:
        raise _fail(f"config version must be 1, got {raw.get('version')!r}")

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise _fail("a seed is required (config key 'seed' or --seed)")
    seed = int(seed)
    if seed < 0:
        raise _fail(f"seed must be a nonnegative integer, got {seed}")

    model_cfg = raw.get("model")
    if model_cfg is None:
        raise _fail("config needs a 'model' section")
    _check_keys(model_cfg, _MODEL_KEYS, "model")
    if "name" not in model_cfg:
        raise _fail("model section needs a 'name'")
    params = model_cfg.get("params") or {}
    _check_keys(params, set(params), "model.params")
    try:
        model = build_model(str(model_cfg["name"]), **params)
    except (ValueError, TypeError) as exc:
        raise _fail(f"model: {exc}")

    scheme = raw.get("scheme") or default_scheme(model)
    if scheme not in SCHEMES:
        raise _fail(f"unknown scheme {scheme!r}; known: {sorted(SCHEMES)}")
    if SCHEMES[scheme] != model.interpretation:
        raise _fail(
            f"scheme {scheme!r} integrates {SCHEMES[scheme]} models, "
            f"but {model.name} is {model.interpretation}"
        )

    T = float(raw.get("T", 10.0))
    h = float(raw.get("h", 1e-4))
    if not (T > 0 and 0 < h <= T):
        raise _fail(f"need T > 0 and 0 < h <= T, got T={T}, h={h}")
    n_paths = int(raw.get("n_paths", 1))
    if n_paths < 1:
        raise _fail(f"n_paths must be >= 1, got {n_paths}")

    x0 = raw.get("x0")
    if x0 is not None and not (x0 == "sphere" or isinstance(x0, (list, tuple))):
        raise _fail("x0 must be a state vector or the string 'sphere'")
    if isinstance(x0, (list, tuple)):
        if len(x0) != model.n:
            raise _fail(f"x0 has {len(x0)} components, model needs {model.n}")
        x0 = [float(v) for v in x0]
    if x0 == "sphere" and model.n != 3:
        raise _fail("x0 'sphere' needs a 3-dimensional model")

    functionals = raw.get("functionals", ["norm2"])
    if not isinstance(functionals, list) or not functionals:
        raise _fail("functionals must be a nonempty list of names")
    for name in functionals:
        _functional(str(name), model)  # raises ConfigError on unknown names

    analyses = raw.get("analyses", [])
    if not isinstance(analyses, list):
        raise _fail("analyses must be a list")
    resolved_analyses = []
    for i, entry in enumerate(analyses):
        where = f"analyses[{i}]"
        if not isinstance(entry, dict) or "kind" not in entry:
            raise _fail(f"{where}: each analysis needs a 'kind'")
        kind = str(entry["kind"])
        if kind not in _ANALYSES:
            raise _fail(f"{where}: unknown kind {kind!r}; known: {sorted(_ANALYSES)}")
        _, required, defaults = _ANALYSES[kind]
        _check_keys(entry, {"kind"} | required | set(defaults), where)
        missing = required - set(entry)
        if missing:
            raise _fail(f"{where} ({kind}): missing options {sorted(missing)}")
        opts = dict(defaults)
        opts.update({k: v for k, v in entry.items() if k != "kind"})
        _validate_analysis(kind, opts, model, where)
        resolved_analyses.append({"kind": kind, **opts})

    needs_x0 = task == "simulate" or any(
        a["kind"] in ("lyapunov", "first-integral", "symplecticity", "attraction",
                      "convergence")
        for a in resolved_analyses
    )
    if needs_x0 and x0 is None:
        raise _fail(f"task {task!r} needs an x0")
    needs_point = {"symplecticity", "convergence"} & {a["kind"] for a in resolved_analyses}
    if needs_point and not isinstance(x0, list):
        raise _fail(f"{sorted(needs_point)[0]} analysis needs an explicit x0 vector")

    params_out = _plain(model.params)
    if "interpretation" in params:
        params_out["interpretation"] = model.interpretation
    cfg = {
        "version": 1,
        "seed": seed,
        "model": {"name": model_cfg["name"], "params": params_out},
        "scheme": scheme,
        "T": T,
        "h": h,
        "n_paths": n_paths,
        "x0": _plain(x0),
        "functionals": [str(n) for n in functionals],
        "analyses": _plain(resolved_analyses),
    }
    return cfg, model, seed


def _validate_analysis(kind, opts, model, where):
    if kind == "invariance":
        if opts["manifold"] != "sphere":
            raise _fail(f"{where}: unknown manifold {opts['manifold']!r}")
        if model.n != 3:
            raise _fail(f"{where}: sphere invariance needs a 3-dimensional model")
        if model.interpretation == "rode" and model.eta_builder is None:
            raise _fail(f"{where}: RODE invariance needs a model with a scalar eta")
        if int(opts["samples"]) < 1:
            raise _fail(f"{where}: samples must be >= 1")
    elif kind == "equilibrium":
        if len(opts["point"]) != model.n:
            raise _fail(f"{where}: point has {len(opts['point'])} components, "
                        f"model needs {model.n}")
    elif kind in ("lyapunov", "first-integral"):
        _functional(str(opts["functional"]), model)
    elif kind == "symplecticity":
        if model.n != 2:
            raise _fail(f"{where}: symplecticity needs a 2-dimensional model")
    elif kind == "convergence":
        if int(opts["levels"]) < 3:
            raise _fail(f"{where}: need at least 3 levels")
        if opts["oracle"] not in ("closed_form", "finest_refinement"):
            raise _fail(f"{where}: unknown oracle {opts['oracle']!r}")
        if opts["oracle"] == "closed_form" and _closed_form(model) is None:
            raise _fail(f"{where}: no closed form known for model {model.name!r}")
        if opts["scheme"] is not None and opts["scheme"] not in SCHEMES:
            raise _fail(f"{where}: unknown scheme {opts['scheme']!r}")
    elif kind == "stability":
        if not (float(opts["delta"]) > float(opts["x0_radius"]) > 0):
            raise _fail(f"{where}: need delta > x0_radius > 0")
    elif kind == "attraction":
        if float(opts["eps"]) <= 0:
            raise _fail(f"{where}: eps must be positive")
        if len(opts["target"]) != model.n:
            raise _fail(f"{where}: target has {len(opts['target'])} components, "
                        f"model needs {model.n}")


def _functional(name: str, model) -> ScalarField:
    """Named state functionals for CSV columns and check analyses."""
    if name in ("norm2", "energy"):
        f = norm_squared_field(dim=model.n)
        return ScalarField(value=f.value, gradient=f.gradient, hessian=f.hessian,
                           name=name)
    if name == "sphere":
        f = sphere_field(dim=model.n)
        return ScalarField(value=f.value, gradient=f.gradient, hessian=f.hessian,
                           name=name)
    if name == "norm":
        return ScalarField(
            value=lambda x: np.linalg.norm(x, axis=-1),
            gradient=lambda x: x / np.linalg.norm(x, axis=-1, keepdims=True),
            name="norm",
        )
    if name in ("align", "neg_align"):
        b = model.params.get("b")
        if b is None or model.n != 3:
            raise _fail(f"functional {name!r} needs a 3-dimensional model with a "
                        "field parameter b")
        bhat = np.asarray(b, dtype=float)
        bhat = bhat / np.linalg.norm(bhat)
        sgn = 1.0 if name == "align" else -1.0
        return ScalarField(
            value=lambda x: sgn * np.sum(x * bhat, axis=-1),
            gradient=lambda x: np.broadcast_to(sgn * bhat, np.shape(x)).copy(),
            name=name,
        )
    raise _fail(f"unknown functional {name!r}; known: align, energy, neg_align, "
                "norm, norm2, sphere")


def _closed_form(model):
    if model.name == "scalar_linear":
        a, b = model.params["a"], model.params["b_scalar"]
        return lambda x0, path: np.atleast_1d(scalar_linear_exact(a, b, x0[0], path)[-1])
    if model.name == "kubo":
        a, s = model.params["a"], model.params["sigma"]
        return lambda x0, path: kubo_exact(a, s, x0, path)[-1]
    return None


def _comment(task: str, cfg: dict) -> str:
    """Header comment lines; thread count is deliberately excluded so that
    identical (config, seed) runs give byte-identical files at any worker count."""
    dump = yaml.safe_dump(cfg, default_flow_style=True, sort_keys=True, width=10**9)
    return (f"stochlab {__version__} {task}\n"
            f"seed={cfg['seed']}\n"
            f"config: {dump.strip()}")


def _initial(cfg, model):
    if cfg["x0"] == "sphere":
        return uniform_sphere_sampler
    return np.asarray(cfg["x0"], dtype=float)


def _single_trajectory(cfg, model, threads) -> Trajectory:
    _, states = run_ensemble(
        model, _initial(cfg, model), cfg["scheme"], 1, cfg["seed"],
        functionals=(), T=cfg["T"], h=cfg["h"], threads=threads, return_states=True,
    )
    n_steps = states.shape[1] - 1
    times = np.arange(n_steps + 1) * cfg["h"]
    return Trajectory(times=times, states=states[0], model_name=model.name,
                      seed=cfg["seed"])


def cmd_simulate(cfg, model, out, threads) -> int:
    fields = [_functional(n, model) for n in cfg["functionals"]]
    comment = _comment("simulate", cfg)
    if cfg["n_paths"] == 1:
        traj = _single_trajectory(cfg, model, threads)
        traj = Trajectory(times=traj.times, states=wrap_angles(model, traj.states),
                          model_name=traj.model_name, seed=traj.seed)
        dest = os.path.join(out, "trajectory.csv")
        traj.to_csv(dest, functionals=fields, comment=comment)
        print(f"simulate: wrote {dest} ({len(traj.times)} rows)")
        return 0
    stats = run_ensemble(
        model, _initial(cfg, model), cfg["scheme"], cfg["n_paths"], cfg["seed"],
        functionals=fields, T=cfg["T"], h=cfg["h"], threads=threads,
    )
    dest = os.path.join(out, "ensemble.csv")
    stats.to_csv(dest, comment=comment)
    print(f"simulate: wrote {dest} ({cfg['n_paths']} paths, {len(stats.times)} rows)")
    return 0


def _rode_eta_samples(model, cfg, opts):
    path = sample_brownian(cfg["seed"], float(opts["eta_T"]), float(opts["eta_h"]))
    return model.eta_builder(path)


def _run_check(kind, opts, cfg, model, out, threads):
    """Run one check analysis; returns (passed, summary, dest)."""
    comment = _comment(f"check {kind}", cfg)
    dest = os.path.join(out, f"{kind}.csv")
    if kind == "invariance":
        eta = _rode_eta_samples(model, cfg, opts) if model.interpretation == "rode" else None
        report = check_invariance(
            model, sphere_field(), fibonacci_sphere(int(opts["samples"])),
            tol=float(opts["tol"]), eta_samples=eta,
        )
        report_to_csv(report, dest, comment=comment)
        worst = max(c.max_residual for c in report.conditions)
        return report.verdict, f"max residual {worst:.3g}", dest
    if kind == "equilibrium":
        report = check_equilibrium(model, [float(v) for v in opts["point"]],
                                   tol=float(opts["tol"]))
        report_to_csv(report, dest, comment=comment)
        bad = [t.name for t in report.drift_terms + report.diffusion_columns
               if not t.vanishes]
        note = "all terms vanish" if report.verdict else f"nonzero: {', '.join(bad)}"
        return report.verdict, note, dest
    if kind == "lyapunov":
        V = _functional(str(opts["functional"]), model)
        traj = _single_trajectory(cfg, model, threads)
        stats = lyapunov_monotonicity(traj, V, step_tol=float(opts["step_tol"]))
        write_csv(dest, "n_violations,max_increase,n_steps",
                  [[stats.n_violations], [stats.max_increase], [stats.n_steps]],
                  comment=comment)
        return (stats.n_violations == 0,
                f"{stats.n_violations} violations, max increase {stats.max_increase:.3g}",
                dest)
    if kind == "first-integral":
        F = _functional(str(opts["functional"]), model)
        traj = _single_trajectory(cfg, model, threads)
        drift = first_integral_drift(traj, F)
        write_csv(dest, "max_drift,terminal_drift",
                  [[drift.max_drift], [drift.terminal_drift]], comment=comment)
        return (drift.max_drift <= float(opts["tol"]),
                f"max drift {drift.max_drift:.3g}", dest)
    # symplecticity
    path = None
    if model.noise_dim:
        path = sample_brownian(cfg["seed"], cfg["T"], cfg["h"], dims=model.noise_dim)
    defect = check_symplecticity(model, cfg["scheme"], np.asarray(cfg["x0"], dtype=float),
                                 h=cfg["h"], T=cfg["T"], path=path)
    write_csv(dest, "defect", [[defect]], comment=comment)
    return defect <= float(opts["tol"]), f"defect {defect:.3g}", dest


def cmd_check(cfg, model, out, threads) -> int:
    entries = [a for a in cfg["analyses"] if _ANALYSES[a["kind"]][0] == "check"]
    if not entries:
        raise _fail("check: the analyses list has no check-type entries")
    all_pass = True
    for entry in entries:
        kind = entry["kind"]
        opts = {k: v for k, v in entry.items() if k != "kind"}
        passed, note, dest = _run_check(kind, opts, cfg, model, out, threads)
        all_pass &= passed
        print(f"check {kind}: {'pass' if passed else 'FAIL'} ({note}) -> {dest}")
    return 0 if all_pass else 1


def cmd_convergence(cfg, model, out, threads) -> int:
    entries = [a for a in cfg["analyses"] if a["kind"] == "convergence"]
    if not entries:
        raise _fail("convergence: the analyses list has no convergence entries")
    code = 0
    for i, entry in enumerate(entries):
        scheme = entry["scheme"] or cfg["scheme"]
        est = empirical_convergence_order(
            model, np.asarray(cfg["x0"], dtype=float), scheme,
            oracle=str(entry["oracle"]), levels=int(entry["levels"]),
            n_paths=int(entry["n_paths"]), seed=cfg["seed"], T=float(entry["T"]),
            h0=float(entry["h0"]), closed_form=_closed_form(model),
            oracle_gap=int(entry["oracle_gap"]),
        )
        name = "convergence.csv" if len(entries) == 1 else f"convergence_{i + 1}.csv"
        dest = os.path.join(out, name)
        comment = (_comment("convergence", cfg)
                   + f"\nslope={est.slope:.17g} half_width={est.half_width:.17g}")
        write_csv(dest, "step_size,error", [est.step_sizes, est.errors], comment=comment)
        print(f"convergence: slope {est.slope:.4f} +/- {est.half_width:.4f} -> {dest}")
    return code


def cmd_stability(cfg, model, out, threads) -> int:
    entries = [a for a in cfg["analyses"] if _ANALYSES[a["kind"]][0] == "stability"]
    if not entries:
        raise _fail("stability: the analyses list has no stability/attraction entries")
    for i, entry in enumerate(entries):
        kind = entry["kind"]
        suffix = "" if sum(e["kind"] == kind for e in entries) == 1 else f"_{i + 1}"
        dest = os.path.join(out, f"{kind}{suffix}.csv")
        comment = _comment(f"stability {kind}", cfg)
        if kind == "stability":
            est = stability_probability(
                model, float(entry["x0_radius"]), float(entry["delta"]),
                T=cfg["T"], n_paths=cfg["n_paths"], seed=cfg["seed"], h=cfg["h"],
            )
            write_csv(dest, "probability,half_width,n_paths,n_exceed",
                      [[est.probability], [est.half_width], [est.n_paths],
                       [est.n_exceed]], comment=comment)
            print(f"stability: exceedance {est.probability:.4f} "
                  f"+/- {est.half_width:.4f} -> {dest}")
        else:
            est = equilibrium_attraction(
                model, [float(v) for v in entry["target"]], float(entry["eps"]),
                T=cfg["T"], n_paths=cfg["n_paths"], x0=_initial(cfg, model),
                seed=cfg["seed"], h=cfg["h"],
            )
            write_csv(dest, "fraction,half_width,n_paths,n_attracted",
                      [[est.fraction], [est.half_width], [est.n_paths],
                       [est.n_attracted]], comment=comment)
            print(f"attraction: fraction {est.fraction:.4f} "
                  f"+/- {est.half_width:.4f} -> {dest}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "check": cmd_check,
    "convergence": cmd_convergence,
    "stability": cmd_stability,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochlab",
        description="Stochastisation laboratory: simulate catalog models and "
                    "run persistence analyses from a YAML config.",
    )
    parser.add_argument("task", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for ensemble runs")
    args = parser.parse_args(argv)

    try:
        cfg, model, _ = load_config(args.config, args.seed, args.task)
        if args.threads < 1:
            raise _fail(f"threads must be >= 1, got {args.threads}")
        os.makedirs(args.out, exist_ok=True)
        # Overflow to inf is the expected signature of a diverging path; the
        # finite-state check turns it into a diagnosable abort.
        with np.errstate(over="ignore", invalid="ignore"):
            return _COMMANDS[args.task](cfg, model, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"integration aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
