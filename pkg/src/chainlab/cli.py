"""The `lab` experiment runner.

    lab <kind> --config <file> [--out <dir>] [--seed <u64>] [--threads <k>]

kind is one of thermo | simulate | hydro | fluct | verify.  Configuration
is a single JSON document (schema version 1); the only environment input
is the output directory override.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 acceptance-check failure (verify).
"""

import argparse
import json
import os
import subprocess
import sys

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from . import dynamics as dyn
from .errors import ChainLabError, ConfigError
from .experiments import (
    DEFAULT_PROFILE,
    DEFAULT_TEST_FUNCTION,
    VERIFY_SUITES,
    bg_decay,
    fluct_transport,
    hydro_error_sweep,
    qv_check,
    simulate_run,
    thermo_tables,
    verify_suite,
)
from .potentials import BUILTINS, ScalingRegime, validate_regime
from .sim_io import Manifest, write_csv, write_json, write_svg_plot

KINDS = ("thermo", "simulate", "hydro", "fluct", "verify")

_MODES = {"type": "array",
          "items": {"type": "array", "minItems": 3, "maxItems": 3,
                    "items": {"type": "number"}}}
_PROFILE = {"type": "object",
            "properties": {"p": _MODES, "r": _MODES},
            "required": ["p", "r"], "additionalProperties": False}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "kind": {"enum": list(KINDS)},
        "model": {
            "type": "object",
            "properties": {"beta": {"type": "number", "exclusiveMinimum": 0},
                           "sigma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                           "gamma": {"type": "number", "minimum": 0}},
            "required": ["beta"],
            "additionalProperties": False,
        },
        "regime": {
            "type": "object",
            "properties": {"a": {"type": "number", "minimum": 0},
                           "b": {"type": "number", "minimum": 0},
                           "A": {"type": "number", "exclusiveMinimum": 0},
                           "B": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["a", "b"],
            "additionalProperties": False,
        },
        "potential": {"enum": sorted(BUILTINS)},
        "n": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "t_end": {"type": "number", "exclusiveMinimum": 0},
        "obs_interval": {"type": "number", "exclusiveMinimum": 0},
        "initial_profile": _PROFILE,
        "test_function": _PROFILE,
        "fluct_task": {"enum": ["transport", "bg", "qv"]},
        "times": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "verify_suites": {"type": "array", "items": {"enum": sorted(VERIFY_SUITES)}},
        "out_dir": {"type": "string"},
    },
    "required": ["schema_version", "kind"],
    "additionalProperties": False,
}


def validate_config(doc):
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {e.message}", field=path)
    if doc["kind"] == "fluct" and doc.get("fluct_task", "transport") != "transport":
        pass
    if doc["kind"] in ("hydro",) or (doc["kind"] == "fluct" and "regime" in doc):
        reg = doc.get("regime")
        if reg is None:
            raise ConfigError("hydro experiments need a 'regime' block", field="regime")
        verdict = validate_regime(ScalingRegime(reg["a"], reg["b"],
                                                reg.get("A", 1.0), reg.get("B", 1.0)))
        if not verdict:
            raise ConfigError(f"regime rejected: {verdict.reason}", field="regime")
    return doc


def _version_string():
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        ).stdout.strip()
    except Exception:
        desc = ""
    return f"chainlab {__version__}" + (f" ({desc})" if desc else "")


def _run_thermo(cfg, out, manifest):
    model = cfg.get("model", {"beta": 1.0, "sigma": 0.1})
    pot = BUILTINS[cfg.get("potential", "one-minus-cosine")]
    curve, tau_tab, r_tab = thermo_tables(model["beta"], model.get("sigma", 0.0), pot)
    write_csv(os.path.join(out, "thermo_tau.csv"), ["tau", "Z", "G", "rbar"],
              [tau_tab["tau"], tau_tab["Z"], tau_tab["G"], tau_tab["rbar"]])
    write_csv(os.path.join(out, "thermo_r.csv"), ["r", "tension", "F"],
              [r_tab["r"], r_tab["tension"], r_tab["F"]])
    curve.to_json(os.path.join(out, "thermo_curve.json"))
    write_svg_plot(os.path.join(out, "tension.svg"),
                   [("tension(r)", r_tab["r"], r_tab["tension"]),
                    ("r", r_tab["r"], r_tab["r"])],
                   title="equilibrium tension", xlabel="r", ylabel="tension")
    for name in ("thermo_tau.csv", "thermo_r.csv", "thermo_curve.json", "tension.svg"):
        manifest.add_artifact(name)
    return 0


def _run_simulate(cfg, out, manifest, seed, threads):
    model = cfg.get("model", {"beta": 1.0, "sigma": 0.1, "gamma": 1.0})
    n = cfg.get("n", [64])[0]
    snaps, report = simulate_run(
        n, model["beta"], model.get("sigma", 0.0), model.get("gamma", 1.0),
        cfg.get("t_end", 1.0), cfg.get("obs_interval", 1e-2),
        cfg.get("initial_profile", DEFAULT_PROFILE),
        BUILTINS[cfg.get("potential", "one-minus-cosine")],
        seed, cfg.get("scheme", "strang") if "scheme" in cfg else "strang",
    )
    dyn.write_snapshot_csv(os.path.join(out, "snapshots.csv"), snaps)
    dyn.write_frames(os.path.join(out, "frames.bin"), snaps)
    write_json(os.path.join(out, "conservation.json"), report)
    ts = [st.t for st in snaps]
    write_svg_plot(os.path.join(out, "fields.svg"),
                   [("p(t_end)", snaps[-1].p * 0 + np.arange(n) / n, snaps[-1].p),
                    ("r(t_end)", np.arange(n) / n, snaps[-1].r)],
                   title=f"state at t={ts[-1]:.3g}", xlabel="x")
    for name in ("snapshots.csv", "frames.bin", "conservation.json", "fields.svg"):
        manifest.add_artifact(name)
    return 0


def _run_hydro(cfg, out, manifest, seed, threads):
    reg = cfg["regime"]
    regime = ScalingRegime(reg["a"], reg["b"], reg.get("A", 1.0), reg.get("B", 1.0))
    result = hydro_error_sweep(
        cfg.get("n", [128, 256, 512]), regime, cfg.get("replicas", 100),
        cfg.get("t_end", 0.5), cfg.get("initial_profile", DEFAULT_PROFILE),
        cfg.get("test_function", DEFAULT_TEST_FUNCTION),
        cfg.get("model", {"beta": 1.0})["beta"],
        BUILTINS[cfg.get("potential", "one-minus-cosine")],
        seed, threads,
    )
    rows = result["rows"]
    write_csv(os.path.join(out, "hydro_decay.csv"), ["n", "estimate", "se"],
              [[r["n"] for r in rows], [r["estimate"] for r in rows],
               [r["se"] for r in rows]])
    write_json(os.path.join(out, "hydro_result.json"), result)
    write_svg_plot(os.path.join(out, "hydro_decay.svg"),
                   [("E|<h,err>|", [r["n"] for r in rows], [r["estimate"] for r in rows])],
                   title=f"decay exponent {result['decay_exponent']:.3f}",
                   xlabel="n", ylabel="error", logx=True, logy=True)
    for name in ("hydro_decay.csv", "hydro_result.json", "hydro_decay.svg"):
        manifest.add_artifact(name)
    return 0


def _run_fluct(cfg, out, manifest, seed, threads):
    task = cfg.get("fluct_task", "transport")
    model = cfg.get("model", {"beta": 1.0, "gamma": 1.0})
    if task == "transport":
        result = fluct_transport(
            n=cfg.get("n", [512])[0], replicas=cfg.get("replicas", 200),
            times=tuple(cfg.get("times", [0.25, 0.5])), beta=model["beta"],
            gamma=model.get("gamma", 1.0), seed=seed, threads=threads,
        )
    elif task == "bg":
        reg = cfg.get("regime", {"a": 0.25, "b": 0.25})
        result = bg_decay(
            n_list=cfg.get("n", [128, 2048]),
            regime=ScalingRegime(reg["a"], reg["b"], reg.get("A", 1.0), reg.get("B", 1.0)),
            replicas=cfg.get("replicas", 100), t_end=cfg.get("t_end", 0.25),
            beta=model["beta"], seed=seed, threads=threads,
        )
    else:
        result = qv_check(
            n=cfg.get("n", [64])[0], replicas=cfg.get("replicas", 200),
            t_end=cfg.get("t_end", 0.25), beta=model["beta"],
            gamma=model.get("gamma", 1.0), seed=seed, threads=threads,
        )
    write_json(os.path.join(out, f"fluct_{task}.json"), result)
    manifest.add_artifact(f"fluct_{task}.json")
    return 0


def _run_verify(cfg, out, manifest, seed, threads):
    result = verify_suite(cfg.get("verify_suites"), seed=seed)
    write_json(os.path.join(out, "verify_report.json"), result)
    manifest.add_artifact("verify_report.json")
    for check in result["checks"]:
        status = "pass" if check["pass"] else "FAIL"
        print(f"[{status}] {check['name']}: value={check['value']:.6g} "
              f"bound={check['bound']:.6g} {check['detail']}")
    return 0 if result["all_pass"] else 4


_RUNNERS = {
    "thermo": lambda cfg, out, man, seed, thr: _run_thermo(cfg, out, man),
    "simulate": _run_simulate,
    "hydro": _run_hydro,
    "fluct": _run_fluct,
    "verify": _run_verify,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lab", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = args.out or cfg.get("out_dir") or os.environ.get("CHAINLAB_OUT", ".")
    os.makedirs(out, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    manifest = Manifest(out, cfg, _version_string(), seed)
    try:
        cfg = validate_config(cfg)
        if cfg["kind"] != args.kind:
            raise ConfigError(
                f"kind: config says {cfg['kind']!r} but command line says {args.kind!r}",
                field="kind",
            )
        code = _RUNNERS[args.kind](cfg, out, manifest, seed, args.threads)
        manifest.finish("ok" if code == 0 else "check-failed")
        return code
    except ConfigError as exc:
        manifest.finish("config-error", error=exc, provenance="chainlab.cli")
        print(f"config error: {exc}" + (f" (field {exc.field})" if exc.field else ""),
              file=sys.stderr)
        return 2
    except ChainLabError as exc:
        manifest.finish("numerical-failure", error=exc, provenance=type(exc).__module__)
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
