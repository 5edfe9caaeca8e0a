"""Command-line entry point: ``gibbstorus <command> [-c config.yaml]``.

Every command writes its tables (CSV with ``#`` definition headers), a JSON
summary and ``manifest.json`` into the output directory.  The config is a
YAML file with top-level run settings and one section per command; unknown
keys are rejected.

Exit codes: 0 success, 1 numerical criterion failed, 2 config error,
3 internal error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import platform
import sys
import time
import traceback
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .dynamics import get_family, get_map
from .errors import ConfigError, GibbsTorusError
from .gibbs import (GibbsMeasure, ball_drift_slope, ball_ratio_table, correlation_model,
                    correlation_residuals)
from .leafwise import make_segment, margulis_iterate, margulis_unstable
from .oracles import monte_carlo_survival, periodic_orbit_measure, separated_set_pressure
from .potentials import parse_potential
from .response import (ResponseConfig, fd_measure_derivative, fd_pressure_curve, measure_derivative,
                       pressure_derivative)
from .spectral import assemble, escape_rate, parse_truncation, resonances, smooth_hole, \
    spectral_convergence_report

ENV_OUT = "GIBBSTORUS_OUT"
ENV_WORKERS = "GIBBSTORUS_WORKERS"

EXIT_OK, EXIT_CRITERION, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

DEFAULTS: Dict[str, object] = {
    "map": "cat",
    "potential": "zero",
    "truncation": "identity",
    "seed": 0,
    "workers": 1,
    "output": "gibbstorus_out",
    "spectral": {"N": 8, "quad_points": None, "check_aliasing": True},
    "pressure": {"oracle": "auto", "eps": 0.1, "n": 8},
    "gibbs": {"observables": ["fourier(1*cos(1,0))", "fourier(1*cos(0,1))"]},
    "correlations": {"psi1": "fourier(1*cos(1,0))", "psi2": "fourier(1*cos(0,1))",
                     "sigma": 0.3, "n_max": 30},
    "resonances": {"k": 5, "N_list": []},
    "balls": {"eps": 0.2, "n_min": 2, "n_max": 12, "centers": 50},
    "margulis": {"center": [0.3, 0.2], "direction": "stable", "length": 0.3, "n": 20},
    "escape": {"amplitudes": [0.05, 0.1, 0.2], "n_max": 25, "samples": 1_000_000},
    "respond": {"family": "perturbed_cat(0.0)", "observable": "fourier(1*cos(0,1))",
                "n_terms": 40, "k_range": 20, "delta": 0.001, "fd_N": 12},
    "verify": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]},
}

COMMANDS = ["pressure", "gibbs", "correlations", "resonances", "balls", "margulis", "escape",
            "respond", "verify"]


# ----------------------------------------------------------------------------
# config


def _check_value(path: str, value, default):
    """Type check against the default; ``None`` defaults accept ints."""
    if default is None:
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{path}: expected an integer or null, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _merge(defaults: dict, given: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"{path}: unknown key")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a section")
            out[key] = _merge(defaults[key], value, path + ".")
        else:
            out[key] = _check_value(path, value, defaults[key])
    return out


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse YAML text, reject unknown keys and materialize every default."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    cfg = _merge(DEFAULTS, raw)
    # descriptors are validated here so that typos surface as config errors
    try:
        tmap = get_map(cfg["map"])
        parse_potential(cfg["potential"], tmap)
        parse_truncation(cfg["truncation"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, path)


# ----------------------------------------------------------------------------
# artifacts


def _plain(obj):
    """Convert numpy and complex values into JSON-ready data."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(np.real(obj)), "im": float(np.imag(obj))}
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


class Artifacts:
    """Collects written files for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: List[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, columns: List[tuple], rows) -> Path:
        """``columns`` is a list of ``(name, definition)`` pairs."""
        path = self.root / name
        with path.open("w", newline="") as fh:
            for col, definition in columns:
                fh.write(f"# {col}: {definition}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([c for c, _ in columns])
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)
        return path

    def json(self, name: str, data) -> Path:
        path = self.root / name
        path.write_text(json.dumps(_plain(data), indent=1, sort_keys=True) + "\n")
        self.files.append(name)
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _versions() -> dict:
    import scipy
    import sklearn
    return {"gibbstorus": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


# ----------------------------------------------------------------------------
# commands


def _observable(desc: str, tmap) -> Callable:
    if desc.strip() == "one":
        return lambda x: np.ones(np.asarray(x).shape[:-1])
    pot = parse_potential(desc, tmap)
    if pot.kind != "W1":
        raise ConfigError(f"observable {desc!r} must be a position-only function")
    return pot.w1


def _setup(cfg):
    tmap = get_map(cfg["map"])
    pot = parse_potential(cfg["potential"], tmap)
    trunc = parse_truncation(cfg["truncation"])
    return tmap, pot, trunc


def _model(cfg, tmap, pot, trunc):
    s = cfg["spectral"]
    return assemble(tmap, pot, trunc, s["N"], s["quad_points"], check_aliasing=s["check_aliasing"])


def cmd_pressure(cfg, out: Artifacts) -> bool:
    tmap, pot, trunc = _setup(cfg)
    model = _model(cfg, tmap, pot, trunc)
    p = cfg["pressure"]
    method = p["oracle"]
    if method == "auto":
        method = "periodic" if tmap.invertible else "separated"
    if method == "separated":
        rep = separated_set_pressure(tmap, pot, p["eps"], p["n"])
        lo, hi = rep.extra["bracket"]
    elif method == "periodic":
        rep = periodic_orbit_measure(tmap, pot, p["n"], lambda x: np.ones(x.shape[:-1]))
        est, err = rep.extra["pressure"], rep.extra["pressure_error"]
        lo, hi = est - err, est + err
    else:
        raise ConfigError(f"pressure.oracle: unknown oracle {method!r}")
    encloses = bool(lo <= model.pressure <= hi)
    out.json("pressure.json", {"spectral": model.pressure, "rho": model.rho, "gap": model.gap,
                               "residuals": model.residuals, "oracle": rep.to_dict(),
                               "oracle_bracket": [lo, hi], "encloses": encloses})
    out.json("model.json", model.to_dict())
    return True


def cmd_gibbs(cfg, out: Artifacts) -> bool:
    tmap, pot, trunc = _setup(cfg)
    mu = GibbsMeasure(_model(cfg, tmap, pot, trunc))
    rows = [(d, mu.integrate(_observable(d, tmap))) for d in cfg["gibbs"]["observables"]]
    out.csv("gibbs.csv", [("observable", "observable descriptor"),
                          ("value", "Gibbs average of the observable")], rows)
    out.json("gibbs.json", {"pressure": mu.pressure, "averages": dict(rows)})
    return True


def cmd_correlations(cfg, out: Artifacts) -> bool:
    tmap, pot, trunc = _setup(cfg)
    mu = GibbsMeasure(_model(cfg, tmap, pot, trunc))
    c = cfg["correlations"]
    psi1, psi2 = _observable(c["psi1"], tmap), _observable(c["psi2"], tmap)
    cm = correlation_model(mu, c["sigma"])
    fit = correlation_residuals(mu, cm, psi1, psi2, c["n_max"])
    corr = mu.correlation_sequence(psi1, psi2, c["n_max"])
    label = f"{c['psi1']};{c['psi2']}"
    t1, t2 = cm.tau1(psi1), cm.tau2(psi2)
    pred = [float(np.real(t2 @ (cm.eigenvalues ** n * t1))) for n in range(c["n_max"] + 1)]
    rows = [(label, n, corr[n], pred[n], fit.residuals[n]) for n in range(c["n_max"] + 1)]
    out.csv("correlations.csv", [
        ("observables", "psi1;psi2 descriptors"),
        ("n", "time lag in map iterations"),
        ("correlation", "integral of psi1 * psi2 o T^n against the Gibbs measure"),
        ("model", "finite-rank prediction from resonances of modulus above sigma"),
        ("residual", "absolute difference correlation - model")], rows)
    bound_slope = float(np.log(c["sigma"]))
    out.json("correlations.json", {"sigma": c["sigma"], "rank": cm.k, "C": fit.C,
                                   "slope": fit.slope, "log_sigma": bound_slope,
                                   "within_bound": bool(fit.slope <= bound_slope + 0.05)})
    return True


def cmd_resonances(cfg, out: Artifacts) -> bool:
    tmap, pot, trunc = _setup(cfg)
    model = _model(cfg, tmap, pot, trunc)
    r = cfg["resonances"]
    top = resonances(model, r["k"])
    out.csv("resonances.csv", [
        ("index", "rank by decreasing modulus"),
        ("real", "real part of eigenvalue divided by the leading one"),
        ("imag", "imaginary part of the same ratio"),
        ("modulus", "modulus of the ratio")],
        [(i, z.real, z.imag, abs(z)) for i, z in enumerate(top)])
    summary = {"rho": model.rho, "gap": model.gap, "pressure": model.pressure}
    if r["N_list"]:
        rows, non_cauchy = spectral_convergence_report(tmap, pot, trunc, r["N_list"], k=r["k"])
        out.csv("convergence.csv", [
            ("N", "Fourier cutoff"), ("rho", "leading eigenvalue"), ("gap", "spectral gap ratio"),
            ("top_k_deviation", "change of the top eigenvalues from the previous cutoff"),
            ("aliasing", "quadrature aliasing detected")],
            [(x["N"], x["rho"], x["gap"], x["top_k_deviation"], int(x["aliasing"])) for x in rows])
        summary["non_cauchy"] = non_cauchy
    out.json("resonances.json", summary)
    return True


def cmd_balls(cfg, out: Artifacts) -> bool:
    tmap, pot, trunc = _setup(cfg)
    mu = GibbsMeasure(_model(cfg, tmap, pot, trunc))
    b = cfg["balls"]
    rng = np.random.default_rng(cfg["seed"])
    centers = rng.random((b["centers"], tmap.dim))
    ns = list(range(b["n_min"], b["n_max"] + 1))
    L = ball_ratio_table(mu, tmap, pot, centers, b["eps"], ns)
    coords = [f"x{i + 1}" for i in range(tmap.dim)]
    cols = [("center", "center index")] + [(c, f"coordinate {c} of the center") for c in coords]
    cols += [("n", "ball depth"),
             ("log_ratio", "log of ball measure over exp(S_n phi_bar - n P)")]
    rows = [(i, *centers[i], n, L[i, j]) for i in range(len(centers)) for j, n in enumerate(ns)]
    out.csv("balls.csv", cols, rows)
    out.json("balls.json", {"max_over_min": float(np.exp(L.max() - L.min())),
                            "drift_slope": ball_drift_slope(L, ns)})
    return True


def cmd_margulis(cfg, out: Artifacts) -> bool:
    tmap, pot, trunc = _setup(cfg)
    P = _model(cfg, tmap, pot, trunc).pressure
    m = cfg["margulis"]
    seed = make_segment(tmap, m["center"][:tmap.dim], m["direction"], m["length"])
    run = margulis_iterate if m["direction"] == "stable" else margulis_unstable
    meas = run(tmap, pot, trunc, seed, m["n"], P)
    coords = [f"x{i + 1}" for i in range(tmap.dim)]
    cols = [("generation", "number of weighted steps"), ("segment", "sub-segment id"),
            ("arclength", "parameter along the straight seed")]
    cols += [(c, f"image coordinate {c} on the lifted plane") for c in coords]
    cols += [("weight", "leafwise density with respect to the seed parameter")]
    img = meas.images[0]
    rows = [(m["n"], 0, t, *img[i], meas.density[0, i]) for i, t in enumerate(meas.params)]
    out.csv("leaf.csv", cols, rows)
    out.csv("conformality.csv", [("generation", "step index"),
                                 ("residual", "relative conformality defect after this step")],
            list(enumerate(meas.residuals, start=1)))
    out.json("margulis.json", {"pressure_spectral": P, "pressure_leaf": meas.pressure_estimate,
                               "conformality_residual": meas.conformality_residual})
    return True


def cmd_escape(cfg, out: Artifacts) -> bool:
    tmap, pot, _ = _setup(cfg)
    e = cfg["escape"]
    workers = cfg["workers"]
    rows = []
    for amp in e["amplitudes"]:
        hole = smooth_hole(amp)
        rate = escape_rate(tmap, pot, hole, cfg["spectral"]["N"])
        mc = monte_carlo_survival(tmap, hole, e["n_max"], e["samples"], seed=cfg["seed"],
                                  workers=workers)
        rows.append((amp, rate, mc.estimate, mc.error_bar))
    out.csv("escape.csv", [("amplitude", "hole amplitude"),
                           ("spectral", "log of the leading eigenvalue with the hole"),
                           ("monte_carlo", "log-survival slope of the killed process"),
                           ("mc_error", "standard error of the slope")], rows)
    rates = [r[1] for r in rows]
    out.json("escape.json", {"monotone": bool(all(a > b for a, b in zip(rates, rates[1:])))})
    return True


def cmd_respond(cfg, out: Artifacts) -> bool:
    r = cfg["respond"]
    try:
        fam = get_family(r["family"])
    except ValueError as exc:
        raise ConfigError(f"respond.family: {exc}") from None
    pot = parse_potential(cfg["potential"], fam.base)
    rc = ResponseConfig(fam, pot, n_terms=r["n_terms"], k_range=r["k_range"])
    mu = GibbsMeasure(assemble(fam.base, pot, N=cfg["spectral"]["N"], check_aliasing=False))
    h = pressure_derivative(rc, mu)
    _, P, slope = fd_pressure_curve(rc, r["delta"], N=r["fd_N"])
    res = {"pressure_derivative": h, "pressure_fd_slope": slope, "pressure_nodes": P}
    if fam.base.invertible:
        psi = _observable(r["observable"], fam.base)
        rep = measure_derivative(rc, mu, psi)
        res["measure_derivative"] = rep.to_dict()
        res["measure_fd"] = fd_measure_derivative(rc, psi, r["delta"], N=r["fd_N"])
    out.json("respond.json", res)
    return True


def cmd_verify(cfg, out: Artifacts) -> bool:
    from .acceptance import run_all
    results = run_all(set(cfg["verify"]["criteria"]))
    for res in results:
        print(res.line(), flush=True)
    out.csv("verify.csv", [("criterion", "acceptance criterion number"),
                           ("title", "short description"), ("passed", "1 if every check passed"),
                           ("seconds", "wall time")],
            [(r.number, r.title, int(r.passed), r.seconds) for r in results])
    out.json("verify.json", {str(r.number): {"passed": r.passed, "checks": r.checks,
                                             "values": r.values} for r in results})
    return all(r.passed for r in results)


HANDLERS: Dict[str, Callable[[dict, Artifacts], bool]] = {
    "pressure": cmd_pressure, "gibbs": cmd_gibbs, "correlations": cmd_correlations,
    "resonances": cmd_resonances, "balls": cmd_balls, "margulis": cmd_margulis,
    "escape": cmd_escape, "respond": cmd_respond, "verify": cmd_verify,
}


def run(command: str, cfg: dict) -> int:
    """Run one command with a validated config and write the manifest."""
    root = Path(os.environ.get(ENV_OUT) or cfg["output"]) / command
    out = Artifacts(root)
    manifest = {"command": command, "config": cfg, "versions": _versions(), "seed": cfg["seed"],
                "complete": False, "files": out.files}
    t0 = time.time()
    manifest["started"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0))
    status = EXIT_INTERNAL
    try:
        ok = HANDLERS[command](cfg, out)
        manifest["complete"] = True
        status = EXIT_OK if ok else EXIT_CRITERION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        status = EXIT_CONFIG
    except GibbsTorusError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        status = EXIT_CRITERION
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    finally:
        manifest["wall_seconds"] = time.time() - t0
        manifest["exit_status"] = status
        (root / "manifest.json").write_text(json.dumps(_plain(manifest), indent=1, sort_keys=True) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gibbstorus",
                                 description="Gibbs measures of hyperbolic torus maps.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("-c", "--config", help="YAML config file")
    ap.add_argument("-o", "--output", help="output directory (overrides the config)")
    ap.add_argument("--map", help="map descriptor (overrides the config)")
    ap.add_argument("--potential", help="potential descriptor (overrides the config)")
    ap.add_argument("--N", type=int, help="Fourier cutoff (overrides the config)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--criteria", type=int, nargs="+", help="criteria for verify")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {}
        for key in ("map", "potential", "seed", "output"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        if args.N is not None:
            overrides["spectral"] = {"N": args.N}
        if args.criteria:
            overrides["verify"] = {"criteria": args.criteria}
        if overrides:
            merged = _merge(DEFAULTS, {k: v for k, v in cfg.items()})
            for k, v in overrides.items():
                if isinstance(v, dict):
                    merged[k].update(v)
                else:
                    merged[k] = v
            cfg = parse_config(yaml.safe_dump(merged))
        workers = os.environ.get(ENV_WORKERS)
        if workers is not None:
            try:
                cfg["workers"] = max(1, int(workers))
            except ValueError:
                raise ConfigError(f"{ENV_WORKERS}: expected an integer, got {workers!r}") from None
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
