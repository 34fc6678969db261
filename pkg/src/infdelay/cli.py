"""Batch command line: ``infdelay <command> --config run.json --out DIR``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
numerical failures; failures also print a one-line JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import models as M
from .functional import LinearFunctionalSpec, SpecError
from .history import (BoundaryAugmentedState, gauge_transform, history_from_descriptor, inverse_gauge_transform,
                      read_history_csv, write_history_csv)
from .reports import ROOT_HEADER, root_rows, write_csv, write_gnuplot, write_json
from .solver import NumericalFailure, find_equilibrium, integrate, linearize
from .spectral import ScanRegion, SpectralError, find_roots, projector
from .stability import assess_stability, hopf_scan, verify_hopf_by_simulation

log = logging.getLogger("infdelay")

COMMANDS = ("simulate", "spectrum", "projector", "stability", "hopf-scan", "gauge", "verify")
TOP_KEYS = {"model", "functional", "history", "alpha", "region", "numerics", "analysis", "output"}


class ConfigError(ValueError):
    pass


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _check_keys(cfg, TOP_KEYS, "config")
    return cfg


# config pieces ------------------------------------------------------------------------
def _model(cfg):
    spec = cfg.get("model")
    if spec is None:
        raise ConfigError("config needs a 'model' section")
    _check_keys(spec, {"name", "params", "equilibrium"}, "model")
    try:
        return M.get_model(spec["name"], **spec.get("params", {}))
    except M.UnknownModelError as exc:
        raise ConfigError(str(exc.args[0])) from exc


def _equilibrium(cfg, model):
    spec = cfg["model"]
    eq = spec.get("equilibrium")
    name = spec["name"]
    if eq is None:
        if name == "chemostat":
            eq = "interior"
        elif name == "fishery":
            eq = "interior"
        else:
            return np.zeros(model.dim)
    if isinstance(eq, str):
        params = spec.get("params", {})
        if name == "chemostat":
            table = M.chemostat_equilibria(**params)
        elif name == "fishery":
            table = {"interior": M.fishery_equilibrium(**params)}
        else:
            table = {"zero": np.zeros(model.dim)}
        if eq not in table:
            raise ConfigError(f"unknown equilibrium {eq!r} for {name}; choose from {sorted(table)}")
        return table[eq]
    return find_equilibrium(model, eq)


def _functional(cfg) -> LinearFunctionalSpec:
    if "functional" in cfg:
        try:
            return LinearFunctionalSpec.from_dict(cfg["functional"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad functional: {exc}") from exc
    model = _model(cfg)
    return linearize(model, _equilibrium(cfg, model))


def _region(cfg, L) -> ScanRegion | None:
    reg = cfg.get("region")
    if reg is None:
        return None
    if isinstance(reg, list):
        if len(reg) != 4:
            raise ConfigError("region must be [re_min, re_max, im_min, im_max]")
        return ScanRegion(*map(float, reg))
    _check_keys(reg, {"re_min", "re_max", "im_min", "im_max", "max_depth", "margin"}, "region")
    return ScanRegion(**reg)


def _numerics(cfg, **defaults):
    num = cfg.get("numerics", {})
    _check_keys(num, {"T", "h", "tol"}, "numerics")
    out = dict(defaults)
    out.update(num)
    return out


def _analysis(cfg, allowed: set) -> dict:
    an = cfg.get("analysis", {})
    _check_keys(an, allowed, "analysis")
    return an


def _output(cfg, default_prefix):
    out = cfg.get("output", {})
    _check_keys(out, {"prefix", "png", "gnuplot"}, "output")
    return out.get("prefix", default_prefix), bool(out.get("png", False)), bool(out.get("gnuplot", True))


def _history(cfg, eta, dim):
    desc = cfg.get("history", {"preset": "constant", "params": {"value": [1.0] * dim}})
    try:
        phi = history_from_descriptor(desc, eta)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad history: {exc}") from exc
    if phi.dim != dim:
        raise ConfigError(f"history dimension {phi.dim} != model dimension {dim}")
    return phi


# commands -----------------------------------------------------------------------------
def cmd_simulate(cfg, out: Path, args) -> dict:
    model = _model(cfg)
    phi = _history(cfg, model.eta, model.dim)
    num = _numerics(cfg, T=10.0, h=1e-2)
    prefix, png, gp = _output(cfg, "trace")
    trace = integrate(model, phi, float(num["T"]), float(num["h"]))
    files = [trace_path := out / f"{prefix}.csv"]
    trace.to_csv(trace_path)
    if gp:
        cols = [(1, i + 2, f"x_{i + 1}") for i in range(model.dim)]
        files.append(write_gnuplot(out / f"{prefix}.gp", trace_path.name, model.name, "t", "x", cols,
                                   image=f"{prefix}_gnuplot.png"))
    if png:
        from .plotting import plot_trace

        files.append(plot_trace(trace, out / f"{prefix}.png"))
    summary = {"model": model.name, "termination": trace.termination, "t_end": trace.t_end,
               "t_star": trace.t_star, "final_state": trace.states[-1], "steps": len(trace.times) - 1}
    files.append(write_json(out / f"{prefix}_summary.json", summary))
    return {"files": files, "summary": summary}


def cmd_spectrum(cfg, out: Path, args) -> dict:
    L = _functional(cfg)
    region = _region(cfg, L)
    if region is None:
        from .stability import certified_region

        region = certified_region(L)
    num = _numerics(cfg, tol=1e-12)
    prefix, png, gp = _output(cfg, "roots")
    roots = find_roots(L, region, float(num["tol"]))
    path = write_csv(out / f"{prefix}.csv", ROOT_HEADER, root_rows(roots))
    files = [path]
    if gp:
        files.append(write_gnuplot(out / f"{prefix}.gp", path.name, "characteristic roots", "Re", "Im",
                                   [(1, 2, "roots")], image=f"{prefix}_gnuplot.png", style="points pt 7"))
    if png:
        from .plotting import plot_spectrum

        files.append(plot_spectrum(roots, region, out / f"{prefix}.png", L.eta))
    return {"files": files, "summary": {"n_roots": len(roots)}}


def cmd_projector(cfg, out: Path, args) -> dict:
    L = _functional(cfg)
    region = _region(cfg, L)
    if region is None:
        raise ConfigError("projector needs a 'region'")
    an = _analysis(cfg, {"root_index"})
    prefix, png, gp = _output(cfg, "projection")
    roots = find_roots(L, region)
    idx = int(an.get("root_index", 0))
    if not 0 <= idx < len(roots):
        raise ConfigError(f"root_index {idx} out of range ({len(roots)} roots found)")
    phi = _history(cfg, L.eta, L.dim)
    alpha = np.asarray(cfg.get("alpha", [0.0] * L.dim), dtype=float)
    if alpha.shape != (L.dim,):
        raise ConfigError(f"alpha must have length {L.dim}")
    psi = projector(L, roots[idx], BoundaryAugmentedState(alpha, phi))
    path = out / f"{prefix}.csv"
    write_history_csv(psi, path)
    files = [path]
    if png:
        from .plotting import plot_history

        files.append(plot_history(psi, out / f"{prefix}.png", depth=20.0))
    root = roots[idx]
    summary = {"lambda0": root.lambda0, "pole_order": root.pole_order, "simple": root.is_simple}
    files.append(write_json(out / f"{prefix}_summary.json", summary))
    return {"files": files, "summary": summary}


def cmd_stability(cfg, out: Path, args) -> dict:
    L = _functional(cfg)
    prefix, _, _ = _output(cfg, "stability")
    verdict = assess_stability(L, _region(cfg, L))
    summary = verdict.to_dict()
    return {"files": [write_json(out / f"{prefix}.json", summary)], "summary": summary}


def cmd_hopf_scan(cfg, out: Path, args) -> dict:
    spec = cfg.get("model")
    if spec is None:
        raise ConfigError("hopf-scan needs a 'model' section naming a family")
    _check_keys(spec, {"name", "params"}, "model")
    try:
        fam = M.get_family(spec["name"])
    except M.UnknownModelError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    params = dict(spec.get("params", {}))
    params.pop(fam.parameter, None)
    an = _analysis(cfg, {"mu_range", "step", "offsets", "T", "h"})
    if "mu_range" not in an:
        raise ConfigError("analysis.mu_range is required")
    prefix, png, gp = _output(cfg, "hopf")
    branch, (record, reason) = hopf_scan(lambda mu: fam.at(mu, **params), an["mu_range"], step=an.get("step"))
    files = [write_csv(out / f"{prefix}_branch.csv", ["mu", "re", "im", "dre_dmu", "dim_dmu"],
                       [[s.mu, s.lam.real, s.lam.imag, s.dlambda_dmu.real, s.dlambda_dmu.imag] for s in branch])]
    if record is None:
        summary = {"hopf": None, "reason": reason}
        files.append(write_json(out / f"{prefix}.json", summary))
        return {"files": files, "summary": summary}
    offsets = an.get("offsets", [])
    if offsets:
        record = verify_hopf_by_simulation(lambda mu: fam.nonlinear_at(mu, **params), record, offsets,
                                           T=an.get("T"), h=an.get("h"))
        rows_path = write_csv(out / f"{prefix}_rows.csv", ["offset", "mu", "period", "amplitude", "flagged"],
                              [[r.offset, r.mu, r.period if r.period is not None else float("nan"),
                                r.amplitude if r.amplitude is not None else float("nan"), int(r.flagged)]
                               for r in record.rows])
        files.append(rows_path)
        if gp:
            files.append(write_gnuplot(out / f"{prefix}_amplitude.gp", rows_path.name, "amplitude^2 vs offset",
                                       "offset", "amplitude^2", [(1, "($4**2)", "amplitude^2")],
                                       image=f"{prefix}_amplitude.png", style="linespoints"))
            files.append(write_gnuplot(out / f"{prefix}_period.gp", rows_path.name, "period vs offset",
                                       "offset", "period", [(1, 3, "period")], image=f"{prefix}_period.png",
                                       style="linespoints"))
        if png:
            from .plotting import plot_hopf

            files.append(plot_hopf(record, out / f"{prefix}.png"))
    summary = {"hopf": record.to_dict(), "reason": ""}
    files.append(write_json(out / f"{prefix}.json", summary))
    return {"files": files, "summary": summary}


def cmd_gauge(cfg, out: Path, args) -> dict:
    an = _analysis(cfg, {"input", "eta", "direction"})
    if "input" not in an or "eta" not in an:
        raise ConfigError("gauge needs analysis.input (history CSV) and analysis.eta")
    prefix, _, _ = _output(cfg, "gauged")
    eta = float(an["eta"])
    direction = an.get("direction", "forward")
    if direction == "forward":
        phi = read_history_csv(an["input"], eta)
        res = gauge_transform(phi)
    elif direction == "inverse":
        phi = read_history_csv(an["input"], 0.0)
        res = inverse_gauge_transform(phi, eta)
    else:
        raise ConfigError("direction must be 'forward' or 'inverse'")
    path = out / f"{prefix}.csv"
    write_history_csv(res, path)
    return {"files": [path], "summary": {"direction": direction, "nodes": int(res.grid.size)}}


def cmd_verify(cfg, out: Path, args) -> dict:
    from .verify import run_suite

    spec = cfg.get("model")
    if spec is None:
        raise ConfigError("verify needs a 'model' section")
    _check_keys(spec, {"name", "params", "equilibrium"}, "model")
    prefix, _, _ = _output(cfg, "verify")
    name = spec["name"]
    model = _model(cfg)
    xbar = _equilibrium(cfg, model)
    L = linearize(model, xbar)
    results = run_suite(L, model, xbar, seed=args.seed, threads=args.threads)
    summary = {"model": name, "seed": args.seed, "passed": all(r["passed"] for r in results), "checks": results}
    files = [write_json(out / f"{prefix}.json", summary)]
    if not summary["passed"]:
        failed = [r["name"] for r in results if not r["passed"]]
        raise SpectralError(f"invariant checks failed: {failed}")
    return {"files": files, "summary": summary}


HANDLERS = {
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "projector": cmd_projector,
    "stability": cmd_stability,
    "hopf-scan": cmd_hopf_scan,
    "gauge": cmd_gauge,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infdelay", description="Infinite-delay equations: simulation, spectra, "
                                "projectors, stability and Hopf scans.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent tasks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        return _fail("UsageError", "--threads must be >= 1", 1)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[args.command](cfg, out, args)
    except (ConfigError, SpecError, M.UnknownModelError, NotImplementedError, FileNotFoundError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except ValueError as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except (SpectralError, NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    for f in result["files"]:
        print(f)
    return 0


def main() -> None:
    sys.exit(run())

