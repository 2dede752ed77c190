"""Command line front end: ``lrlab <subcommand> <config-file>``.

The config file holds one ``key = value`` per line; ``#`` starts a comment.
Keys not used by the subcommand are rejected.  Output goes to the path in
``output`` (stdout if absent); the config is echoed into the meta block, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, csvio
from . import cluster as cl
from . import geometry as geo
from .covariance import decompose
from .errors import ConfigError, DomainError, LabError
from .flow import (FlowParams, coefficients_for, gamma_target, nu_eigenvalue_and_gamma,
                   predict_two_point, run_flow, tune_critical_nu)
from .jets import NAMES, Jet
from .lattice import LatticeSpec, fit_power_law, resolvent, torus_frac_laplacian
from .wsaw import RNG_FAMILY, MCConfig, two_point_profile

REQUIRED = object()


# --------------------------------------------------------------------------- value parsers

def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(t) for t in s.replace(" ", "").split(",") if t)


def _g0(s: str):
    return "sbar" if s.strip().lower() == "sbar" else float(s)


def _nu0(s: str):
    return None if s.strip().lower() in ("tuned", "auto") else float(s)


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    return parse


SPEC_KEYS = {"d": (int, REQUIRED), "L": (int, REQUIRED), "N": (int, REQUIRED),
             "alpha": (float, REQUIRED)}
FLOW_KEYS = {**SPEC_KEYS, "m2": (float, 0.0), "n": (int, REQUIRED), "g0": (_g0, REQUIRED),
             "backend": (_choice("heat", "torus"), "heat"), "second_order": (_bool, True),
             "tau": (float, 1e-6)}
OUT = {"output": (str, None)}

SCHEMAS = {
    "kernel": {**SPEC_KEYS, **OUT, "m2": (float, 0.0),
               "kind": (_choice("laplacian", "resolvent"), "laplacian")},
    "decompose": {**SPEC_KEYS, "output": (str, REQUIRED), "m2": (float, 0.0), "tau": (float, 1e-6)},
    "flow": {**FLOW_KEYS, **OUT, "nu0": (_nu0, None), "a": (_ints, None), "b": (_ints, None)},
    "tune": {**FLOW_KEYS, **OUT},
    "predict": {**FLOW_KEYS, **OUT, "nu0": (_nu0, None), "a": (_ints, None),
                "b": (_ints, None), "radii": (_ints, None)},
    "gamma": {**SPEC_KEYS, **OUT, "m2": (float, 0.0), "n": (_ints, REQUIRED),
              "g0": (_g0, "sbar"), "backend": (_choice("heat", "torus"), "heat"),
              "second_order": (_bool, True), "tau": (float, 1e-6)},
    "cluster": {"d": (int, 1), "L": (int, REQUIRED), "N": (int, REQUIRED), "alpha": (float, 1.0),
                "j": (int, 0), "activity": (str, REQUIRED), "n_max": (int, 6),
                "threshold": (float, 1.0), **OUT},
    "mc": {**SPEC_KEYS, **OUT, "g": (float, 0.0), "nu": (float, REQUIRED),
           "samples": (int, REQUIRED), "seed": (int, 0), "radii": (_ints, (1, 2, 4, 8))},
    "fit": {"input": (str, REQUIRED), "x": (str, "r"), "y": (str, "G_pred"),
            "rmin": (float, -math.inf), "rmax": (float, math.inf), **OUT},
}


@dataclass
class RunConfig:
    command: str
    values: dict
    lines: list        # raw config lines, echoed into the output

    def __getitem__(self, k):
        return self.values[k]

    def spec(self) -> LatticeSpec:
        return LatticeSpec(self["d"], self["L"], self["N"], self["alpha"])


def parse_config(command: str, text: str) -> RunConfig:
    if command not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {command!r}")
    schema = SCHEMAS[command]
    raw: dict = {}
    for no, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {no}: expected 'key = value'")
        key, val = (t.strip() for t in body.split("=", 1))
        if key not in schema:
            raise ConfigError(f"line {no}: unknown key {key!r} for {command}")
        if key in raw:
            raise ConfigError(f"line {no}: duplicate key {key!r}")
        parser = schema[key][0]
        try:
            raw[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {no}: bad value for {key}: {exc}") from None
    values = {}
    for key, (_, default) in schema.items():
        if key in raw:
            values[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r} for {command}")
        else:
            values[key] = default
    return RunConfig(command, values, text.splitlines())


# --------------------------------------------------------------------------- subcommands

def _meta(cfg: RunConfig, extra=None):
    return csvio.meta_lines(cfg.command, cfg.lines, extra)


def _site(spec, v, default=0):
    if v is None:
        return (default,) * spec.d
    if len(v) != spec.d:
        raise ConfigError(f"site {v} does not have {spec.d} coordinates")
    return tuple(v)


def cmd_kernel(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    if cfg["kind"] == "laplacian":
        k = torus_frac_laplacian(spec)
    else:
        k = resolvent(spec, cfg["m2"])
    return {cfg["output"]: csvio.kernel_text(k, _meta(cfg))}


def cmd_decompose(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    dec = decompose(spec, cfg["m2"], cfg["tau"])
    out = Path(cfg["output"])
    files = {str(out): csvio.table_text(["j", "t_lo", "t_hi", "range", "max_amp", "trunc_mass"],
                                        dec.manifest(), _meta(cfg))}
    for j in range(1, spec.N + 1):
        path = out.with_name(f"{out.stem}_C{j}{out.suffix or '.csv'}")
        files[str(path)] = csvio.kernel_text(dec.slice(j), _meta(cfg, {"slice": j}))
    return files


def _params(cfg: RunConfig, a=None, b=None) -> tuple:
    spec = cfg.spec()
    a = _site(spec, a if a is not None else cfg.values.get("a"))
    b = _site(spec, b if b is not None else cfg.values.get("b"), default=1)
    probe = FlowParams(cfg["n"], spec, cfg["m2"], a, b, 0.0, backend=cfg["backend"], tau=cfg["tau"],
                       second_order=cfg["second_order"])
    coeffs = coefficients_for(probe)
    g0 = coeffs.s_bar(cfg["n"]) if cfg["g0"] == "sbar" else cfg["g0"]
    return coeffs, FlowParams(cfg["n"], spec, cfg["m2"], a, b, g0, cfg.values.get("nu0"),
                              cfg["second_order"], cfg["backend"], cfg["tau"])


def cmd_flow(cfg: RunConfig) -> dict:
    coeffs, p = _params(cfg)
    nu0 = p.nu0 if p.nu0 is not None else tune_critical_nu(coeffs, p.n, p.g0, p.second_order)
    traj = run_flow(coeffs, p.n, p.g0, nu0, p.separation, p.second_order)
    cols = ["j", "g", "nu", "u", "lambda_a", "lambda_b", "q_a", "q_b", "g_hat", "C_diag", "C_ab", "w1"]
    return {cfg["output"]: csvio.table_text(cols, traj.rows(), _meta(cfg, {"g0": csvio.fmt(p.g0),
                                                                         "nu0": csvio.fmt(nu0)}))}


def cmd_tune(cfg: RunConfig) -> dict:
    coeffs, p = _params(cfg)
    nu0c = tune_critical_nu(coeffs, p.n, p.g0, p.second_order)
    row = (p.n, p.g0, coeffs.s_bar(p.n), nu0c)
    return {cfg["output"]: csvio.table_text(["n", "g0", "s_bar", "nu0c"], [row], _meta(cfg))}


def cmd_predict(cfg: RunConfig) -> dict:
    coeffs, p = _params(cfg)
    nu0 = p.nu0 if p.nu0 is not None else tune_critical_nu(coeffs, p.n, p.g0, p.second_order)
    a = p.a
    if cfg["radii"] is not None:
        targets = [(r, (a[0] + r,) + tuple(a[1:])) for r in cfg["radii"]]
    else:
        r = math.dist(a, p.b)
        targets = [(r, p.b)]
    rows = []
    for r, b in targets:
        pp = FlowParams(p.n, p.spec, p.m2, a, b, p.g0, nu0, p.second_order, p.backend, p.tau)
        G, _ = predict_two_point(pp, coeffs, nu0)
        C = coeffs.free_two_point(pp.separation)
        rows.append((r, G, C, G / C))
    return {cfg["output"]: csvio.table_text(["r", "G_pred", "C_free", "ratio"], rows,
                                            _meta(cfg, {"g0": csvio.fmt(p.g0), "nu0": csvio.fmt(nu0)}))}


def cmd_gamma(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    rows = []
    for n in cfg["n"]:
        probe = FlowParams(n, spec, cfg["m2"], (0,) * spec.d, (1,) + (0,) * (spec.d - 1), 0.0,
                           backend=cfg["backend"], tau=cfg["tau"])
        coeffs = coefficients_for(probe)
        g0 = coeffs.s_bar(n) if cfg["g0"] == "sbar" else cfg["g0"]
        res = nu_eigenvalue_and_gamma(coeffs, n, g0, second_order=cfg["second_order"])
        rows.append((n, g0, res.nu0c, res.Lambda_nu, res.gamma_eff,
                     gamma_target(n, spec.epsilon, spec.alpha)))
    cols = ["n", "g0", "nu0c", "Lambda_nu", "gamma_eff", "gamma_target"]
    return {cfg["output"]: csvio.table_text(cols, rows, _meta(cfg))}


def parse_anchor_list(spec: LatticeSpec, j: int, text: str) -> geo.Polymer:
    """``0;2`` (d=1) or ``0:0;0:2`` (d=2): block anchors, multiples of L^j."""
    side = spec.L ** j
    idx = []
    for item in text.split(";"):
        coords = tuple(int(c) for c in item.split(":"))
        if len(coords) != spec.d:
            raise ConfigError(f"anchor {item!r} is not {spec.d}-dimensional")
        if any(c % side for c in coords):
            raise ConfigError(f"anchor {item!r} is not a {j}-block corner")
        idx.append(tuple(c // side for c in coords))
    return geo.Polymer.of(spec, j, idx)


def load_activity(path: str, spec: LatticeSpec, j: int) -> cl.ClusterActivity:
    data = csvio.read_csv(path)
    need = ["polymer_anchor_list", "coefficient_name", "value"]
    if data.columns != need:
        raise ConfigError(f"activity table must have columns {','.join(need)}")
    coeffs: dict = {}
    for r in data.rows:
        X = parse_anchor_list(spec, j, str(r[0]))
        name = str(r[1])
        if name not in NAMES:
            raise ConfigError(f"unknown coefficient {name!r}")
        coeffs.setdefault(X, {})[name] = float(r[2])
    jet_mode = any(set(v) - {"1"} for v in coeffs.values())
    vals = {X: (Jet.from_dict(v) if jet_mode else v.get("1", 0.0)) for X, v in coeffs.items()}
    return cl.ClusterActivity(spec, j, vals)


def cmd_cluster(cfg: RunConfig) -> dict:
    spec = LatticeSpec(cfg["d"], cfg["L"], cfg["N"], cfg["alpha"])
    act = load_activity(cfg["activity"], spec, cfg["j"])
    series = cl.log_partition(act, cfg["n_max"])
    conv = cl.convergence_check(act, cfg["threshold"])
    rows = []
    value = series.value
    if isinstance(value, Jet):
        rows += [("log_z", name, c) for name, c in zip(NAMES, value.c)]
    else:
        rows.append(("log_z", "1", float(value)))
    rows.append(("tail_estimate", "", series.tail_estimate))
    side = spec.L ** cfg["j"]
    for b, v in conv.per_block.items():
        key = ":".join(str(c * side) for c in b)
        rows.append(("convergence", key, v))
        rows.append(("convergence_ok", key, int(conv.ok[b])))
    return {cfg["output"]: csvio.table_text(["quantity", "key", "value"], rows, _meta(cfg))}


def cmd_mc(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    mcc = MCConfig(spec, cfg["g"], cfg["nu"], cfg["samples"], cfg["seed"])
    res = two_point_profile(mcc, cfg["radii"])
    rows = [(r, e.mean, e.stderr, e.n, res.wrap_fraction) for r, e in zip(cfg["radii"], res.two_point)]
    extra = {"seed": cfg["seed"], "rng": RNG_FAMILY,
             "susceptibility": f"{res.susceptibility.mean!r} +- {res.susceptibility.stderr!r}"}
    return {cfg["output"]: csvio.table_text(["r", "G_hat", "stderr", "n_samples", "wrap_fraction"],
                                            rows, _meta(cfg, extra))}


def cmd_fit(cfg: RunConfig) -> dict:
    data = csvio.read_csv(cfg["input"])
    for col in (cfg["x"], cfg["y"]):
        if col not in data.columns:
            raise ConfigError(f"column {col!r} not in {cfg['input']}")
    x, y = data.column(cfg["x"]), data.column(cfg["y"])
    sel = (x >= cfg["rmin"]) & (x <= cfg["rmax"])
    fit = fit_power_law(x[sel], y[sel])
    row = (fit.slope, fit.intercept, fit.r_squared, int(sel.sum()))
    return {cfg["output"]: csvio.table_text(["slope", "intercept", "r_squared", "n_points"], [row],
                                            _meta(cfg))}


COMMANDS = {"kernel": cmd_kernel, "decompose": cmd_decompose, "flow": cmd_flow, "tune": cmd_tune,
            "predict": cmd_predict, "gamma": cmd_gamma, "cluster": cmd_cluster, "mc": cmd_mc,
            "fit": cmd_fit}


def run(command: str, config_text: str) -> dict:
    """Execute a subcommand; returns {path or None: file text} without writing."""
    cfg = parse_config(command, config_text)
    return COMMANDS[command](cfg)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lrlab", description="long-range O(n) numerical laboratory")
    ap.add_argument("--version", action="version", version=f"lrlab {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="key = value config file")
    args = ap.parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        files = run(args.command, text)
        for path, body in files.items():
            if path is None:
                sys.stdout.write(body)
            else:
                Path(path).write_text(body, encoding="utf-8")
    except LabError as exc:
        print(f"lrlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        # reader went away (e.g. `| head`); stop quietly like other unix tools
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except MemoryError as exc:
        print(f"lrlab {args.command}: out of memory: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"lrlab {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError) as exc:
        print(f"lrlab {args.command}: numerical error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
