"""Config-driven experiment runner.

Usage::

    doppler-tomo SUBCOMMAND [-c CONFIG] [--set section.key=value ...] [-o DIR]

The configuration is a flat INI file.  Every key has a default (see
``--help``), unknown sections or keys are rejected, and ``--set`` overrides
single keys.  A manifest written by an earlier run can be passed as
``CONFIG`` to repeat that run.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures (no convergence, a degenerate system when injectivity was
required, a failed self-test).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, Degenerate, DopplerError, NoConvergence
from .fields import (
    CovectorField,
    Grid,
    Pair,
    ScalarField,
    SolenoidalProjector,
    divergence,
    gradient,
    poisson_dirichlet,
    random_smooth_covector,
    random_smooth_scalar,
    solenoidal_decompose,
    write_field_csv,
)
from .functions import (
    ConstantFunction,
    CurlCovector,
    GaussianBump,
    GradientCovector,
    LinearCovector,
    PerturbedFunction,
    PolynomialBump,
)
from .geometry import (
    Domain,
    TraceConfig,
    conformal_geodesic,
    magnetic,
    make_fan,
    simplicity_report,
    straight_line,
    trace_curve,
)
from .reconstruct import (
    L2_SURROGATE_NOTE,
    perturbation_study,
    reconstruct,
    spectral_analysis,
    stability_constant,
)
from .transform import (
    assemble_dense,
    get_operator,
    pair_forward,
    read_sinogram_csv,
    symbol_sweep,
    write_sinogram_csv,
)
from .weights import EllipticCheckConfig, Weight, elliptic_margin

log = logging.getLogger("doppler_tomo")

SUBCOMMANDS = (
    "simulate",
    "decompose",
    "check-elliptic",
    "check-simple",
    "symbol",
    "nullspace",
    "reconstruct",
    "perturb",
    "selftest",
)

# section -> key -> (default, help)
DEFAULTS = {
    "domain": {
        "radius_M": (1.0, "radius of the target disk M"),
        "radius_M1": (1.25, "radius of the tracing disk M1 (> radius_M)"),
        "center_x": (0.0, "x coordinate of the common center"),
        "center_y": (0.0, "y coordinate of the common center"),
    },
    "grid": {
        "n": (24, "cells per side of the square covering M1"),
        "mask": ("M", "support of the unknowns: M or M1"),
    },
    "generator": {
        "kind": ("straight", "straight | magnetic | conformal"),
        "b": (0.5, "magnetic field strength (magnetic)"),
        "speed": (1.0, "constant speed lambda (straight, magnetic)"),
        "eps": (0.1, "conformal factor c = 1 + eps * q (conformal)"),
        "bump_x": (0.0, "center x of the Gaussian q (conformal)"),
        "bump_y": (0.0, "center y of the Gaussian q (conformal)"),
        "bump_width": (0.5, "width of the Gaussian q (conformal)"),
    },
    "weight": {
        "kind": ("attenuated", "attenuated | constant | from_covector"),
        "sigma": (1.0, "constant attenuation (attenuated)"),
        "value": (1.0, "constant c, or w0 for from_covector, or overall scale (attenuated)"),
        "h_offset": ("0.5,-0.3", "constant part of h = a + B x (from_covector)"),
        "h_matrix": ("0.0,0.2,-0.1,0.0", "row-major B of h = a + B x (from_covector)"),
    },
    "fan": {
        "n_points": (64, "boundary points on the outer circle"),
        "n_dirs": (24, "inflow directions per boundary point"),
    },
    "trace": {
        "step": (0.0, "RK4 step; 0 means diameter/256"),
        "boundary_tol": (1e-12, "exit-point bisection tolerance"),
        "max_length": (100.0, "curve length budget before a curve counts as trapped"),
        "threads": (1, "worker threads for tracing the fan"),
    },
    "solver": {
        "tol": (1e-6, "relative tolerance of the projected CG solve"),
        "max_iter": (500, "iteration cap of the projected CG solve"),
        "rank_tol": (1e-8, "relative singular value threshold for null directions"),
        "dense_limit": (4000, "largest number of pair unknowns for dense algebra"),
        "n_least": (8, "least singular vectors kept in the nullspace report"),
        "require_injective": (False, "nullspace exits with code 3 on a degenerate system"),
        "sinogram": ("", "reconstruct from this sinogram CSV instead of simulated data"),
    },
    "field": {
        "kind": ("random", "random | gradient | curl | linear | zero"),
        "phi": ("zero", "scalar part of the simulated pair: zero | bump | random"),
        "seed": (0, "seed of the random fields"),
        "cutoff": (6.0, "Gaussian spectral scale of the random fields (radians per unit length)"),
        "bump_radius": (0.8, "radius of the polynomial bump psi"),
        "bump_power": (3, "power of the polynomial bump psi"),
        "bump_x": (0.1, "center x of the bump psi"),
        "bump_y": (-0.05, "center y of the bump psi"),
    },
    "check": {
        "n_samples": (64, "base points of the simplicity sweep"),
        "n_x": (16, "points of the elliptic check"),
        "n_theta": (16, "directions of the elliptic check"),
        "threshold": (1e-6, "elliptic margin threshold"),
        "symbol_n_x": (20, "points of the symbol sweep"),
        "symbol_n_xi": (20, "covector directions of the symbol sweep"),
        "symbol_threshold": (1e-8, "relative eigenvalue threshold of the symbol sweep"),
        "gauge_tol": (1e-2, "bound on max |sinogram| reported by simulate for potential fields"),
    },
    "perturb": {
        "target": ("G", "G | lambda | w"),
        "deltas": ("0.01,0.001", "comma-separated perturbation sizes"),
        "bump_x": (0.2, "center x of the Gaussian direction q"),
        "bump_y": (-0.1, "center y of the Gaussian direction q"),
        "bump_width": (0.4, "width of the Gaussian direction q"),
        "n_curves": (64, "curves compared for the endpoint deviation"),
        "n_iter": (300, "power iterations"),
        "seed": (0, "seed of the power iteration start vector"),
    },
    "output": {
        "dir": ("out", "output directory"),
        "prefix": ("", "prefix for every output file name"),
    },
}

CHOICES = {
    ("grid", "mask"): ("M", "M1"),
    ("generator", "kind"): ("straight", "magnetic", "conformal"),
    ("weight", "kind"): ("attenuated", "constant", "from_covector"),
    ("field", "kind"): ("random", "gradient", "curl", "linear", "zero"),
    ("field", "phi"): ("zero", "bump", "random"),
    ("perturb", "target"): ("G", "lambda", "w"),
}

POSITIVE = {
    ("domain", "radius_M"),
    ("domain", "radius_M1"),
    ("grid", "n"),
    ("generator", "speed"),
    ("generator", "bump_width"),
    ("weight", "value"),
    ("fan", "n_points"),
    ("fan", "n_dirs"),
    ("trace", "boundary_tol"),
    ("trace", "max_length"),
    ("trace", "threads"),
    ("solver", "tol"),
    ("solver", "max_iter"),
    ("solver", "rank_tol"),
    ("solver", "dense_limit"),
    ("solver", "n_least"),
    ("field", "cutoff"),
    ("field", "bump_radius"),
    ("field", "bump_power"),
    ("check", "n_samples"),
    ("check", "threshold"),
    ("check", "symbol_n_x"),
    ("check", "symbol_n_xi"),
    ("check", "symbol_threshold"),
    ("check", "gauge_tol"),
    ("perturb", "bump_width"),
    ("perturb", "n_curves"),
    ("perturb", "n_iter"),
}


# ---- configuration ------------------------------------------------------------------


def _coerce(section, key, raw):
    default = DEFAULTS[section][key][0]
    raw = raw.strip() if isinstance(raw, str) else raw
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return str(raw)


def _floats(text, section, key, count=None):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"[{section}] {key}: expected {count} numbers, got {len(vals)}")
    return vals


def validate(conf):
    for (sec, key), allowed in CHOICES.items():
        if conf[sec][key] not in allowed:
            raise ConfigError(f"[{sec}] {key} must be one of {', '.join(allowed)}, got {conf[sec][key]!r}")
    for sec, key in POSITIVE:
        v = conf[sec][key]
        if not np.isfinite(v) or v <= 0:
            raise ConfigError(f"[{sec}] {key} must be positive, got {v}")
    d = conf["domain"]
    if d["radius_M"] >= d["radius_M1"]:
        raise ConfigError("[domain] radius_M must be smaller than radius_M1")
    if conf["grid"]["n"] < 4:
        raise ConfigError("[grid] n must be at least 4")
    if conf["fan"]["n_points"] < 4 or conf["fan"]["n_dirs"] < 2:
        raise ConfigError("[fan] needs n_points >= 4 and n_dirs >= 2")
    if conf["trace"]["step"] < 0:
        raise ConfigError("[trace] step must be >= 0")
    if conf["check"]["n_x"] < 8 or conf["check"]["n_theta"] < 8:
        raise ConfigError("[check] n_x and n_theta must be at least 8")
    if conf["generator"]["kind"] == "conformal" and not 0 <= abs(conf["generator"]["eps"]) < 1:
        raise ConfigError("[generator] eps must satisfy |eps| < 1 so that c stays positive")
    if conf["weight"]["kind"] == "attenuated" and conf["weight"]["sigma"] < 0:
        raise ConfigError("[weight] sigma must be >= 0")
    _floats(conf["weight"]["h_offset"], "weight", "h_offset", 2)
    _floats(conf["weight"]["h_matrix"], "weight", "h_matrix", 4)
    deltas = _floats(conf["perturb"]["deltas"], "perturb", "deltas")
    if not deltas or any(x < 0 for x in deltas):
        raise ConfigError("[perturb] deltas must be a nonempty list of nonnegative numbers")
    return conf


def load_config(path=None, overrides=()):
    """Resolved configuration as ``{section: {key: value}}`` with defaults filled in."""
    conf = {sec: {k: v[0] for k, v in keys.items()} for sec, keys in DEFAULTS.items()}
    given = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        if p.suffix == ".json":
            try:
                given = json.loads(p.read_text())["config"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path} is not a manifest with a 'config' entry ({exc})") from None
        else:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            try:
                parser.read(p)
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
            given = {s: dict(parser.items(s)) for s in parser.sections()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        given.setdefault(sec, {})[key] = value
    for sec, items in given.items():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in items.items():
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            conf[sec][key] = _coerce(sec, key, raw)
    return validate(conf)


def config_hash(conf):
    """SHA-256 of the resolved configuration; output locations do not count."""
    physical = {k: v for k, v in conf.items() if k != "output"}
    return hashlib.sha256(json.dumps(physical, sort_keys=True).encode()).hexdigest()


def help_epilog():
    lines = ["configuration keys (section.key = default: description):"]
    for sec, keys in DEFAULTS.items():
        lines.append(f"  [{sec}]")
        for key, (default, text) in keys.items():
            lines.append(f"    {sec}.{key} = {default!r}: {text}")
    lines.append("")
    lines.append("exit codes: 0 success, 2 configuration error, 3 numerical failure")
    return "\n".join(lines)


# ---- building objects from the configuration -----------------------------------


def build_domain(conf):
    d = conf["domain"]
    return Domain(d["radius_M"], d["radius_M1"], (d["center_x"], d["center_y"]))


def build_grid(conf, dom):
    mask = None if conf["grid"]["mask"] == "M" else dom.radius_M1
    return Grid(conf["grid"]["n"], dom, mask)


def build_generator(conf, b_override=None, lam_override=None):
    g = conf["generator"]
    speed = g["speed"]

    def lam(x, th):
        return np.full(np.shape(th)[0], speed)

    lam = lam_override or (None if speed == 1.0 else lam)
    if g["kind"] == "straight":
        return straight_line(lam)
    if g["kind"] == "magnetic":
        return magnetic(g["b"] if b_override is None else b_override, lam)
    q = GaussianBump((g["bump_x"], g["bump_y"]), g["bump_width"])
    return conformal_geodesic(q, g["eps"])


def build_weight(conf, sigma_override=None):
    w = conf["weight"]
    if w["kind"] == "constant":
        return Weight.constant(w["value"])
    if w["kind"] == "from_covector":
        a = _floats(w["h_offset"], "weight", "h_offset", 2)
        B = _floats(w["h_matrix"], "weight", "h_matrix", 4)
        return Weight.from_covector(LinearCovector(tuple(a), (tuple(B[:2]), tuple(B[2:]))), w["value"])
    sigma = ConstantFunction(w["sigma"]) if sigma_override is None else sigma_override
    return Weight.attenuated(sigma, scale=w["value"])


def build_trace(conf):
    t = conf["trace"]
    return TraceConfig(step=t["step"] or None, boundary_tol=t["boundary_tol"], max_length=t["max_length"])


def _bump(conf):
    f = conf["field"]
    return PolynomialBump(f["bump_radius"], f["bump_power"], (f["bump_x"], f["bump_y"]))


def build_pair(conf, grid):
    f = conf["field"]
    if f["kind"] == "random":
        cov = random_smooth_covector(grid, f["seed"], f["cutoff"])
    elif f["kind"] == "zero":
        cov = CovectorField.zeros(grid)
    else:
        fn = {
            "gradient": GradientCovector(_bump(conf)),
            "curl": CurlCovector(_bump(conf)),
            "linear": LinearCovector(),
        }[f["kind"]]
        cov = CovectorField.from_function(grid, fn)
    if f["phi"] == "zero":
        phi = ScalarField.zeros(grid)
    elif f["phi"] == "bump":
        phi = ScalarField.from_function(grid, _bump(conf))
    else:
        phi = random_smooth_scalar(grid, f["seed"] + 1, f["cutoff"])
    return Pair(cov, phi)


# ---- output helpers --------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Run:
    def __init__(self, conf, subcommand):
        self.conf = conf
        self.subcommand = subcommand
        self.outdir = Path(conf["output"]["dir"])
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.prefix = conf["output"]["prefix"]
        self.files = []
        self.timings = {}
        self._t = time.perf_counter()

    def path(self, name):
        p = self.outdir / f"{self.prefix}{name}"
        self.files.append(p.name)
        return p

    def lap(self, label):
        now = time.perf_counter()
        self.timings[label] = now - self._t
        self._t = now

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def manifest(self, status, exit_code, summary=None):
        versions = {"python": platform.python_version(), "numpy": np.__version__}
        for pkg in ("scipy", "scikit-learn", "doppler-tomo"):
            try:
                versions[pkg] = metadata.version(pkg)
            except metadata.PackageNotFoundError:
                versions[pkg] = None
        data = {
            "subcommand": self.subcommand,
            "status": status,
            "exit_code": exit_code,
            "config": self.conf,
            "config_hash": config_hash(self.conf),
            "versions": versions,
            "timings": self.timings,
            "outputs": sorted(set(self.files)),
            "summary": summary or {},
        }
        (self.outdir / f"{self.prefix}manifest.json").write_text(
            json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"
        )


# ---- subcommands -------------------------------------------------------------------


def _system(conf):
    dom = build_domain(conf)
    grid = build_grid(conf, dom)
    fan = make_fan(dom, conf["fan"]["n_points"], conf["fan"]["n_dirs"])
    return dom, grid, fan, build_generator(conf), build_weight(conf), build_trace(conf)


def cmd_simulate(run):
    conf = run.conf
    dom, grid, fan, gen, w, cfg = _system(conf)
    pair = build_pair(conf, grid)
    get_operator(gen, w, fan, grid, cfg, conf["trace"]["threads"])
    run.lap("setup")
    s = pair_forward(pair, w, gen, fan, cfg)
    run.lap("forward")
    write_sinogram_csv(s, run.path("sinogram.csv"))
    write_field_csv(pair.f, run.path("f_true.csv"))
    write_field_csv(pair.phi, run.path("phi_true.csv"))
    max_abs = float(np.max(np.abs(s.values)))
    summary = {
        "max_abs": max_abs,
        "norm_mu": s.norm(),
        "n_entries": fan.n_entries,
        "gauge_check": {
            "applies": conf["field"]["kind"] == "gradient" and conf["field"]["phi"] == "zero",
            "tol": conf["check"]["gauge_tol"],
            "below_tol": max_abs <= conf["check"]["gauge_tol"],
        },
    }
    return 0, summary


def cmd_decompose(run):
    conf = run.conf
    dom = build_domain(conf)
    grid = build_grid(conf, dom)
    f = build_pair(conf, grid).f
    fs, phi = solenoidal_decompose(f, solver="direct")
    run.lap("decompose")
    write_field_csv(fs, run.path("f_s.csv"))
    write_field_csv(phi, run.path("phi.csv"))
    dphi = grid.grad_matrix @ phi.dofs()
    fv, sv = f.dofs(), fs.dofs()
    summary = {
        "norm_f": f.norm(),
        "norm_f_s": fs.norm(),
        "norm_dphi": grid.norm(dphi),
        "orthogonality": abs(grid.inner(sv, dphi)) / max(grid.norm(sv) * grid.norm(dphi), 1e-300),
        "pythagoras_defect": abs(grid.norm(fv) ** 2 - grid.norm(sv) ** 2 - grid.norm(dphi) ** 2)
        / max(grid.norm(fv) ** 2, 1e-300),
        "max_abs_div_f_s": float(np.max(np.abs(divergence(fs).dofs()))),
    }
    run.write_json("decompose.json", summary)
    return 0, summary


def cmd_check_elliptic(run):
    conf = run.conf
    dom = build_domain(conf)
    c = conf["check"]
    rep = elliptic_margin(
        build_weight(conf),
        build_generator(conf),
        dom,
        EllipticCheckConfig(n_x=c["n_x"], n_theta=c["n_theta"], threshold=c["threshold"]),
        build_trace(conf),
    )
    run.lap("check")
    out = rep.to_dict()
    run.write_json("elliptic.json", out)
    return 0, out


def cmd_check_simple(run):
    conf = run.conf
    rep = simplicity_report(build_generator(conf), build_domain(conf), conf["check"]["n_samples"], build_trace(conf))
    run.lap("check")
    out = rep.to_dict()
    run.write_json("simplicity.json", out)
    return 0, out


def cmd_symbol(run):
    conf = run.conf
    c = conf["check"]
    rep = symbol_sweep(
        build_weight(conf),
        build_generator(conf),
        build_domain(conf),
        c["symbol_n_x"],
        c["symbol_n_xi"],
        threshold=c["symbol_threshold"],
        cfg=build_trace(conf),
    )
    run.lap("sweep")
    out = rep.to_dict()
    run.write_json("symbol.json", out)
    return 0, out


def cmd_nullspace(run):
    conf = run.conf
    s = conf["solver"]
    dom, grid, fan, gen, w, cfg = _system(conf)
    op = assemble_dense(w, gen, fan, grid, cfg, dense_limit=s["dense_limit"])
    run.lap("assemble")
    rep = spectral_analysis(op, grid, rank_tol=s["rank_tol"], n_least=s["n_least"], dense_limit=s["dense_limit"])
    run.lap("svd")
    out = rep.to_dict()
    out["note"] = L2_SURROGATE_NOTE
    code = 0
    try:
        stability_constant(rep)
        out["degenerate"] = False
    except Degenerate as exc:
        out["degenerate"] = True
        out["degenerate_message"] = str(exc)
        if s["require_injective"]:
            code = 3
    run.write_json("nullspace.json", out)
    return code, {k: out[k] for k in ("null_dim", "null_dim_raw", "sigma_min_solenoidal", "C_discrete", "degenerate")}


def cmd_reconstruct(run):
    conf = run.conf
    s = conf["solver"]
    dom, grid, fan, gen, w, cfg = _system(conf)
    truth = None
    if s["sinogram"]:
        sino = read_sinogram_csv(s["sinogram"], fan)
    else:
        truth = build_pair(conf, grid)
        sino = pair_forward(truth, w, gen, fan, cfg)
    run.lap("data")
    res = reconstruct(sino, w, gen, fan, grid, tol=s["tol"], max_iter=s["max_iter"], truth=truth, cfg=cfg)
    run.lap("solve")
    write_field_csv(res.f_s, run.path("f_s_rec.csv"))
    write_field_csv(res.phi, run.path("phi_rec.csv"))
    out = res.to_dict()
    run.write_json("reconstruct.json", out)
    return 0, {k: out[k] for k in ("iterations", "final_residual", "converged", "errors")}


def cmd_perturb(run):
    conf = run.conf
    p = conf["perturb"]
    dom, grid, fan, gen0, w0, cfg = _system(conf)
    q = GaussianBump((p["bump_x"], p["bump_y"]), p["bump_width"])
    target = p["target"]
    if target == "G" and conf["generator"]["kind"] != "magnetic":
        raise ConfigError("[perturb] target=G perturbs the magnetic strength; set generator.kind=magnetic")
    if target == "w" and conf["weight"]["kind"] != "attenuated":
        raise ConfigError("[perturb] target=w perturbs the attenuation; set weight.kind=attenuated")

    def make_system(d):
        if target == "G":
            return build_generator(conf, b_override=PerturbedFunction(ConstantFunction(conf["generator"]["b"]), q, d)), w0
        if target == "lambda":
            lam_fn = PerturbedFunction(ConstantFunction(conf["generator"]["speed"]), q, d)
            return build_generator(conf, lam_override=lambda x, th: lam_fn(x)), w0
        sigma = PerturbedFunction(ConstantFunction(conf["weight"]["sigma"]), q, d)
        return gen0, build_weight(conf, sigma_override=sigma)

    rep = perturbation_study(
        make_system,
        _floats(p["deltas"], "perturb", "deltas"),
        grid,
        fan,
        direction=q,
        kind=target,
        cfg=cfg,
        n_curves=p["n_curves"],
        n_iter=p["n_iter"],
        seed=p["seed"],
    )
    run.lap("study")
    out = rep.to_dict()
    run.write_json("perturb.json", out)
    return 0, out


def selftest_checks():
    """Quick checks with exactly known answers; yields ``(name, passed, detail)``."""
    dom = Domain()
    c = trace_curve(straight_line(), dom, [-1.25, 0.0], [1.0, 0.0])
    end = c.x[-1]
    yield "straight line exits opposite", bool(np.allclose(end, [1.25, 0.0], atol=1e-9)), end.tolist()
    fan = make_fan(dom, 4, 2)
    yield "fan counting", fan.n_entries == 8 and bool(np.all(fan.mu > 0)), fan.n_entries
    g = Grid(16, dom)
    f = CovectorField.from_function(g, lambda x: np.column_stack([x[:, 0], x[:, 1]]))
    d = divergence(f).dofs()
    yield "divergence of (x1, x2) is 2", bool(np.max(np.abs(d - 2.0)) < 1e-10), float(np.max(np.abs(d - 2.0)))
    lin = ScalarField.from_function(g, lambda x: x[:, 0], region=None)
    gr = gradient(lin)
    err = max(np.max(np.abs(gr.e1 - 1.0)), np.max(np.abs(gr.e2)))
    yield "gradient of x1 is (1, 0)", bool(err < 1e-12), float(err)
    z = poisson_dirichlet(ScalarField.zeros(g))
    yield "zero Poisson data gives zero", bool(np.all(z.values == 0.0)), None
    rep = elliptic_margin(Weight.attenuated(1.0), straight_line(), dom)
    yield "attenuated margin is 2", bool(abs(rep.min_margin - 2.0) < 1e-6), rep.min_margin
    g12 = Grid(12, dom)
    fan12 = make_fan(dom, 32, 12)
    sr = spectral_analysis(assemble_dense(Weight.constant(1.0), straight_line(), fan12, g12), g12)
    yield "constant weight has a kernel", sr.null_dim > 0, sr.null_dim
    P = SolenoidalProjector(g)
    v = random_smooth_covector(g, 3).dofs()
    once = P.project(v)
    twice = P.project(once)
    rel = float(np.linalg.norm(twice - once) / np.linalg.norm(once))
    yield "projection is idempotent", rel <= 1e-10, rel


def cmd_selftest(run):
    results = []
    for name, ok, detail in selftest_checks():
        results.append({"check": name, "passed": bool(ok), "detail": detail})
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    run.lap("selftest")
    run.write_json("selftest.json", results)
    failed = [r["check"] for r in results if not r["passed"]]
    return (3 if failed else 0), {"n_checks": len(results), "failed": failed}


COMMANDS = {
    "simulate": cmd_simulate,
    "decompose": cmd_decompose,
    "check-elliptic": cmd_check_elliptic,
    "check-simple": cmd_check_simple,
    "symbol": cmd_symbol,
    "nullspace": cmd_nullspace,
    "reconstruct": cmd_reconstruct,
    "perturb": cmd_perturb,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="doppler-tomo",
        description="Weighted Doppler transforms of covector fields along curve families on a disk.",
        epilog=help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("-c", "--config", help="INI config file or a manifest.json from an earlier run")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one key")
    parser.add_argument("-o", "--output-dir", help="shortcut for --set output.dir=DIR")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.set)
    if args.output_dir:
        overrides.append(f"output.dir={args.output_dir}")
    try:
        conf = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run = Run(conf, args.subcommand)
    try:
        code, summary = COMMANDS[args.subcommand](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        run.manifest("config_error", 2, {"error": str(exc)})
        return 2
    except (NoConvergence, Degenerate) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        run.manifest("numerical_failure", 3, {"error": f"{type(exc).__name__}: {exc}"})
        return 3
    except (DopplerError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        run.manifest("numerical_failure", 3, {"error": f"{type(exc).__name__}: {exc}"})
        return 3
    run.manifest("ok" if code == 0 else "failed", code, summary)
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
