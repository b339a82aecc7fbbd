"""Command-line interface: ``gfrac <subcommand> [options]``.

Subcommands: ml, relax, ode, solve, subordinate, verify.  Options may also
come from a JSON file given with ``--config``; flags given explicitly
override the file.  Keys in the file use the option names with dashes or
underscores (``t-min`` or ``t_min``).

Exit codes: 0 on success, 1 when a verification fails or the numerics break
down, 2 on usage or configuration errors.  Output files are staged and only
renamed into place once every file of the run has been produced, so a failed
run leaves no files behind.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .cauchy import (
    BoxGrid,
    GridField,
    decay_exponent_fit,
    gaussian,
    single_mode,
    solve_homogeneous,
    solve_with_source,
    verify_homogeneous_estimates,
    verify_positivity,
    verify_source_estimates,
)
from .errors import DomainError, GfracError, ShapeError
from .gode import (
    TimeGrid,
    cross_oracle_check,
    repr_with_error,
    solve_inhomogeneous_stepper,
    verify_cross_oracle,
)
from .kernels import Kernel, PowerLaw, check_conditions, parse_kernel
from .mittag_leffler import ml_with_error
from .relaxation import (
    check_complete_monotonicity,
    check_relax_bounds,
    log_grid,
    relax_many,
    relaxation_curve,
)
from .report import VerificationReport, merge, render, skipped_check, upper_bound_check
from .subordination import (
    compare_sampler_to_solver,
    sample_positions,
    subordination_density,
    verify_subordination,
)

__all__ = ["main", "run", "RunConfig", "ConfigError", "load_config", "verify_suite", "SUITES"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUITES = ("default", "extended")
REFERENCE_LAMBDAS = (0.5, 2.0, 10.0)


class ConfigError(GfracError):
    """Invalid command-line or configuration-file input."""


# ---------------------------------------------------------------- parsing

def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("1", "true", "yes"):
        return True
    if isinstance(v, str) and v.lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# dest: (type converter, default); None default marks a required option
_OPTIONS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "ml": {
        "alpha": (float, None),
        "beta": (float, 1.0),
        "z": (_float_list, None),
    },
    "relax": {
        "kernel": (str, None),
        "lambda": (float, None),
        "t_min": (float, 1e-2),
        "t_max": (float, 1e2),
        "t_points": (int, 64),
        "verify": (_as_bool, False),
    },
    "ode": {
        "kernel": (str, None),
        "lambda": (float, None),
        "w0": (float, 0.0),
        "forcing": (str, "zero"),
        "h": (float, 2.0**-10),
        "steps": (int, 1024),
        "verify": (_as_bool, False),
    },
    "solve": {
        "kernel": (str, None),
        "dim": (int, 1),
        "box_L": (float, 20.0),
        "grid_M": (int, 128),
        "initial": (str, "gaussian:1"),
        "source": (str, "zero"),
        "times": (_float_list, [0.1, 1.0]),
        "source_steps": (int, 256),
    },
    "subordinate": {
        "kernel": (str, None),
        "t": (float, 1.0),
        "tau_points": (int, 1024),
        "samples": (int, 10_000),
        "seed": (int, 0),
        "dim": (int, 1),
    },
    "verify": {
        "kernel": (str, None),
        "suite": (str, "default"),
        "seed": (int, 0),
    },
}

_HELP = {
    "ml": "evaluate the Mittag-Leffler function E_{alpha,beta}(z)",
    "relax": "tabulate the relaxation function Y(t, lambda)",
    "ode": "solve D_k w + lambda w = f by representation and by stepping",
    "solve": "solve D_k u = Laplace(u) + h on a periodic box",
    "subordinate": "subordination density and Monte-Carlo samples",
    "verify": "run a verification suite",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gfrac", description="General time-fractional diffusion toolkit.")
    p.add_argument("--version", action="version", version=f"gfrac {__version__}")
    sub = p.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True
    for name, opts in _OPTIONS.items():
        sp = sub.add_parser(name, help=_HELP[name], description=_HELP[name],
                            argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON file with option values")
        if name != "ml":
            sp.add_argument("--out", help="output directory (default: .)")
            sp.add_argument("--threads", help="worker cap (default: $GF_THREADS or 1)")
        for dest in opts:
            flag = "--" + dest.replace("_", "-")
            if opts[dest][0] is _as_bool:
                sp.add_argument(flag, dest=dest, action="store_const", const=True)
            else:
                sp.add_argument(flag, dest=dest)
    return p


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict[str, Any]
    kernel: Kernel | None = None
    out_dir: Path = Path(".")
    seed: int = 0
    threads: int = 1


def _read_config_file(path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("GF_THREADS", "1")
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"threads must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"threads must be a positive integer, got {n}")
    return n


_NEGATIVE = re.compile(r"^-(\d|\.\d|inf|nan)", re.IGNORECASE)


def _join_negative_values(argv):
    """Attach values such as ``-1,0,1`` to their flag, which argparse would not."""
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def load_config(argv) -> RunConfig:
    """Parse arguments and merge them over an optional config file."""
    ns = vars(_build_parser().parse_args(_join_negative_values(list(argv))))
    name = ns.pop("subcommand")
    merged: dict[str, Any] = {}
    if "config" in ns:
        merged.update(_read_config_file(ns.pop("config")))
    merged.update(ns)
    out_dir = Path(merged.pop("out", "."))
    threads = _threads(merged.pop("threads", None))
    opts = _OPTIONS[name]
    unknown = sorted(set(merged) - set(opts))
    if unknown:
        raise ConfigError(f"unknown option(s) for {name}: {', '.join(unknown)}")
    params = {}
    for dest, (conv, default) in opts.items():
        if dest in merged:
            try:
                params[dest] = conv(merged[dest])
            except (TypeError, ValueError):
                raise ConfigError(f"invalid value for --{dest.replace('_', '-')}: "
                                  f"{merged[dest]!r}") from None
        elif default is None:
            raise ConfigError(f"missing required option --{dest.replace('_', '-')}")
        else:
            params[dest] = default
    kernel = None
    if "kernel" in params:
        spec = merged["kernel"]
        try:
            kernel = parse_kernel(spec)
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"invalid kernel: {exc}") from None
        params["kernel"] = kernel.describe()
    cfg = RunConfig(name, params, kernel, out_dir, int(params.get("seed", 0)), threads)
    _validate(cfg)
    return cfg


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _finite(x):
    return isinstance(x, (int, float)) and math.isfinite(x)


def _parse_field_spec(text: str, grid: BoxGrid, what: str) -> GridField | None:
    kind, _, rest = text.partition(":")
    try:
        if kind == "zero" and not rest:
            return None
        if kind == "gaussian":
            sigma = float(rest)
            if not (sigma > 0 and math.isfinite(sigma)):
                raise ValueError
            return gaussian(grid, sigma)
        if kind == "mode":
            ks = [int(k) for k in rest.split(",")]
            return single_mode(grid, ks)
    except (ValueError, ShapeError):
        pass
    raise ConfigError(f"invalid {what} spec {text!r}; expected gaussian:sigma, "
                      f"mode:k1[,k2[,k3]] with one wave number per dimension, or zero")


def _parse_forcing(text: str):
    kind, _, rest = text.partition(":")
    try:
        if kind == "zero" and not rest:
            return None
        if kind == "const":
            c = float(rest)
            return lambda x: np.full(np.shape(x), c)
        if kind == "poly":
            cs = [float(v) for v in rest.split(",")]
            if cs and all(math.isfinite(v) for v in cs):
                return lambda x: np.polyval(cs[::-1], x)
        if kind == "sin":
            om = float(rest)
            if math.isfinite(om):
                return lambda x: np.sin(om * np.asarray(x))
    except ValueError:
        pass
    raise ConfigError(f"invalid forcing spec {text!r}; expected zero, const:c, "
                      f"poly:c0,c1,... or sin:omega")


def _validate(cfg: RunConfig) -> None:
    """Check every numeric precondition before any computation starts."""
    p = cfg.params
    name = cfg.subcommand
    if name == "ml":
        _require(_finite(p["alpha"]) and 0 < p["alpha"] <= 1, "--alpha must lie in (0, 1]")
        _require(_finite(p["beta"]) and p["beta"] > 0, "--beta must be positive")
        _require(p["z"] and all(_finite(z) for z in p["z"]), "--z must be finite numbers")
    elif name == "relax":
        _require(_finite(p["lambda"]) and p["lambda"] >= 0, "--lambda must be >= 0")
        _require(_finite(p["t_min"]) and _finite(p["t_max"]) and 0 < p["t_min"] < p["t_max"],
                 "need 0 < --t-min < --t-max")
        _require(p["t_points"] >= 2, "--t-points must be at least 2")
    elif name == "ode":
        _require(_finite(p["lambda"]) and p["lambda"] > 0,
                 "--lambda must be > 0 (the representation divides by lambda)")
        _require(_finite(p["w0"]), "--w0 must be finite")
        _require(_finite(p["h"]) and p["h"] > 0, "--h must be positive")
        _require(p["steps"] >= 4 and p["steps"] % 2 == 0, "--steps must be even and >= 4")
        _parse_forcing(p["forcing"])
    elif name == "solve":
        _require(p["dim"] in (1, 2, 3), "--dim must be 1, 2 or 3")
        _require(_finite(p["box_L"]) and p["box_L"] > 0, "--box-L must be positive")
        M = p["grid_M"]
        _require(M >= 8 and M & (M - 1) == 0, "--grid-M must be a power of two >= 8")
        _require(p["times"] and all(_finite(t) and t > 0 for t in p["times"]),
                 "--times must be positive")
        _require(p["source_steps"] >= 4 and p["source_steps"] % 2 == 0,
                 "--source-steps must be even and >= 4")
        grid = BoxGrid(p["dim"], p["box_L"], 8)
        _parse_field_spec(p["initial"], grid, "initial")
        _parse_field_spec(p["source"], grid, "source")
    elif name == "subordinate":
        _require(_finite(p["t"]) and p["t"] > 0, "--t must be positive")
        _require(p["tau_points"] >= 16, "--tau-points must be at least 16")
        _require(p["samples"] >= 1, "--samples must be at least 1")
        _require(p["dim"] in (1, 2, 3), "--dim must be 1, 2 or 3")
        _require(p["seed"] >= 0, "--seed must be non-negative")
    elif name == "verify":
        _require(p["suite"] in SUITES, f"unknown suite {p['suite']!r}; choose from {SUITES}")
        _require(p["seed"] >= 0, "--seed must be non-negative")


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    # shortest round-trip representation
    return repr(float(x))


def _csv(header, columns) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    for row in zip(*cols):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue().encode()


def write_outputs(out_dir: Path, files: dict[str, bytes]) -> None:
    """Write every file to a temporary name first, then rename all of them."""
    if not files:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, data in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, out_dir / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)


def _metadata(cfg: RunConfig, **extra) -> dict[str, Any]:
    meta = {"tool_version": __version__, "subcommand": cfg.subcommand,
            "config": dict(sorted(cfg.params.items()))}
    meta.update(extra)
    return meta


@dataclass
class _Result:
    files: dict[str, bytes] = field(default_factory=dict)
    report: VerificationReport | None = None
    stdout: str = ""


# ---------------------------------------------------------------- subcommands

def _run_ml(cfg):
    p = cfg.params
    lines = []
    for z in p["z"]:
        v, e = ml_with_error(p["alpha"], p["beta"], z)
        lines.append(json.dumps({"alpha": p["alpha"], "beta": p["beta"], "z": z,
                                 "value": v, "error_estimate": e}, sort_keys=True))
    return _Result(stdout="\n".join(lines) + "\n")


def _run_relax(cfg):
    p = cfg.params
    t = log_grid(p["t_min"], p["t_max"], p["t_points"])
    Y, err = relax_many(cfg.kernel, [p["lambda"]], t)
    res = _Result({"relax.csv": _csv(("t", "Y", "error_estimate"), (t, Y[:, 0], err[:, 0]))})
    if p["verify"]:
        curve = relaxation_curve(cfg.kernel, p["lambda"], t)
        rep = merge([check_relax_bounds(cfg.kernel, p["lambda"], t),
                     check_complete_monotonicity(curve)])
        res.report = VerificationReport(rep.checks, _metadata(cfg))
        res.files["relax.report.json"] = render(res.report)
    return res


def _run_ode(cfg):
    p = cfg.params
    grid = TimeGrid(p["h"], p["steps"])
    f = _parse_forcing(p["forcing"])
    lam, w0 = p["lambda"], p["w0"]
    fz = f if f is not None else (lambda x: np.zeros(np.shape(x)))
    w_repr, _ = repr_with_error(cfg.kernel, lam, fz, grid)
    if w0 != 0.0:
        # linearity: the data contributes w0 Y(t, lam)
        Y, _ = relax_many(cfg.kernel, [lam], grid.nodes[1:])
        w_repr = w_repr + w0 * np.concatenate([[1.0], Y[:, 0]])
    w_step = solve_inhomogeneous_stepper(cfg.kernel, lam, f, w0, grid)
    res = _Result({"ode.csv": _csv(("t", "w_repr", "w_step", "abs_diff"),
                                   (grid.nodes, w_repr, w_step, np.abs(w_repr - w_step)))})
    if p["verify"]:
        if w0 == 0.0:
            checks = (cross_oracle_check(cfg.kernel, lam, fz, grid, "cross-oracle", 1e-3),)
        else:
            checks = (skipped_check("cross-oracle", "representation vs stepper",
                                    "the cross-oracle check takes zero data"),)
        res.report = VerificationReport(checks, _metadata(cfg))
        res.files["ode.report.json"] = render(res.report)
    return res


def _run_solve(cfg):
    p = cfg.params
    grid = BoxGrid(p["dim"], p["box_L"], p["grid_M"])
    u0 = _parse_field_spec(p["initial"], grid, "initial")
    hf = _parse_field_spec(p["source"], grid, "source")
    times = np.asarray(p["times"], dtype=float)
    fields = [np.zeros(grid.shape) for _ in times]
    reports = []
    if u0 is not None:
        for i, sn in enumerate(solve_homogeneous(cfg.kernel, u0, times)):
            fields[i] = fields[i] + np.real(sn.field.values)
        reports.append(verify_homogeneous_estimates(cfg.kernel, u0, times)
                       .prefixed("homogeneous"))
    h_vals = np.real(hf.values) if hf is not None else np.zeros(grid.shape)
    if hf is not None:
        src = solve_with_source(cfg.kernel, lambda s: h_vals, grid, times, p["source_steps"])
        for i, sn in enumerate(src):
            fields[i] = fields[i] + np.real(sn.field.values)
        reports.append(verify_source_estimates(cfg.kernel, lambda s: h_vals, grid, times,
                                               n_steps=p["source_steps"]).prefixed("source"))
    files = {}
    coords = [c.ravel() for c in np.meshgrid(*([grid.x] * grid.n), indexing="ij")]
    names = [f"x{i + 1}" for i in range(grid.n)]
    ht = grid.forward(h_vals)
    rows = []
    for i, (t, u) in enumerate(zip(times, fields)):
        files[f"solve_t{i:03d}.csv"] = _csv(names + ["u"], coords + [u.ravel()])
        uh = grid.forward(u)
        rows.append((t, grid.freq_l2(uh), grid.freq_h2(uh), float(np.max(np.abs(u))),
                     grid.freq_l2(-grid.xi2 * uh + ht)))
    files["norms.csv"] = _csv(("t", "L2", "H2", "sup", "DkL2"), list(zip(*rows)))
    rep = merge(reports)
    report = VerificationReport(rep.checks, _metadata(cfg))
    files["solve.report.json"] = render(report)
    return _Result(files, report)


def _run_subordinate(cfg):
    p = cfg.params
    dens = subordination_density(cfg.kernel, p["t"], p["tau_points"])
    x = sample_positions(cfg.kernel, p["t"], p["samples"], p["seed"], p["dim"], dens,
                         workers=cfg.threads)
    files = {
        "density.csv": _csv(("tau", "psi"), (dens.tau_grid, dens.values)),
        "samples.csv": _csv([f"x{i + 1}" for i in range(p["dim"])], list(x.T)),
    }
    rep = verify_subordination(cfg.kernel, times=(p["t"],))
    report = VerificationReport(rep.checks, _metadata(cfg, mass=dens.mass))
    files["subordinate.report.json"] = render(report)
    return _Result(files, report)


def _run_verify(cfg):
    rep = verify_suite(cfg.params["suite"], cfg.kernel, seed=cfg.seed, threads=cfg.threads)
    report = VerificationReport(rep.checks, _metadata(cfg, components=rep.metadata))
    return _Result({"verify.report.json": render(report)}, report,
                   render(report, "text").decode())


_RUNNERS = {
    "ml": _run_ml,
    "relax": _run_relax,
    "ode": _run_ode,
    "solve": _run_solve,
    "subordinate": _run_subordinate,
    "verify": _run_verify,
}


# ---------------------------------------------------------------- suites

def _decay_check(kernel, n, L, M, sigma):
    name = f"decay-exponent[n={n}]"
    anchor = "L2 decay exponent n alpha / 4"
    if not isinstance(kernel, PowerLaw):
        return VerificationReport((skipped_check(name, anchor,
                                                 "closed-form exponent needs a power law"),))
    fit = decay_exponent_fit(kernel, gaussian(BoxGrid(n, L, M), sigma))
    c = upper_bound_check(name, anchor, abs(fit.slope - fit.expected),
                          0.15 * abs(fit.expected),
                          note=f"slope {fit.slope:.6g} vs {fit.expected:.6g} over t in [10, 1e3]")
    return VerificationReport((c,), {"slope": fit.slope, "expected": fit.expected})


def verify_suite(name: str, kernel: Kernel, seed: int = 0, threads: int = 1) -> VerificationReport:
    """Aggregate the checks of every module for one kernel.

    ``default``: kernel conditions, relaxation bounds and complete
    monotonicity, the representation/stepper cross-oracle, the homogeneous
    estimates in one dimension and the subordination identities.
    ``extended`` adds the homogeneous estimates in two and three dimensions,
    the source estimates, positivity under refinement, the decay exponent
    and the sampler histogram.
    """
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; choose from {SUITES}")
    parts: list[tuple[str, VerificationReport]] = [
        ("kernel", check_conditions(kernel, np.geomspace(1e-6, 1e6, 121))),
    ]
    for lam in REFERENCE_LAMBDAS:
        parts.append((f"relax[lam={lam:g}]",
                      check_relax_bounds(kernel, lam, log_grid(1e-3, 1e3, 64))))
        curve = relaxation_curve(kernel, lam, log_grid(1e-2, 1e2, 64))
        parts.append((f"cm[lam={lam:g}]", check_complete_monotonicity(curve)))
    parts.append(("ode", verify_cross_oracle(kernel, REFERENCE_LAMBDAS, seed=seed)))
    parts.append(("cauchy-n1", verify_homogeneous_estimates(
        kernel, gaussian(BoxGrid(1, 20.0, 256), 1.0), [0.01, 0.1, 1.0, 10.0])))
    parts.append(("subordination", verify_subordination(kernel)))
    if name == "extended":
        for n, M in ((2, 128), (3, 64)):
            parts.append((f"cauchy-n{n}", verify_homogeneous_estimates(
                kernel, gaussian(BoxGrid(n, 20.0, M), 1.0), [0.01, 0.1, 1.0, 10.0])))
        for n, L, M in ((1, 20.0, 128), (2, 10.0, 64)):
            g = BoxGrid(n, L, M)
            h = gaussian(g, 1.0).values
            parts.append((f"source-n{n}", verify_source_estimates(
                kernel, lambda s, h=h: h, g, [0.5, 1.0, 2.0])))
        parts.append(("positivity", verify_positivity(kernel)))
        parts.append(("decay", merge([_decay_check(kernel, 1, 400.0, 16384, 0.1),
                                      _decay_check(kernel, 2, 100.0, 1024, 0.3)])))
        parts.append(("sampler", compare_sampler_to_solver(
            kernel, 1.0, 1, 10**6, BoxGrid(1, 40.0, 1024), seed=seed, workers=threads)))
    checks = []
    meta: dict[str, Any] = {"kernel": kernel.describe(), "suite": name, "seed": int(seed)}
    for label, rep in parts:
        checks.extend(rep.prefixed(label).checks)
        if rep.metadata:
            meta[label] = rep.metadata
    return VerificationReport(tuple(checks), meta)


# ---------------------------------------------------------------- entry points

def run(cfg: RunConfig) -> int:
    """Execute a validated configuration and write its outputs."""
    res = _RUNNERS[cfg.subcommand](cfg)
    write_outputs(cfg.out_dir, res.files)
    if res.stdout:
        sys.stdout.write(res.stdout)
    if res.report is not None and not res.report.passed:
        for c in res.report.failures():
            print(f"gfrac: check failed: {c.name} (measured {c.measured:.6g}, "
                  f"bound {c.bound:.6g})", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = load_config(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (ConfigError, DomainError, ShapeError) as exc:
        print(f"gfrac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except (DomainError, ShapeError) as exc:
        print(f"gfrac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GfracError as exc:
        print(f"gfrac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
