"""Command-line entry point: ``eulerlike <command> [--config FILE|NAME] [overrides]``.

Exit status is 0 on success, 1 when a computation fails (e.g. blow-up) and
2 for configuration errors.  Errors are also printed to stderr as one JSON
line anchored to the offending config line when one can be identified.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .exponents import (DegenerateForcingError, SweepResult, SweepRow, gaussian_fisher_check,
                        moment_lyapunov)
from .lattice import as_rational, format_rational
from .models import model_from_dict
from .projective import qr_spectrum, shear_bound_check
from .sde import BlowUpError, IntegratorConfig, integrate, write_binary, write_csv
from .spanning import build_Dk, build_Hk, check_distinctness, verify_sl_generation, zn_propagation

COMMANDS = ("simulate", "spectrum", "sweep", "moment", "fisher-check", "verify-hk",
            "verify-distinctness", "verify-zn", "shear-check")

# sections each command needs from the config (after flag overrides)
REQUIRED = {
    "simulate": ("model", "integrator"),
    "spectrum": ("model", "integrator"),
    "sweep": ("model", "integrator"),
    "moment": ("model", "integrator"),
    "fisher-check": (),
    "verify-hk": ("model",),
    "verify-distinctness": (),
    "verify-zn": ("model",),
    "shear-check": ("model",),
}

log = logging.getLogger("eulerlike")


class ConfigError(Exception):
    def __init__(self, message, line=None, path=None):
        super().__init__(message)
        self.line = line
        self.path = path


# ------------------------------------------------------------------ configs


def _bundled_dir():
    return resources.files("eulerlike") / "configs"


def bundled_configs():
    """``{name: parsed config}`` for every config shipped with the package."""
    out = {}
    for entry in sorted(_bundled_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = json.loads(entry.read_text())
    return out


def list_examples(stream=None):
    stream = stream or sys.stdout
    cfgs = bundled_configs()
    width = max(len(k) for k in cfgs)
    for name, cfg in cfgs.items():
        print(f"{name:<{width}}  {cfg.get('command', '-'):<20} {cfg.get('description', '')}", file=stream)
    return cfgs


def _line_of(text, key):
    if not text:
        return None
    needle = f'"{key}"'
    for no, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return no
    return None


def load_config(spec):
    """Parse a config given as a path or the name of a bundled config.

    Returns ``(config dict, raw text, path label)``.
    """
    path = Path(spec)
    if path.is_file():
        text, label = path.read_text(), str(path)
    else:
        entry = _bundled_dir() / f"{spec}.json"
        if not entry.is_file():
            raise ConfigError(f"no config file or bundled example named {spec!r}")
        text, label = entry.read_text(), f"<bundled>/{spec}.json"
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON: {err.msg} (column {err.colno})", err.lineno, label)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object", 1, label)
    return cfg, text, label


def apply_overrides(cfg, args):
    cfg = json.loads(json.dumps(cfg))
    params = cfg.setdefault("params", {})
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.T is not None or args.dt is not None:
        integ = cfg.setdefault("integrator", {})
        if args.T is not None:
            # an explicit burn-in keeps its share of the horizon
            if integ.get("burn_in") is not None and integ.get("T"):
                integ["burn_in"] = float(integ["burn_in"]) * args.T / float(integ["T"])
            integ["T"] = args.T
        if args.dt is not None:
            integ["dt"] = args.dt
    if args.eps is not None:
        eps = [e.strip() for e in args.eps.split(",") if e.strip()]
        if not eps:
            raise ConfigError("--eps needs at least one value")
        params["eps"] = eps
        if "model" in cfg:
            cfg["model"]["epsilon"] = eps[0]
    if args.N is not None:
        params["N"] = args.N
        if cfg.get("model", {}).get("kind") == "gnse":
            cfg["model"]["N"] = args.N
    if args.r is not None:
        params["r"] = args.r
        if cfg.get("model", {}).get("kind") == "gnse":
            cfg["model"]["r"] = args.r
    return cfg


def validate(cfg, command, text=None):
    """Check sections and build the objects a command needs; raises ConfigError."""
    for section in REQUIRED[command]:
        if section not in cfg:
            raise ConfigError(f"command {command!r} needs a {section!r} section", 1 if text else None)
    built = {}
    try:
        if "model" in cfg:
            built["model"] = model_from_dict(cfg["model"])
    except (KeyError, ValueError, TypeError, ZeroDivisionError) as err:
        raise ConfigError(f"invalid model section: {err}", _line_of(text, "model"))
    if "integrator" in cfg:
        integ = cfg["integrator"]
        try:
            built["integrator"] = IntegratorConfig(
                dt=float(integ["dt"]), T=float(integ["T"]),
                burn_in=None if integ.get("burn_in") is None else float(integ["burn_in"]),
                seed=int(cfg.get("seed", 0)), scheme=integ.get("scheme", "em"))
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(f"invalid integrator section: {err}", _line_of(text, "integrator"))
    params = cfg.get("params", {})
    if command == "sweep":
        eps = params.get("eps")
        if not eps:
            raise ConfigError("sweep needs params.eps (or --eps)", _line_of(text, "params"))
        try:
            vals = [float(as_rational(e)) for e in eps]
        except (ValueError, TypeError, ZeroDivisionError) as err:
            raise ConfigError(f"bad epsilon list: {err}", _line_of(text, "eps"))
        if any(v <= 0 for v in vals) or any(a <= b for a, b in zip(vals, vals[1:])):
            raise ConfigError("params.eps must be positive and strictly descending", _line_of(text, "eps"))
    if command == "moment":
        if not params.get("p"):
            raise ConfigError("moment needs params.p", _line_of(text, "params"))
        if int(params.get("ensemble", 100)) < 100:
            raise ConfigError("params.ensemble must be >= 100", _line_of(text, "ensemble"))
    if command == "verify-zn" and built["model"].kind != "gnse":
        raise ConfigError("verify-zn needs a gnse model", _line_of(text, "kind"))
    if command == "verify-distinctness":
        try:
            N, r = int(params.get("N", 8)), as_rational(params.get("r", "1"))
        except (ValueError, TypeError, ZeroDivisionError) as err:
            raise ConfigError(f"bad N or r: {err}", _line_of(text, "params"))
        if isinstance(r, float) or r <= 0:
            raise ConfigError("r must be a positive rational", _line_of(text, "r"))
        if N < 8:
            raise ConfigError("distinctness is stated for N >= 8", _line_of(text, "N"))
    if command == "fisher-check" and "model" not in built and not ("A_diag" in params or "A" in params):
        raise ConfigError("fisher-check needs a linear model or params.A_diag/params.q")
    return built


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


# ------------------------------------------------------------------ output


class Run:
    """Output directory, manifest and artifact bookkeeping for one command."""

    def __init__(self, out, command, cfg):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.seed = int(cfg.get("seed", 0))
        self.artifacts = []

    def path(self, name):
        self.artifacts.append(name)
        return self.dir / name

    def meta(self):
        return {"config_hash": self.hash, "seed": self.seed, "command": self.command}

    def write_json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump({**self.meta(), **payload}, fh, indent=2, default=_jsonable)
            fh.write("\n")

    def write_table(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(f"# config_hash={self.hash} seed={self.seed}\n")
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def finish(self, status, error=None):
        manifest = {
            **self.meta(),
            "status": status,
            "artifacts": self.artifacts,
            "config": self.cfg,
            "versions": {
                "eulerlike": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                **_optional_versions(),
            },
            "backend": _accel.backend(),
        }
        if error is not None:
            manifest["error"] = error
            (self.dir / "FAILED").write_text(error + "\n")
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, default=_jsonable)
            fh.write("\n")


def _optional_versions():
    out = {}
    import scipy
    out["scipy"] = scipy.__version__
    if _accel.HAVE_NUMBA:
        import numba
        out["numba"] = numba.__version__
    return out


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


# ------------------------------------------------------------------ commands


def _x0(cfg, m):
    x0 = cfg.get("params", {}).get("x0", cfg.get("x0"))
    return np.zeros(m.n) if x0 is None else np.asarray(x0, dtype=float)


def cmd_simulate(run, cfg, built, args):
    m, ic = built["model"], built["integrator"]
    params = cfg.get("params", {})
    stride = int(params.get("stride", 1))
    tag = f"config_hash={run.hash} seed={run.seed}"
    try:
        traj = integrate(m, _x0(cfg, m), ic, stride)
    except BlowUpError as err:
        if err.trajectory is not None:
            write_csv(err.trajectory, run.path("trajectory.partial.csv"), tag)
        raise
    write_csv(traj, run.path("trajectory.csv"), tag)
    if params.get("binary", False):
        write_binary(traj, run.path("trajectory.bin"))
        # the frame header has no room for the run identity, so it goes in a sidecar
        run.write_json("trajectory.bin.json", {"frames": "trajectory.bin", "n": traj.n,
                                               "dt": traj.dt, "count": len(traj)})
    run.write_json("simulate.json", {"fingerprint": m.fingerprint, "frames": len(traj),
                                     "dt": traj.dt, "n": traj.n})


def cmd_spectrum(run, cfg, built, args):
    m, ic = built["model"], built["integrator"]
    params = cfg.get("params", {})
    sp = qr_spectrum(m, _x0(cfg, m), ic, int(params.get("m_vectors", m.n)),
                     int(params.get("n_seeds", 1)), int(params.get("qr_every", 10)),
                     jobs=args.jobs)
    run.write_json("spectrum.json", {**sp.to_dict(), "T": ic.T, "dt": ic.dt,
                                     "burn_in": ic.burn_in, "scheme": ic.scheme.value})
    times, series = sp.series["times"], sp.series["series"]
    run.write_table("spectrum_series.csv", ["t"] + [f"lambda{i + 1}" for i in range(series.shape[1])],
                    [[t, *row] for t, row in zip(times, series)])


def cmd_sweep(run, cfg, built, args):
    m, ic = built["model"], built["integrator"]
    params = cfg.get("params", {})
    eps_list = [float(as_rational(e)) for e in params["eps"]]
    n_seeds = int(params.get("n_seeds", 1))
    full = bool(params.get("full_spectrum", True))
    x0 = _x0(cfg, m)
    rows = []
    header = ["epsilon", "lambda1", "stderr", "ratio", "lambda_sum", "minus_eps_trA"]
    try:
        for eps in eps_list:
            me = m.with_epsilon(eps)
            sp = qr_spectrum(me, x0, ic, me.n if full else 1, n_seeds, jobs=args.jobs)
            rows.append(SweepRow(eps, sp.exponents[0], sp.lambda_sum, -eps * me.trace_A()))
            log.info("sweep eps=%g lambda1=%.6g", eps, sp.exponents[0].value)
    finally:
        # rows finished so far are flushed even when a later epsilon fails
        table = [[r.epsilon, r.lambda1.value, r.lambda1.stderr, r.ratio,
                  "" if r.lambda_sum is None else r.lambda_sum.value, r.minus_eps_trA] for r in rows]
        run.artifacts = [a for a in run.artifacts if a not in ("sweep.csv", "sweep.json")]
        run.write_table("sweep.csv", header, table)
        if rows:
            res = SweepResult(rows)
            run.write_json("sweep.json", {**res.to_dict(), "complete": len(rows) == len(eps_list),
                                          "fingerprint": m.fingerprint})


def cmd_moment(run, cfg, built, args):
    m, ic = built["model"], built["integrator"]
    params = cfg.get("params", {})
    res = moment_lyapunov(m, ic, [float(p) for p in params["p"]], int(params.get("ensemble", 100)),
                          _x0(cfg, m), params.get("v0"), jobs=args.jobs)
    run.write_json("moment.json", {"p": res["p"], "Lambda": res["Lambda"], "stderr": res["stderr"],
                                   "T": res["T"], "ensemble": len(res["log_growth"]),
                                   "fingerprint": m.fingerprint})
    run.write_table("moment.csv", ["p", "Lambda", "stderr"],
                    [[p, lam, s] for p, lam, s in zip(res["p"], res["Lambda"], res["stderr"])])


def cmd_fisher(run, cfg, built, args):
    params = cfg.get("params", {})
    if "A_diag" in params or "A" in params:
        A = np.diag([float(as_rational(a)) for a in params["A_diag"]]) if "A_diag" in params else \
            np.array([[float(as_rational(a)) for a in row] for row in params["A"]])
        q = np.array([float(as_rational(v)) for v in params["q"]])
        eps = float(as_rational(params.get("epsilon", cfg.get("model", {}).get("epsilon", "1/10"))))
    else:
        m = built["model"]
        A, eps = np.asarray(m.A), m.eps
        q = np.zeros(m.n)
        for row in m.forcing:
            nz = np.flatnonzero(row)
            if nz.size != 1 or q[nz[0]] != 0:
                raise ConfigError("fisher-check needs forcing of the form q_k e_k")
            q[nz[0]] = row[nz[0]]
    res = gaussian_fisher_check(A, q, eps)
    run.write_json("fisher.json", {k: v for k, v in res.items() if k != "covariance"})


def cmd_verify_hk(run, cfg, built, args):
    m = built["model"]
    fam = build_Hk(m)
    payload = {"model": m.kind, "fingerprint": m.fingerprint, "n": fam.n}
    if fam.kind == "gnse":
        build_Dk(fam)  # raises on any closed-form / commutator mismatch
        payload.update({"N": fam.N, "r": format_rational(fam.r), "Dk_commutator_check": "exact match"})
    depth = cfg.get("params", {}).get("max_depth")
    res = verify_sl_generation(fam, None if depth is None else int(depth))
    payload.update(res.to_dict())
    payload["verdict"] = "saturated" if res.saturated else "not saturated"
    run.write_json("closure.json", payload)


def cmd_verify_distinctness(run, cfg, built, args):
    params = cfg.get("params", {})
    N, r = int(params.get("N", 8)), as_rational(params.get("r", "1"))
    logfile = run.path("distinctness.log")
    with open(logfile, "w") as fh:
        def progress(msg):
            fh.write(msg + "\n")
            fh.flush()
        rep = check_distinctness(N, r, progress=progress)
    run.write_json("distinctness.json", rep.to_dict())


def cmd_verify_zn(run, cfg, built, args):
    m = built["model"]
    res = zn_propagation(m.gnse)
    run.write_json("zn.json", {"model": "gnse", "N": m.gnse.N, "r": format_rational(m.gnse.r),
                               "full": res["full"], "steps": len(res["sets"]) - 1,
                               "sizes": [len(s) for s in res["sets"]],
                               "sets": [[list(k) for k in s] for s in res["sets"]]})


def cmd_shear(run, cfg, built, args):
    m = built["model"].with_epsilon(0)
    params = cfg.get("params", {})
    if "x0" not in params and "x0" not in cfg:
        # no start given: a Gaussian point drawn from the run seed
        params = {**params, "x0": np.random.default_rng(int(cfg.get("seed", 0))).standard_normal(m.n)}
        cfg = {**cfg, "params": params}
    T = float(args.T if args.T is not None else params.get("T", 5.0))
    dt = float(args.dt if args.dt is not None else params.get("dt", 1e-4))
    res = shear_bound_check(m, _x0(cfg, m), T, dt, int(params.get("n_samples", 50)))
    run.write_table("shear.csv", ["t", "lhs", "rhs", "satisfied", "residual"],
                    [[t, a, b, int(s), e] for t, a, b, s, e in
                     zip(res["times"], res["lhs"], res["rhs"], res["satisfied"],
                         res["decomposition_residual"])])
    run.write_json("shear.json", {"all_satisfied": bool(np.all(res["satisfied"])),
                                  "max_residual": res["max_residual"],
                                  "norm_drift": res["norm_drift"], "T": T, "dt": dt})


HANDLERS = {
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "moment": cmd_moment,
    "fisher-check": cmd_fisher,
    "verify-hk": cmd_verify_hk,
    "verify-distinctness": cmd_verify_distinctness,
    "verify-zn": cmd_verify_zn,
    "shear-check": cmd_shear,
}


# ------------------------------------------------------------------ gnuplot helper


def columns(path, stream=None):
    """Print gnuplot-ready column descriptions of a CSV artifact."""
    stream = stream or sys.stdout
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = next(csv.reader(lines[:1]))
    print(f"# {path}: {len(lines) - 1} rows", file=stream)
    for i, name in enumerate(header, 1):
        print(f"# column {i}: {name}", file=stream)
    print("set datafile separator ','", file=stream)
    plots = ", ".join(f"'{path}' every ::1 using 1:{i} with lines title '{name}'"
                      for i, name in enumerate(header[1:], 2))
    print(f"plot {plots}", file=stream)


# ------------------------------------------------------------------ entry


def _error(kind, message, path=None, line=None):
    loc = ""
    if path:
        loc = f"{path}:{line}: " if line else f"{path}: "
    print(json.dumps({"error": kind, "message": f"{loc}{message}", "file": path, "line": line}),
          file=sys.stderr)


def build_parser():
    p = argparse.ArgumentParser(prog="eulerlike", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name in COMMANDS + ("run",):
        sp = sub.add_parser(name, help=f"{name} (see README)" if name != "run" else
                            "run the command named in the config")
        sp.add_argument("--config", help="config file path or bundled example name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="eulerlike-out", help="output directory")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--eps", help="comma-separated epsilon values")
        sp.add_argument("--N", type=int)
        sp.add_argument("--r", help='aspect ratio as a rational "p/q"')
        sp.add_argument("--T", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("list-examples", help="list bundled configs")
    cp = sub.add_parser("columns", help="gnuplot column descriptions of a CSV artifact")
    cp.add_argument("csv")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on unknown commands
    if args.command == "list-examples":
        list_examples()
        return 0
    if args.command == "columns":
        columns(args.csv)
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    label = None
    try:
        if args.config:
            cfg, text, label = load_config(args.config)
        else:
            cfg, text = {}, None
        command = args.command
        if command == "run":
            command = cfg.get("command")
            if command not in COMMANDS:
                raise ConfigError(f"config names no valid command (got {command!r})",
                                  _line_of(text, "command"), label)
        cfg = apply_overrides(cfg, args)
        built = validate(cfg, command, text)
    except ConfigError as err:
        _error("config", str(err), err.path or label, err.line)
        return 2
    run = Run(args.out, command, cfg)
    try:
        HANDLERS[command](run, cfg, built, args)
    except ConfigError as err:
        _error("config", str(err), label, err.line)
        run.finish("failed", str(err))
        return 2
    except (BlowUpError, DegenerateForcingError, OverflowError, ArithmeticError, ValueError,
            AssertionError, TypeError) as err:
        _error("computation", f"{type(err).__name__}: {err}")
        run.finish("failed", f"{type(err).__name__}: {err}")
        return 1
    run.finish("ok")
    print(json.dumps({"status": "ok", "command": command, "out": str(run.dir),
                      "artifacts": run.artifacts, "config_hash": run.hash}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
