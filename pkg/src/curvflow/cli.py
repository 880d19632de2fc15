"""Command line entry point.

Exit codes: 0 success, 1 an invariant or acceptance check failed, 2 the
configuration is invalid, 3 a numerical failure stopped the computation.
"""

from __future__ import annotations

import os
import sys

# thread caps must be in place before numpy loads its BLAS
_THREADS = os.environ.get("CURVFLOW_THREADS")
if _THREADS and _THREADS.isdigit() and int(_THREADS) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import __version__

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass
class RunConfig:
    subcommand: str
    dim: int | None
    params: dict[str, Any] = field(default_factory=dict)
    outdir: Path = Path(".")
    seed: int = 0


def _num(positive: bool = False, integer: bool = False) -> Callable[[Any], str | None]:
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "must be a number"
        if integer and int(v) != v:
            return "must be an integer"
        if positive and not v > 0:
            return "must be positive"
        return None
    return check


def _dim(v):
    if v not in (3, 4, 5) or isinstance(v, bool):
        return "dim must be 3,4,5"
    return None


def _choice(*opts):
    def check(v):
        return None if v in opts else f"must be one of {', '.join(map(str, opts))}"
    return check


def _any(v):
    return None


def _obj(v):
    return None if isinstance(v, dict) else "must be an object"


def _str(v):
    return None if isinstance(v, str) else "must be a string"


def _boolean(v):
    return None if isinstance(v, bool) else "must be true or false"


# key: (required, check)
SCHEMAS: dict[str, dict[str, tuple[bool, Callable[[Any], str | None]]]] = {
    "constants": {"dim": (True, _dim)},
    "interactions": {"dim": (True, _dim), "lam": (False, _num(True)),
                     "dist": (False, _num(True)), "lam_j": (False, _num(True))},
    "flow": {"dim": (True, _dim), "K": (False, _obj), "grid_size": (False, _num(True, True)),
             "t_end": (True, _num(True)), "dt_init": (False, _num(True)),
             "dt_max": (False, _num(True)), "tol": (False, _num(True)),
             "method": (False, _choice("extrapolation", "imex")), "init": (False, _any),
             "grid": (False, _choice("uniform", "clustered")), "out": (False, _str)},
    "shadow": {"dim": (True, _dim), "backend": (False, _choice("flat", "sphere")),
               "mode": (False, _choice("no-solution", "with-solution")),
               "K": (False, _obj), "H": (False, _num()), "omega": (False, _obj),
               "alpha_sol": (False, _num(True)),
               "r_over_k": (False, _choice("leading-energy", "frozen")),
               "bubbles": (True, _any), "t_end": (True, _num(True)),
               "n_out": (False, _num(True, True)), "rtol": (False, _num(True)),
               "atol": (False, _num(True)), "eps_max": (False, _num(True)),
               "out": (False, _str)},
    "decompose": {"dim": (True, _dim), "input": (True, _str), "p": (False, _choice(1, 2)),
                  "K": (False, _obj)},
    "check-cond": {"dim": (True, _dim), "K": (True, _obj),
                   "backend": (False, _choice("flat", "sphere")),
                   "prime": (False, _boolean), "spherical": (False, _boolean),
                   "c4": (False, _num(True)), "tube": (False, _num(True)),
                   "seed": (False, _num(integer=True))},
    "scenario": {"lam0": (False, _any), "a_scale": (False, _num(True)),
                 "T": (False, _num(True)), "n_out": (False, _num(True, True))},
}


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f"line {i}: "
    return ""


def parse_config(subcommand: str, obj: dict[str, Any], text: str | None = None,
                 outdir: str | Path = ".") -> RunConfig:
    """Validate ``obj`` against the subcommand schema; every violation is
    collected before raising :class:`ConfigError`."""
    schema = SCHEMAS[subcommand]
    if not isinstance(obj, dict):
        raise ConfigError(["config must be a JSON object"])
    errors = []
    for key in obj:
        if key not in schema:
            errors.append(f"{_line_of(text, key)}unknown key {key!r}")
    for key, (required, check) in schema.items():
        if key not in obj:
            if required:
                errors.append(f"missing required key {key!r}")
            continue
        msg = check(obj[key])
        if msg:
            errors.append(f"{_line_of(text, key)}{key}: {msg}" if key != "dim"
                          else f"{_line_of(text, key)}{msg}")
    if errors:
        raise ConfigError(errors)
    dim = obj.get("dim")
    return RunConfig(subcommand, None if dim is None else int(dim), dict(obj),
                     Path(outdir), int(obj.get("seed", 0)))


def _load(path: str | None) -> tuple[dict[str, Any], str | None]:
    if path is None:
        return {}, None
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError([f"cannot read config {path}: {e.strerror}"]) from None
    try:
        return json.loads(text), text
    except json.JSONDecodeError as e:
        raise ConfigError([f"line {e.lineno}: invalid JSON: {e.msg}"]) from None


def _target(outdir: Path, name: str) -> Path:
    base = outdir.resolve()
    p = (base / name).resolve()
    if base != p and base not in p.parents:
        raise ConfigError([f"output {name!r} lies outside the output directory {outdir}"])
    return p


def _gnuplot(csv_path: Path, xcol: str, ycols: list[str], logy: bool = False) -> None:
    from .io import atomic_write_text
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             f"set xlabel '{xcol}'"]
    if logy:
        lines.append("set logscale y")
    plots = [f"'{csv_path.name}' using '{xcol}':'{c}' with lines" for c in ycols]
    lines.append("plot " + ", \\\n     ".join(plots))
    atomic_write_text(csv_path.with_suffix(".gp"), "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def _cmd_constants(cfg: RunConfig, out: Path) -> int:
    from .constants import constants_table, verify_identities
    from .io import write_json
    tab = constants_table(cfg.dim)
    res = verify_identities(tab)
    flat = {"schema_version": SCHEMA_VERSION, **tab.as_flat_dict()}
    flat.update({f"residual_{k}": v for k, v in res.items()})
    write_json(out, flat)
    worst = max(abs(v) for v in res.values())
    print(f"gamma3/gamma2 = {tab['gamma3_over_gamma2']:.15g}; worst identity residual {worst:.3e}")
    return EXIT_OK if worst < 1e-8 else EXIT_CHECK


def _cmd_interactions(cfg: RunConfig, out: Path) -> int:
    import numpy as np
    from .bubbles import interaction_integral
    from .geometry import ModelSpace
    from .io import write_json
    n = cfg.dim
    lam = float(cfg.params.get("lam", 1e3))
    lam_j = float(cfg.params.get("lam_j", lam))
    d = float(cfg.params.get("dist", 1.0))
    sp = ModelSpace(n, "flat")
    a_i = np.zeros(n)
    a_j = np.zeros(n)
    a_j[0] = d
    reports = [interaction_integral(sp, "self_norm", lam),
               interaction_integral(sp, "self_cross_2", lam)]
    for kind in ("pair_1", "pair_2", "pair_3"):
        reports.append(interaction_integral(sp, kind, lam, a_i, lam_j, a_j))
    ok = abs(reports[0].numeric - reports[0].predicted) <= 5 * lam ** (2 - n)
    ok = ok and 0.95 <= reports[2].ratio <= 1.05
    write_json(out, {"dim": n, "lambda_i": lam, "lambda_j": lam_j, "distance": d,
                     "reports": [r.to_json() for r in reports], "passed": ok})
    for r in reports:
        print(f"{r.kind:13s} numeric {r.numeric: .10e} predicted {r.predicted: .10e}")
    return EXIT_OK if ok else EXIT_CHECK


def _cmd_flow(cfg: RunConfig, out: Path, gnuplot: bool) -> int:
    from .io import write_json
    from .pdeflow import FlowConfig, StiffnessFailure, run, verify_monotonicity
    params = {k: v for k, v in cfg.params.items() if k != "out"}
    fc = FlowConfig.from_json(params)
    try:
        diag, state = run(fc)
    except StiffnessFailure as e:
        print(f"numerical failure: {e} at t={e.state.t:.6g}", file=sys.stderr)
        return EXIT_NUMERIC
    diag.to_csv(out)
    checks = verify_monotonicity(diag)
    write_json(out.with_suffix(".checks.json"),
               {k: v.to_json() for k, v in checks.items()})
    if gnuplot:
        _gnuplot(out, "t", ["J", "deltaJ"])
    bad = [k for k, v in checks.items() if not v.passed]
    print(f"t={state.t:.6g} J={state.curv.J:.12g} |dJ|={state.curv.deltaJ:.3e}; "
          f"failed checks: {', '.join(bad) or 'none'}")
    return EXIT_CHECK if bad else EXIT_OK


def _cmd_shadow(cfg: RunConfig, out: Path, gnuplot: bool) -> int:
    from .ode import StepSizeUnderflow
    from .shadow import config_from_json, integrate
    params = {k: v for k, v in cfg.params.items() if k != "out"}
    state, sc, opts = config_from_json(params)
    try:
        traj = integrate(state, sc, opts["t_end"], n_out=opts["n_out"],
                         rtol=opts["rtol"], atol=opts["atol"])
    except StepSizeUnderflow as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    traj.to_csv(out)
    if gnuplot:
        _gnuplot(out, "t", ["lambda"], logy=True)
    print(f"status {traj.status}; t_final {traj.t[-1]:.6g}; "
          f"lambda_final {' '.join(f'{x:.6g}' for x in traj.lam[-1])}")
    return EXIT_OK


def _cmd_scenario(cfg: RunConfig, out: Path, gnuplot: bool) -> int:
    from .io import write_json
    from .shadow import run_diverging_scenario
    lam0 = cfg.params.get("lam0", [1e4, 1e5])
    lam0 = [float(x) for x in (lam0 if isinstance(lam0, list) else [lam0])]
    runs = run_diverging_scenario(lam0s=tuple(lam0),
                                  a_scale=float(cfg.params.get("a_scale", 1e-2)),
                                  T=float(cfg.params.get("T", 1e3)),
                                  n_out=int(cfg.params.get("n_out", 401)))
    write_json(out, {"runs": [r.to_json() for r in runs],
                     "passed": all(r.passed for r in runs)})
    traj_csv = out.with_suffix(".csv")
    runs[0].traj.to_csv(traj_csv)
    if gnuplot:
        _gnuplot(traj_csv, "t", ["lambda"])
    for r in runs:
        print(f"lambda0={r.lam0:.3g} a0_1={r.a0[0]:.4g}: {'pass' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in runs) else EXIT_CHECK


def _cmd_decompose(cfg: RunConfig, out: Path) -> int:
    from .decompose import fit
    from .energy import DomainError, ScalarField
    from .geometry import KSpec
    from .io import write_json
    n = cfg.dim
    try:
        f = ScalarField.from_csv(cfg.params["input"], n)
    except (OSError, DomainError, ValueError) as e:
        raise ConfigError([f"input: {e}"]) from None
    K = KSpec.from_json(cfg.params.get("K", {"kind": "constant", "value": 1.0}), n + 1)
    res = fit(f, K, int(cfg.params.get("p", 1)))
    write_json(out, res.to_json())
    print(f"misfit {res.misfit:.6e}; converged {res.converged}; {res.message}")
    return EXIT_OK if res.converged else EXIT_CHECK


def _cmd_check_cond(cfg: RunConfig, out: Path) -> int:
    from .geometry import KSpec, ModelSpace, check_cond
    from .io import write_json
    sp = ModelSpace(cfg.dim, cfg.params.get("backend", "flat"))
    K = KSpec.from_json(cfg.params["K"], sp.ambient_dim)
    kw = {k: cfg.params[k] for k in ("prime", "spherical", "c4", "tube", "seed")
          if k in cfg.params}
    rep = check_cond(K, sp, **kw)
    write_json(out, rep.to_json())
    print(f"{rep.condition}: {rep.status}; margin {rep.margin}")
    return EXIT_OK if rep.passed else EXIT_CHECK


DEFAULT_OUT = {"constants": "table.json", "interactions": "interactions.json",
               "flow": "flow.csv", "shadow": "traj.csv", "scenario": "diverge_n5.json",
               "decompose": "result.json", "check-cond": "cond.json"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version",
                    version=f"curvflow {__version__} (constants schema {SCHEMA_VERSION})")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, gnuplot=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--outdir", default=".", help="directory for all outputs")
        p.add_argument("--out", help="output file name inside --outdir")
        if gnuplot:
            p.add_argument("--emit-gnuplot", action="store_true",
                           help="write a gnuplot script next to the CSV")
        return p

    p = common(sub.add_parser("constants", help="radial constants and identities"))
    p.add_argument("--dim", type=int)
    p = common(sub.add_parser("interactions", help="interaction integrals vs predictions"))
    p.add_argument("--dim", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--lam-j", dest="lam_j", type=float)
    p.add_argument("--dist", type=float)
    p = common(sub.add_parser("flow", help="integrate the symmetric PDE flow"), True)
    p.add_argument("--dim", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p = common(sub.add_parser("shadow", help="integrate the shadow flow"), True)
    p = common(sub.add_parser("scenario", help="reproduce a named scenario"), True)
    p.add_argument("name", choices=["diverge-n5"])
    p = common(sub.add_parser("decompose", help="fit pole bubbles to a field CSV"))
    p.add_argument("--input")
    p.add_argument("--dim", type=int)
    p.add_argument("--p", type=int)
    p = common(sub.add_parser("check-cond", help="check the Cond_n hypotheses for K"))
    p.add_argument("--dim", type=int)
    p.add_argument("--K", dest="K", help="K as inline JSON")
    p.add_argument("--backend")
    p.add_argument("--prime", action="store_true", default=None)
    p.add_argument("--spherical", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    return ap


_SKIP = {"config", "outdir", "out", "emit_gnuplot", "subcommand", "name"}


def execute(args: argparse.Namespace) -> int:
    obj, text = _load(args.config)
    for k, v in vars(args).items():
        if k in _SKIP or v is None:
            continue
        if k == "K" and isinstance(v, str):
            try:
                v = json.loads(v)
            except json.JSONDecodeError as e:
                raise ConfigError([f"--K: invalid JSON: {e.msg}"]) from None
        obj[k] = v
    sub = args.subcommand
    cfg = parse_config(sub, obj, text, args.outdir)
    name = args.out or obj.get("out") or DEFAULT_OUT[sub]
    out = _target(cfg.outdir, name)
    out.parent.mkdir(parents=True, exist_ok=True)
    gp = bool(getattr(args, "emit_gnuplot", False))
    if sub == "constants":
        return _cmd_constants(cfg, out)
    if sub == "interactions":
        return _cmd_interactions(cfg, out)
    if sub == "flow":
        return _cmd_flow(cfg, out, gp)
    if sub == "shadow":
        return _cmd_shadow(cfg, out, gp)
    if sub == "scenario":
        return _cmd_scenario(cfg, out, gp)
    if sub == "decompose":
        return _cmd_decompose(cfg, out)
    return _cmd_check_cond(cfg, out)


def main(argv: list[str] | None = None) -> int:
    if _THREADS is not None and not (_THREADS.isdigit() and int(_THREADS) > 0):
        print("config error: CURVFLOW_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
