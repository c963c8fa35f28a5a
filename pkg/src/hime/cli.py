"""``hime`` command-line entry point.

Subcommands: ``solve``, ``flow``, ``sample``, ``verify`` and ``pareto``.
Every command reads one JSON config with a ``family`` discriminator
(``tabular``, ``gaussian``, ``dirichlet`` or ``ising``); ``flow`` and
``sample`` also accept the family parameters as flags. Unknown fields are
rejected.

Exit codes: 0 success, 1 verification failure, 2 config or schema error,
3 infeasible constraint, 4 numeric failure. Diagnostics go to stderr; data
goes to ``--out`` (or the config's ``out``) and otherwise to stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import reports
from ._rng import blocked_draws
from .core import SigmaSchedule, TabularDistribution, TransformChain
from .dirichlet import dirichlet_flow, dirichlet_hierarchical_sample, dirichlet_solve_lambda
from .errors import ContractError, HimeError, InfeasibleConstraintError
from .gaussian import gaussian_flow, gaussian_hierarchical_sample, gaussian_lambda_star
from .ising import binary_bytes, ising_flow, ising_hierarchical_sample, solve_lambda_ising
from .rg import pareto_sweep, run_generalized_rg, run_rg, solve_lambda
from .verify import SUITES, run_suite

log = logging.getLogger("hime")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_SCHEMA = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4

FAMILIES = ("tabular", "gaussian", "dirichlet", "ising")
TOP_FIELDS = {"family", "sigma", "lambda", "mu", "loss", "chain", "base", "seed", "count", "out", "tol",
              "sigma_grid", "format"}
LOSS_FIELDS = {"gaussian": {"A", "B", "k", "d"}, "dirichlet": {"alpha"}, "ising": {"J", "n"}}


class ConfigError(ContractError):
    """The config document does not match the schema."""


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Config:
    family: str
    sigma: SigmaSchedule
    loss: object
    lam: float | None = None
    mu: float | None = None
    chain: TransformChain | None = None
    base: TabularDistribution | None = None
    seed: int = 0
    count: int = 1000
    out: str | None = None
    tol: float = 1e-10
    sigma_grid: tuple[SigmaSchedule, ...] = field(default=())
    format: str = "csv"

    @property
    def levels(self) -> int:
        return self.sigma.depth


def _number(doc, key, where="config"):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    if not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be finite")
    return float(v)


def _integer(doc, key, where="config", minimum=0):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{where}.{key} must be an integer >= {minimum}")
    return v


def _numbers(v, name):
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{name} must be a list of numbers")
    return [float(x) for x in v]


def _sigma(v, name="sigma"):
    try:
        return SigmaSchedule(tuple(_numbers(v, name)))
    except ContractError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _flat_matrix(v, name):
    if isinstance(v, list) and v and all(isinstance(r, list) for r in v):
        v = [x for r in v for x in r]
    return _numbers(v, name)


def _parse_loss(family, loss):
    if family == "tabular":
        return np.asarray(_numbers(loss, "loss"))
    if not isinstance(loss, dict):
        raise ConfigError(f"loss for family {family!r} must be an object")
    unknown = set(loss) - LOSS_FIELDS[family]
    if unknown:
        raise ConfigError(f"unknown loss fields {sorted(unknown)} for family {family!r}")
    missing = LOSS_FIELDS[family] - set(loss) - ({"n"} if family == "ising" else set())
    if missing:
        raise ConfigError(f"loss is missing {sorted(missing)}")
    if family == "gaussian":
        k = _integer(loss, "k", "loss", 1)
        d = _integer(loss, "d", "loss", 1)
        A = np.asarray(_flat_matrix(loss["A"], "loss.A"))
        B = np.asarray(_flat_matrix(loss["B"], "loss.B"))
        if A.size != k * k or B.size != k * k:
            raise ConfigError(f"loss.A and loss.B must each hold k*k={k * k} entries")
        return {"A": A.reshape(k, k), "B": B.reshape(k, k), "k": k, "d": d}
    if family == "dirichlet":
        return {"alpha": np.asarray(_numbers(loss["alpha"], "loss.alpha"))}
    out = {"J": _number(loss, "J", "loss"), "n": None}
    if "n" in loss:
        out["n"] = _integer(loss, "n", "loss", 4)
    return out


def parse_config(doc) -> Config:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - TOP_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    family = doc.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"family must be one of {list(FAMILIES)}, got {family!r}")
    for key in ("sigma", "loss"):
        if key not in doc:
            raise ConfigError(f"config is missing {key!r}")
    if "lambda" in doc and "mu" in doc:
        raise ConfigError("give either 'lambda' or 'mu', not both")
    if family != "tabular":
        for key in ("chain", "base", "sigma_grid"):
            if key in doc:
                raise ConfigError(f"{key!r} only applies to the tabular family")
    kw = {}
    if "lambda" in doc:
        kw["lam"] = _number(doc, "lambda")
    if "mu" in doc:
        kw["mu"] = _number(doc, "mu")
    if "seed" in doc:
        kw["seed"] = _integer(doc, "seed")
    if "count" in doc:
        kw["count"] = _integer(doc, "count")
    if "tol" in doc:
        kw["tol"] = _number(doc, "tol")
        if kw["tol"] <= 0:
            raise ConfigError("tol must be positive")
    if "out" in doc:
        if not isinstance(doc["out"], str):
            raise ConfigError("out must be a path string")
        kw["out"] = doc["out"]
    if "format" in doc:
        if doc["format"] not in ("csv", "bin"):
            raise ConfigError("format must be 'csv' or 'bin'")
        if doc["format"] == "bin" and family != "ising":
            raise ConfigError("binary sample format is only defined for the ising family")
        kw["format"] = doc["format"]
    try:
        if "chain" in doc:
            kw["chain"] = TransformChain.from_json(doc["chain"])
        if "base" in doc:
            kw["base"] = TabularDistribution.from_json(doc["base"])
    except (ContractError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid chain or base: {exc}") from exc
    if "sigma_grid" in doc:
        grid = doc["sigma_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("sigma_grid must be a non-empty list of sigma lists")
        kw["sigma_grid"] = tuple(_sigma(g, f"sigma_grid[{i}]") for i, g in enumerate(grid))
    return Config(family=family, sigma=_sigma(doc["sigma"]), loss=_parse_loss(family, doc["loss"]), **kw)


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _csv_floats(text, name):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{name} must be a comma-separated list of numbers") from exc


def _inline_doc(family, args) -> dict:
    """Config document assembled from ``flow``/``sample`` flags."""
    doc = {"family": family}
    if args.sigma is not None:
        doc["sigma"] = _csv_floats(args.sigma, "sigma")
    elif args.levels is not None:
        doc["sigma"] = [1.0] * args.levels
    if family == "ising":
        doc["loss"] = {"J": args.J if args.J is not None else 1.0}
        if args.n is not None:
            doc["loss"]["n"] = args.n
    elif family == "dirichlet":
        if args.alpha is None:
            raise ConfigError("--alpha is required for the dirichlet family")
        doc["loss"] = {"alpha": _csv_floats(args.alpha, "alpha")}
    elif family == "gaussian":
        if args.A is None or args.B is None or args.k is None:
            raise ConfigError("--A, --B and --k are required for the gaussian family")
        d = args.d if args.d is not None else len(doc.get("sigma", []))
        doc["loss"] = {"A": _csv_floats(args.A, "A"), "B": _csv_floats(args.B, "B"), "k": args.k, "d": d}
    else:
        raise ConfigError("the tabular family needs a config file")
    return doc


def _config_for(args, family_arg=None) -> Config:
    """Config from a file and/or flags; command-line values override the file."""
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if family_arg is not None and doc.get("family") != family_arg:
            raise ConfigError(f"config family {doc.get('family')!r} does not match {family_arg!r}")
    else:
        if family_arg is None:
            raise ConfigError("give a family or --config")
        doc = _inline_doc(family_arg, args)
    if getattr(args, "lam", None) is not None:
        doc.pop("mu", None)
        doc["lambda"] = args.lam
    if getattr(args, "mu", None) is not None:
        doc.pop("lambda", None)
        doc["mu"] = args.mu
    for key in ("seed", "count"):
        if getattr(args, key, None) is not None:
            doc[key] = getattr(args, key)
    if getattr(args, "format", None) is not None:
        doc["format"] = args.format
    if getattr(args, "base", None) is not None:
        doc["base"] = _csv_floats(args.base, "base")
    if getattr(args, "sigma", None) is not None and getattr(args, "config", None):
        doc["sigma"] = _csv_floats(args.sigma, "sigma")
    if getattr(args, "levels", None) is not None and "sigma" in doc and len(doc["sigma"]) != args.levels:
        raise ConfigError(f"--levels {args.levels} disagrees with {len(doc['sigma'])} sigma entries")
    return parse_config(doc)


# --------------------------------------------------------------------------
# family dispatch
# --------------------------------------------------------------------------


def _tabular_chain(cfg: Config) -> TransformChain:
    if cfg.chain is not None:
        return cfg.chain
    return TransformChain((), finest_size=len(cfg.loss))


def _require_target(cfg: Config):
    if cfg.lam is None and cfg.mu is None:
        raise ConfigError("config needs 'lambda' or 'mu'")


def _solve_flow(cfg: Config):
    """Flow object (or tabular report) at the configured or solved multiplier; plus flags."""
    _require_target(cfg)
    fam, loss, s = cfg.family, cfg.loss, cfg.sigma
    flags: tuple = ()
    if fam == "tabular":
        chain = _tabular_chain(cfg)
        if cfg.lam is not None:
            rep = run_rg(loss, chain, s, cfg.lam) if cfg.base is None else run_generalized_rg(
                loss, chain, s, cfg.lam, cfg.base)
        else:
            _, rep = solve_lambda(loss, chain, s, cfg.mu, tol=cfg.tol, base=cfg.base)
        return rep, chain
    if fam == "gaussian":
        lam = cfg.lam if cfg.lam is not None else gaussian_lambda_star(loss["k"], loss["d"], s, cfg.mu)
        return gaussian_flow(loss["A"], loss["B"], loss["k"], loss["d"], s, lam), flags
    if fam == "dirichlet":
        lam = cfg.lam
        if lam is None:
            lam = dirichlet_solve_lambda(loss["alpha"], s, cfg.mu, cfg.levels, tol=cfg.tol)
        return dirichlet_flow(loss["alpha"], lam, s, cfg.levels), flags
    n = loss["n"] if loss["n"] is not None else 2 ** (cfg.levels + 1)
    lam = cfg.lam
    if lam is None:
        lam, flags = solve_lambda_ising(loss["J"], s, cfg.mu, n, cfg.levels, tol=cfg.tol)
    return ising_flow(loss["J"], lam, s, cfg.levels, n), flags


def _report_json(cfg: Config, obj, extra) -> dict:
    if cfg.family == "tabular":
        return reports.solve_report_to_json(obj, extra)
    return {
        "gaussian": reports.gaussian_report_to_json,
        "dirichlet": reports.dirichlet_report_to_json,
        "ising": reports.ising_report_to_json,
    }[cfg.family](obj, extra)


def _emit(data, args, cfg_out=None):
    path = None if args.stdout else (args.out or cfg_out)
    if path is None:
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            sys.stdout.write(data)
            sys.stdout.flush()
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    kw = {} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": ""}
    with open(path, mode, **kw) as fh:
        fh.write(data)
    log.info("wrote %s", path)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = _config_for(args)
    obj, extra = _solve_flow(cfg)
    _emit(reports.dumps(_report_json(cfg, obj, extra)), args, cfg.out)
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg = _config_for(args, args.family)
    if cfg.family == "tabular":
        raise ConfigError("flow is defined for gaussian, dirichlet and ising families")
    obj, _ = _solve_flow(cfg)
    text = {
        "gaussian": reports.gaussian_flow_csv,
        "dirichlet": reports.dirichlet_flow_csv,
        "ising": reports.ising_flow_csv,
    }[cfg.family](obj)
    _emit(text, args, cfg.out)
    return EXIT_OK


def _tabular_sample(report, seed, count):
    if count == 0:
        return np.empty((0, 1), dtype=np.int64)
    cdf = np.cumsum(report.joint.probs)
    cdf /= cdf[-1]

    def draw(rng, size):
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return np.minimum(idx, cdf.size - 1).reshape(size, 1)

    return blocked_draws(seed, count, draw, 1)


def cmd_sample(args) -> int:
    cfg = _config_for(args, args.family)
    obj, _ = _solve_flow(cfg)
    fam = cfg.family
    if fam == "tabular":
        text = reports.csv_text(["x"], _tabular_sample(obj, cfg.seed, cfg.count).tolist())
        _emit(text, args, cfg.out)
        return EXIT_OK
    if fam == "ising":
        x = ising_hierarchical_sample(obj, cfg.seed, cfg.count)
        if cfg.format == "bin":
            _emit(binary_bytes(x), args, cfg.out)
        else:
            _emit(reports.samples_csv(x, "s", integer=True), args, cfg.out)
        return EXIT_OK
    if fam == "gaussian":
        x = gaussian_hierarchical_sample(obj, cfg.seed, cfg.count)
    else:
        x = dirichlet_hierarchical_sample(obj, cfg.seed, cfg.count)
    _emit(reports.samples_csv(x, "x"), args, cfg.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    result = run_suite(args.suite, seed=args.seed or 0)
    for c in result["checks"]:
        log.info("%-40s residual=%-12.4g tol=%-8.2g %s", c["name"], float(c["residual"]), c["tol"],
                 "PASS" if c["pass"] else "FAIL")
    _emit(reports.dumps(result), args)
    return EXIT_OK if result["pass"] else EXIT_VERIFY


def _parse_grid(text):
    grid = []
    for chunk in text.split(";"):
        if chunk.strip():
            try:
                grid.append(SigmaSchedule.parse(chunk))
            except (ValueError, ContractError) as exc:
                raise ConfigError(f"bad sigma grid entry {chunk!r}: {exc}") from exc
    if not grid:
        raise ConfigError("sigma grid is empty")
    return tuple(grid)


def cmd_pareto(args) -> int:
    cfg = _config_for(args)
    if cfg.family != "tabular":
        raise ConfigError("pareto sweeps are defined for the tabular family")
    if cfg.mu is None:
        raise ConfigError("pareto sweeps need 'mu'")
    grid = _parse_grid(args.grid) if args.grid else cfg.sigma_grid
    if not grid:
        raise ConfigError("give a sigma grid with --grid or 'sigma_grid'")
    points = pareto_sweep(cfg.loss, _tabular_chain(cfg), cfg.mu, grid, tol=cfg.tol)
    _emit(reports.pareto_csv(points), args, cfg.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _common(p):
    p.add_argument("--out", help="output path (defaults to the config's 'out', then stdout)")
    p.add_argument("--stdout", action="store_true", help="write data to stdout and nothing else there")
    p.add_argument("--seed", type=int, default=None)


def _target(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, default=None, help="multiplier (skips root finding)")
    g.add_argument("--mu", type=float, default=None, help="target expected loss")


def _family_flags(p):
    p.add_argument("family", nargs="?", choices=FAMILIES)
    p.add_argument("--config", help="JSON config (flags override its fields)")
    p.add_argument("--sigma", help="comma-separated level weights")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--J", type=float, default=None)
    p.add_argument("--n", type=int, default=None, help="finest spin count (ising)")
    p.add_argument("--alpha", help="comma-separated loss weights (dirichlet)")
    p.add_argument("--A", help="row-major diagonal block (gaussian)")
    p.add_argument("--B", help="row-major off-diagonal block (gaussian)")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    _target(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hime", description="Hierarchical maximum-entropy solver.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a config and write the report JSON")
    p.add_argument("config")
    p.add_argument("--base", help="comma-separated base distribution (switches to relative entropy)")
    p.add_argument("--sigma", help="override the config's sigma")
    p.add_argument("--levels", type=int, default=None)
    _target(p)
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("flow", help="per-level parameter trajectory as CSV")
    _family_flags(p)
    _common(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("sample", help="draw from the optimal joint")
    _family_flags(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--format", choices=("csv", "bin"), default=None)
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify", help="run oracle checks and print a JSON report")
    p.add_argument("suite", nargs="?", default="all", choices=("all",) + tuple(SUITES))
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("pareto", help="sweep a sigma grid and write the front as CSV")
    p.add_argument("config")
    p.add_argument("--grid", help="sigma schedules separated by ';', e.g. '1,1;1,2'")
    p.add_argument("--sigma", help=argparse.SUPPRESS)
    p.add_argument("--levels", type=int, default=None, help=argparse.SUPPRESS)
    _target(p)
    _common(p)
    p.set_defaults(func=cmd_pareto)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleConstraintError as exc:
        print(f"hime: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ContractError, OSError) as exc:
        print(f"hime: invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (HimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"hime: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
