"""JSON and CSV serialization of solver and flow results.

Floats are written with ``repr`` (shortest round-trip form, at most 17
significant digits), so every JSON report re-ingests to identical values.
CSV output goes through the :mod:`csv` module with the same float format and
never depends on the locale.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .core import ConditionalTable, SigmaSchedule, TabularDistribution, TransformChain
from .dirichlet import DirichletFlow, dirichlet_expected_loss
from .errors import ContractError
from .gaussian import GaussianFlowReport, gaussian_dlogZ
from .ising import IsingFlow, ising_expected_loss, ising_level_log_normalizers, ising_log_partition
from .rg import SolveReport

REPORT_FIELDS = {
    "family", "lambda", "sigma", "chain", "level_dists", "level_logZ", "conditionals", "joint",
    "entropy_vector", "expected_loss", "log_partition", "base", "flags",
}


def _num(x) -> float | str:
    """JSON-safe float; non-finite values become strings that ``float`` parses back."""
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _nums(xs) -> list:
    return [_num(v) for v in np.asarray(xs, dtype=float).ravel()]


# --------------------------------------------------------------------------
# tabular
# --------------------------------------------------------------------------


def solve_report_to_json(report: SolveReport, chain: TransformChain) -> dict:
    return {
        "family": "tabular",
        "lambda": _num(report.lam),
        "sigma": list(report.sigma.sigma),
        "chain": chain.to_json(),
        "level_dists": [_nums(d.probs) for d in report.level_dists],
        "level_logZ": _nums(report.level_logZ),
        "conditionals": [_nums(c.weights) for c in report.conditionals],
        "joint": _nums(report.joint.probs),
        "entropy_vector": _nums(report.entropy_vector),
        "expected_loss": _num(report.expected_loss),
        "log_partition": _num(report.log_partition),
        "base": None if report.base is None else _nums(report.base.probs),
        "flags": list(report.flags),
    }


def solve_report_from_json(doc: dict) -> tuple[SolveReport, TransformChain]:
    unknown = set(doc) - REPORT_FIELDS
    if unknown:
        raise ContractError(f"unknown report fields {sorted(unknown)}")
    if doc.get("family") != "tabular":
        raise ContractError("not a tabular solve report")
    try:
        chain = TransformChain.from_json(doc["chain"])
        dists = tuple(TabularDistribution.from_json(p, exact=True) for p in doc["level_dists"])
        if len(doc["conditionals"]) != len(chain.steps):
            raise ContractError("report has one conditional per transform")
        conds = tuple(ConditionalTable(st, np.asarray(w, dtype=float))
                      for st, w in zip(chain.steps, doc["conditionals"]))
        base = doc.get("base")
        report = SolveReport(
            lam=float(doc["lambda"]),
            sigma=SigmaSchedule(tuple(doc["sigma"])),
            level_dists=dists,
            level_logZ=tuple(float(z) for z in doc["level_logZ"]),
            conditionals=conds,
            joint=TabularDistribution.from_json(doc["joint"], exact=True),
            entropy_vector=tuple(float(h) for h in doc["entropy_vector"]),
            expected_loss=float(doc["expected_loss"]),
            log_partition=float(doc["log_partition"]),
            base=None if base is None else TabularDistribution.from_json(base, exact=True),
            flags=tuple(doc.get("flags", ())),
        )
    except KeyError as exc:
        raise ContractError(f"report is missing field {exc.args[0]!r}") from exc
    return report, chain


# --------------------------------------------------------------------------
# parametric families
# --------------------------------------------------------------------------


def gaussian_report_to_json(flow: GaussianFlowReport, flags=()) -> dict:
    lv0 = flow.levels[0]
    return {
        "family": "gaussian",
        "lambda": _num(flow.lam),
        "sigma": list(flow.sigma.sigma),
        "k": lv0.k,
        "d": lv0.m,
        "levels": [{"m": lv.m, "coeff": _num(lv.coeff), "A": _nums(lv.A), "B": _nums(lv.B)} for lv in flow.levels],
        "level_logZ": _nums(flow.level_logZ),
        "log_partition": _num(flow.log_partition),
        "expected_loss": _num(-gaussian_dlogZ(lv0.k, lv0.m, flow.sigma, flow.lam)),
        "flags": list(flags),
    }


def dirichlet_report_to_json(flow: DirichletFlow, flags=()) -> dict:
    return {
        "family": "dirichlet",
        "lambda": _num(flow.lam),
        "sigma": list(flow.sigma.sigma),
        "alpha": _nums(flow.alpha),
        "betas": [_nums(f.beta) for f in flow.families],
        "recursion_betas": [_nums(b) for b in flow.recursion_betas],
        "gaps": _nums(flow.gaps),
        "level_logZ": _nums(flow.level_logZ),
        "log_partition": _num(flow.log_partition),
        "expected_loss": _num(dirichlet_expected_loss(flow)),
        "flags": list(flags),
    }


def ising_report_to_json(flow: IsingFlow, flags=()) -> dict:
    return {
        "family": "ising",
        "lambda": _num(flow.lam),
        "sigma": list(flow.sigma.sigma),
        "J": _num(flow.J),
        "sizes": list(flow.sizes),
        "thetas": _nums(flow.thetas),
        "level_logZ": _nums(ising_level_log_normalizers(flow)),
        "log_partition": _num(ising_log_partition(flow)),
        "expected_loss": _num(ising_expected_loss(flow)),
        "flags": list(flow.flags) + list(flags),
    }


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# csv
# --------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def ising_flow_csv(flow: IsingFlow) -> str:
    logz = ising_level_log_normalizers(flow)
    rows = [(i + 1, n, th, lz) for i, (n, th, lz) in enumerate(zip(flow.sizes, flow.thetas, logz))]
    return csv_text(["level", "n", "theta", "logZ"], rows)


def gaussian_flow_csv(flow: GaussianFlowReport) -> str:
    rows = flow.rows()
    header = list(rows[0])
    return csv_text(header, [[r[h] for h in header] for r in rows])


def dirichlet_flow_csv(flow: DirichletFlow) -> str:
    """One row per level: flow concentrations, alternative-recursion values and their gap.

    Coarser levels have fewer components; their trailing cells are empty.
    """
    width = len(flow.families[0])
    header = (["level", "size"] + [f"beta_{j + 1}" for j in range(width)]
              + [f"recursion_beta_{j + 1}" for j in range(width)] + ["gap", "logZ"])
    rows = []
    for i, (fam, pb, gap, lz) in enumerate(zip(flow.families, flow.recursion_betas, flow.gaps, flow.level_logZ)):
        pad = [None] * (width - len(fam))
        rows.append([i + 1, len(fam)] + list(map(float, fam.beta)) + pad + list(map(float, pb)) + pad + [gap, lz])
    return csv_text(header, rows)


def samples_csv(x: np.ndarray, prefix: str, integer: bool = False) -> str:
    x = np.asarray(x)
    header = [f"{prefix}{j + 1}" for j in range(x.shape[1])]
    rows = x.astype(int).tolist() if integer else x.astype(float).tolist()
    return csv_text(header, rows)


def pareto_csv(points) -> str:
    d = points[0].sigma.depth if points else 0
    header = [f"sigma_{j + 1}" for j in range(d)] + [f"H{j + 1}" for j in range(d)] + ["lambda", "logZ"]
    rows = [list(p.sigma.sigma) + list(p.entropy_vector) + [p.lam, p.log_partition] for p in points]
    return csv_text(header, rows)


def read_csv(text: str):
    """Header and float rows of a CSV produced here (empty cells become None)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return [], []
    return rows[0], [[float(c) if c != "" else None for c in r] for r in rows[1:]]
