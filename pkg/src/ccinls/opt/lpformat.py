"""Export of :class:`LinearModel` to the CPLEX LP text format."""

from __future__ import annotations

import os
import re

import numpy as np

from .model import LinearModel

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _sanitize(names, prefix):
    out, seen = [], set()
    for i, raw in enumerate(names):
        nm = _BAD.sub("_", raw) or f"{prefix}{i}"
        if nm[0].isdigit() or nm[0] in ".eE":
            nm = f"{prefix}_{nm}"
        base, k = nm, 1
        while nm in seen:
            nm = f"{base}_{k}"
            k += 1
        seen.add(nm)
        out.append(nm)
    return out


def _num(a: float) -> str:
    return repr(float(a))


def _terms(coefs, names):
    parts = []
    for j, a in coefs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    if not parts:
        return "0 " + names[0]
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def to_lp_string(model: LinearModel) -> str:
    vnames = _sanitize(model.var_names, "x")
    rnames = _sanitize(model.row_names, "r")
    lines = [f"\\ {model.name}", "Maximize" if model.maximize else "Minimize"]
    obj = [(j, a) for j, a in enumerate(model.c) if a != 0.0]
    lines.append(f" obj: {_terms(obj, vnames)}")
    lines.append("Subject To")
    A = model.A.tocsr()
    for i in range(model.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        coefs = list(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist()))
        lines.append(f" {rnames[i]}: {_terms(coefs, vnames)} {model.row_sense[i]} {_num(model.rhs[i])}")
    lines.append("Bounds")
    for j in range(model.n_vars):
        lb, ub = model.lb[j], model.ub[j]
        if model.kind[j] == "B" and lb == 0.0 and ub == 1.0:
            continue
        if np.isinf(lb) and np.isinf(ub):
            lines.append(f" {vnames[j]} free")
        elif lb == ub:
            lines.append(f" {vnames[j]} = {_num(lb)}")
        else:
            lo_s = "-inf" if np.isinf(lb) else _num(lb)
            hi_s = "+inf" if np.isinf(ub) else _num(ub)
            lines.append(f" {lo_s} <= {vnames[j]} <= {hi_s}")
    bins = model.binaries
    if bins.size:
        lines.append("Binaries")
        lines.extend(f" {vnames[j]}" for j in bins)
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: LinearModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_lp_string(model))
