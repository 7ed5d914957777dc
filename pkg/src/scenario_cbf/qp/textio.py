"""Plain-text dump of a :class:`QpProblem` for offline debugging.

Layout (``#`` lines are section markers, everything else is
whitespace-separated decimals)::

    # qp m=<m> n=<N>
    # hessian
    <m rows of m values>
    # linear
    <m values>
    # lower
    <m values, -inf allowed>
    # upper
    <m values, inf allowed>
    # constraints a_1 .. a_m b
    <N rows of m+1 values>
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .problem import QpProblem

_HEADER = re.compile(r"#\s*qp\s+m=(\d+)\s+n=(\d+)")


def _row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dump_problem(p: QpProblem, path) -> None:
    lines = [f"# qp m={p.dims} n={p.n_ineq}", "# hessian"]
    lines += [_row(r) for r in p.hessian]
    lines += ["# linear", _row(p.linear), "# lower", _row(p.lower),
              "# upper", _row(p.upper), "# constraints a_1 .. a_m b"]
    lines += [_row(np.append(a, bi)) for a, bi in zip(p.A, p.b)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_problem(path) -> QpProblem:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise ValueError(f"{path}: empty file")
    head = _HEADER.match(text[0])
    if head is None:
        raise ValueError(f"{path}:1: expected '# qp m=<m> n=<N>' header")
    m, n = int(head.group(1)), int(head.group(2))
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    expect = m + 3 + n
    if len(rows) != expect:
        raise ValueError(f"{path}: expected {expect} data rows, found {len(rows)}")
    H = np.array(rows[:m])
    c, lo, hi = (np.array(r) for r in rows[m:m + 3])
    cons = np.array(rows[m + 3:]).reshape(n, m + 1)
    return QpProblem(H, c, cons[:, :m], cons[:, m], lo, hi)
