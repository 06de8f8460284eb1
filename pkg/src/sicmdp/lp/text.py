"""Plain-text dump of a linear program, for debugging.

Not a standard format.  One line per item, fixed-point decimals::

    lp vars=2 rows=1
    max 1.000000 1.000000
    row 0 1.000000 1.000000 <= 1.000000
    bound 0 0.000000 inf
"""
from __future__ import annotations

import numpy as np

from .model import LinearProgram


def _fmt(v, digits):
    return "inf" if v == np.inf else "-inf" if v == -np.inf else f"{v:.{digits}f}"


def dump_lp(lp: LinearProgram, digits: int = 6) -> str:
    lines = [f"lp vars={lp.num_vars} rows={lp.num_rows}",
             "max " + " ".join(_fmt(v, digits) for v in lp.objective)]
    for i, (a, rel, b) in enumerate(lp.rows):
        lines.append(f"row {i} " + " ".join(_fmt(v, digits) for v in a)
                     + f" {rel} {_fmt(b, digits)}")
    for j, (lo, hi) in enumerate(zip(lp.lower, lp.upper)):
        lines.append(f"bound {j} {_fmt(lo, digits)} {_fmt(hi, digits)}")
    return "\n".join(lines) + "\n"
