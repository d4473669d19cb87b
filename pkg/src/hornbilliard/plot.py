"""Static SVG rendering of CSV tables (line, scatter, histogram)."""
from __future__ import annotations

import csv
import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import DomainError  # noqa: E402

KINDS = ("line", "scatter", "hist")


def read_csv(text: str) -> tuple[list[str], dict[str, np.ndarray]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DomainError("empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    cols = {}
    for k, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[k]) for r in body])
        except (ValueError, IndexError):
            continue  # non-numeric column
    return header, cols


def render_svg(text: str, kind: str, x: str | None = None, y: str | None = None,
               bins: int = 50, logx: bool = False, logy: bool = False, title: str = "") -> str:
    """SVG source for one plot of the CSV ``text``.

    Output is byte-stable: fixed hash salt, no date stamp, glyphs as paths.
    """
    if kind not in KINDS:
        raise DomainError(f"plot kind must be one of {KINDS}")
    header, cols = read_csv(text)
    numeric = [h for h in header if h in cols]
    if not numeric:
        raise DomainError("CSV has no numeric column")
    if kind == "hist":
        y = y or x or numeric[-1]
    else:
        x = x or numeric[0]
        y = y or (numeric[1] if len(numeric) > 1 else numeric[0])
    for name in (x, y):
        if name is not None and name not in cols:
            raise DomainError(f"no numeric column {name!r}; have {numeric}")

    with plt.rc_context({"svg.hashsalt": "hornbilliard", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        if kind == "hist":
            v = cols[y][np.isfinite(cols[y])]
            ax.hist(v, bins=bins, density=True, color="0.4")
            ax.set_xlabel(y)
            ax.set_ylabel("density")
        else:
            xs, ys = cols[x], cols[y]
            if kind == "line":
                ax.plot(xs, ys, "-", lw=1.2, color="k")
            else:
                ax.plot(xs, ys, ".", ms=2, color="k")
            ax.set_xlabel(x)
            ax.set_ylabel(y)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
