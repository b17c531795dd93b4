"""Deterministic CSV/markdown table emission."""

from __future__ import annotations

import csv


def fmt_pct(mean, std) -> str:
    """Percentage cell: values scaled by 100, one decimal (e.g. ``48.8±2.8``)."""
    return f"{100.0 * mean:.1f}±{100.0 * std:.1f}"


def fmt_corr(mean, std) -> str:
    """Correlation cell with two decimals; None renders as ``-``."""
    if mean is None:
        return "-"
    return f"{mean:.2f}±{std:.2f}"


def parse_pm(cell: str):
    """(mean, std) from a ``a±b`` cell; None for ``-``."""
    if cell == "-":
        return None
    mean, std = cell.split("±")
    return float(mean), float(std)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_markdown(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write("| " + " | ".join(header) + " |\n")
        fh.write("|" + "|".join("---" for _ in header) + "|\n")
        for row in rows:
            fh.write("| " + " | ".join(str(c) for c in row) + " |\n")


def emit_table(out_dir, name, header, rows, fmt="csv"):
    """Write ``<name>.csv`` (always) and ``<name>.md`` when markdown is asked."""
    if not rows:
        raise ValueError("refusing to emit an empty table")
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown table format {fmt!r}")
    paths = [out_dir / f"{name}.csv"]
    write_csv(paths[0], header, rows)
    if fmt == "markdown":
        md = out_dir / f"{name}.md"
        write_markdown(md, header, rows)
        paths.append(md)
    return paths
