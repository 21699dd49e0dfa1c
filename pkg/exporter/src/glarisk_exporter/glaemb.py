"""GLAEMB v1 writer (this package's side of the wire format).

Header line ``GLAEMB 1 <count> <dim>``, then ``<id>\\t<v1> <v2> ...`` per
entry, UTF-8 with LF endings.  Values carry 6 significant digits: plenty
for tree splits downstream, and it keeps tables small.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence


def format_value(value: float) -> str:
    return f"{value:.6g}"


def write_glaemb(rows: Iterable[tuple[str, Sequence[float]]], dim: int,
                 path: Path) -> int:
    """Write entries in manifest order; returns the row count."""
    rows = list(rows)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"GLAEMB 1 {len(rows)} {dim}\n")
        for rid, vector in rows:
            if "\t" in rid:
                raise ValueError(f"id {rid!r} contains a tab")
            if len(vector) != dim:
                raise ValueError(f"entry {rid!r} has {len(vector)} values, "
                                 f"expected {dim}")
            fh.write(rid + "\t" + " ".join(format_value(float(v)) for v in vector)
                     + "\n")
    return len(rows)
