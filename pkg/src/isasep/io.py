"""Plain-text file formats: matrix CSV, grouping index lists, manifests and
report CSVs. Every writer is atomic (temp file + rename) and produces the
same bytes for the same input."""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError
from .model import Grouping

_HEADER = re.compile(r"#\s*rows=(\d+)\s+cols=(\d+)\s*$")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def format_matrix(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    rows, cols = a.shape
    lines = [f"# rows={rows} cols={cols}"]
    lines += [",".join(format_float(v) for v in row) for row in a]
    return "\n".join(lines) + "\n"


def write_matrix(path, a) -> None:
    """Matrix CSV: header ``# rows=r cols=c`` then r lines of c values in
    17 significant digits, which round-trips float64 exactly."""
    atomic_write(path, format_matrix(a))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError("empty matrix file", path=str(path))
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise ConfigError("missing '# rows=<r> cols=<c>' header", line=1, path=str(path))
    rows, cols = int(m.group(1)), int(m.group(2))
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != rows:
        raise ConfigError(f"header declares {rows} rows, found {len(body)}", path=str(path))
    out = np.empty((rows, cols))
    for i, ln in enumerate(body):
        parts = ln.split(",")
        if len(parts) != cols:
            raise ConfigError(f"expected {cols} values, found {len(parts)}", line=i + 2, path=str(path))
        try:
            out[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(str(exc), line=i + 2, path=str(path)) from None
    return out


def format_grouping(g: Grouping) -> str:
    """``block0: 1,2 ; block1: 3,4`` with 1-based indices."""
    parts = [f"block{m}: " + ",".join(str(i + 1) for i in b) for m, b in enumerate(g.blocks)]
    return " ; ".join(parts) + "\n"


def write_grouping(path, g: Grouping) -> None:
    atomic_write(path, format_grouping(g))


def parse_grouping(text: str) -> Grouping:
    blocks = []
    for m, part in enumerate(p.strip() for p in text.strip().split(";")):
        label, sep, idx = part.partition(":")
        if not sep or label.strip() != f"block{m}":
            raise ConfigError(f"expected 'block{m}: ...', got {part!r}")
        try:
            blocks.append(tuple(int(i) - 1 for i in idx.split(",")))
        except ValueError:
            raise ConfigError(f"bad index list in {part!r}") from None
    return Grouping(tuple(blocks))


def read_grouping(path) -> Grouping:
    with open(path, encoding="utf-8") as fh:
        return parse_grouping(fh.read())


def format_manifest(items: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_manifest(path, items: Mapping[str, object]) -> None:
    atomic_write(path, format_manifest(items))


def read_manifest(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            if ln.strip() and not ln.lstrip().startswith("#"):
                k, _, v = ln.partition("=")
                out[k.strip()] = v.strip()
    return out


def write_table(path, header: Iterable[str], rows: Iterable[Iterable[float]]) -> None:
    """Comma-separated table with a header line; floats in 17 digits."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format_float(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")
