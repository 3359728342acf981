"""Plain-text matrix format shared by states and Choi matrices.

A file is a header line ``<key>: n1 n2 ...`` followed by one line per matrix
row, entries written as ``re+imj`` with 17 significant digits.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def format_matrix(key: str, ints, matrix) -> str:
    matrix = np.asarray(matrix, dtype=complex)
    lines = [f"{key}: " + " ".join(str(int(i)) for i in ints)]
    for row in matrix:
        lines.append(" ".join(f"{z.real:.16e}{z.imag:+.16e}j" for z in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> tuple[str, list[int], np.ndarray]:
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty matrix file")
    head_no, head = lines[0]
    key, sep, rest = head.partition(":")
    if not sep:
        raise ValueError(f"line {head_no}: expected '<key>: ints', got {head!r}")
    try:
        ints = [int(tok) for tok in rest.split()]
    except ValueError as exc:
        raise ValueError(f"line {head_no}: bad header {head!r}") from exc
    rows = []
    n = len(lines) - 1
    for lineno, ln in lines[1:]:
        try:
            row = [complex(tok) for tok in ln.split()]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse entries") from exc
        if len(row) != n:
            raise ValueError(f"line {lineno}: {len(row)} entries in a {n}-row matrix")
        rows.append(row)
    return key.strip(), ints, np.array(rows, dtype=complex).reshape(n, n)


def read_text(path) -> str:
    return Path(path).read_text()


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
