"""Plain-text complex matrix files.

One block is::

    MIGW 1
    n m
    re im        <- n*m lines, row-major

with 17 significant digits, which round-trips IEEE doubles exactly. A file
may hold several blocks back to back (a stack of matrices).
"""

import numpy as np

from ..exceptions import ParseError, ValidationError

MAGIC = "MIGW 1"


def format_matrices(matrices):
    A = np.asarray(matrices)
    if A.ndim == 2:
        A = A[None]
    if A.ndim != 3 or 0 in A.shape:
        raise ValidationError(
            f"expected a nonempty matrix or stack of matrices, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix contains non-finite entries")
    A = A.astype(complex)
    n, m = A.shape[1:]
    lines = []
    for block in A:
        lines.append(MAGIC)
        lines.append(f"{n} {m}")
        lines.extend(f"{z.real:.17g} {z.imag:.17g}" for z in block.ravel())
    return "\n".join(lines) + "\n"


def parse_matrices(text):
    """Parse every block of ``text``; returns an array ``(blocks, n, m)``."""
    lines = text.splitlines()
    blocks = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        if lines[i].strip() != MAGIC:
            raise ParseError(f"expected header {MAGIC!r}, got {lines[i]!r}",
                             line=i + 1)
        i += 1
        if i >= len(lines):
            raise ParseError("missing dimensions line", line=i + 1)
        dims = lines[i].split()
        try:
            n, m = (int(d) for d in dims)
        except ValueError:
            raise ParseError(f"bad dimensions {lines[i]!r}", line=i + 1) from None
        if n < 1 or m < 1:
            raise ParseError(f"dimensions must be positive, got {n} {m}",
                             line=i + 1)
        i += 1
        values = np.empty(n * m, dtype=complex)
        for k in range(n * m):
            if i + k >= len(lines):
                raise ParseError(
                    f"file truncated: missing entry {k + 1} of {n * m}",
                    line=i + k + 1)
            parts = lines[i + k].split()
            try:
                re_, im_ = (float(p) for p in parts)
            except ValueError:
                raise ParseError(f"expected 're im', got {lines[i + k]!r}",
                                 line=i + k + 1) from None
            values[k] = complex(re_, im_)
        i += n * m
        if blocks and blocks[0].shape != (n, m):
            raise ParseError(
                f"block shape {n}x{m} differs from first block "
                f"{blocks[0].shape[0]}x{blocks[0].shape[1]}", line=i - n * m - 1)
        blocks.append(values.reshape(n, m))
    if not blocks:
        raise ParseError("no matrix block found", line=1)
    return np.stack(blocks)


def write_matrices(path, matrices):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_matrices(matrices))


def read_matrices(path):
    with open(path, encoding="ascii") as fh:
        return parse_matrices(fh.read())


def write_matrix(path, matrix):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got {matrix.shape}")
    write_matrices(path, matrix)


def read_matrix(path):
    """Read a file holding exactly one block."""
    blocks = read_matrices(path)
    if blocks.shape[0] != 1:
        raise ParseError(f"expected one matrix, found {blocks.shape[0]}",
                         line=1)
    return blocks[0]


def io_roundtrip(path, matrix):
    write_matrix(path, matrix)
    return read_matrix(path)


__all__ = [
    "MAGIC",
    "format_matrices",
    "parse_matrices",
    "write_matrices",
    "read_matrices",
    "write_matrix",
    "read_matrix",
    "io_roundtrip",
]
