"""Matrix Market reader and writer (coordinate and array, real only)."""
import numpy as np

from .errors import ParseError
from .sparse import csr_from_triplets

__all__ = ["read_matrix_market", "write_matrix_market", "read_vector", "write_vector"]


def _header(lines, path):
    try:
        first = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty file", line=1) from None
    lineno, text = first
    parts = text.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise ParseError("missing '%%MatrixMarket' banner", line=lineno)
    obj, fmt, field, symm = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise ParseError(f"unsupported object {obj!r}", line=lineno)
    if fmt not in ("coordinate", "array"):
        raise ParseError(f"unsupported format {fmt!r}", line=lineno)
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field {field!r}", line=lineno)
    if symm not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry {symm!r}", line=lineno)
    return fmt, symm


def _records(path):
    with open(path) as fh:
        for lineno, text in enumerate(fh, start=1):
            yield lineno, text


def _data_lines(lines):
    for lineno, text in lines:
        s = text.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s.split()


def _parse_numbers(tokens, lineno, kinds):
    if len(tokens) != len(kinds):
        raise ParseError(f"expected {len(kinds)} fields, got {len(tokens)}", line=lineno)
    out = []
    for tok, kind in zip(tokens, kinds):
        try:
            out.append(kind(tok))
        except ValueError:
            raise ParseError(f"cannot parse {tok!r} as {kind.__name__}", line=lineno) from None
    return out


def read_matrix_market(path):
    """Read a real coordinate Matrix Market file into canonical CSR.

    Symmetric files are expanded to full storage.
    """
    lines = _records(path)
    fmt, symm = _header(lines, path)
    if fmt != "coordinate":
        raise ParseError("expected coordinate format for a sparse matrix", line=1)
    data = _data_lines(lines)
    try:
        lineno, tokens = next(data)
    except StopIteration:
        raise ParseError("missing size line") from None
    nrows, ncols, nnz = _parse_numbers(tokens, lineno, (int, int, int))
    if symm == "symmetric" and nrows != ncols:
        raise ParseError("symmetric matrix must be square", line=lineno)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    for lineno, tokens in data:
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", line=lineno)
        i, j, v = _parse_numbers(tokens, lineno, (int, int, float))
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise ParseError(f"index ({i}, {j}) outside {nrows}x{ncols}", line=lineno)
        if symm == "symmetric" and j > i:
            raise ParseError("symmetric file must store the lower triangle", line=lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise ParseError(f"declared {nnz} entries, found {k}")
    if symm == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return csr_from_triplets(nrows, ncols, (rows, cols, vals))


def write_matrix_market(A, path, symmetric=False):
    """Write ``A`` in coordinate format with round-trip exact values."""
    A = A.tocoo()
    rows, cols, vals = A.row, A.col, A.data
    if symmetric:
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{i + 1} {j + 1} {v!r}\n")


def read_vector(path):
    """Read a dense vector stored as a Matrix Market ``array`` (n x 1)."""
    lines = _records(path)
    fmt, _ = _header(lines, path)
    if fmt != "array":
        raise ParseError("expected array format for a vector", line=1)
    data = _data_lines(lines)
    try:
        lineno, tokens = next(data)
    except StopIteration:
        raise ParseError("missing size line") from None
    nrows, ncols = _parse_numbers(tokens, lineno, (int, int))
    if ncols != 1:
        raise ParseError(f"vector file must have one column, got {ncols}", line=lineno)
    out = np.empty(nrows)
    k = 0
    for lineno, tokens in data:
        if k >= nrows:
            raise ParseError(f"more than the declared {nrows} values", line=lineno)
        (out[k],) = _parse_numbers(tokens, lineno, (float,))
        k += 1
    if k != nrows:
        raise ParseError(f"declared {nrows} values, found {k}")
    return out


def write_vector(x, path):
    x = np.asarray(x, dtype=np.float64).ravel()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{len(x)} 1\n")
        for v in x.tolist():
            fh.write(f"{v!r}\n")
