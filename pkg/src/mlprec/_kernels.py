"""Compiled inner loops (relaxation sweeps, aggregation, Schwarz)."""
import numba as nb
import numpy as np

_jit = nb.njit(cache=True, nogil=True)


@_jit
def gs_forward(indptr, indices, data, diag, b, x):
    n = len(b)
    for i in range(n):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            s -= data[k] * x[indices[k]]
        x[i] += s / diag[i]


@_jit
def gs_backward(indptr, indices, data, diag, b, x):
    n = len(b)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            s -= data[k] * x[indices[k]]
        x[i] += s / diag[i]


@_jit
def greedy_aggregate(indptr, indices, data, max_agg):
    """Seeded greedy aggregation; see :func:`mlprec.amg.aggregate`."""
    n = len(indptr) - 1
    labels = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(n, dtype=np.int64)
    members = np.empty(max(max_agg, 1), dtype=np.int64)
    nc = 0
    for i in range(n):
        if labels[i] != -1:
            continue
        labels[i] = nc
        members[0] = i
        count = 1
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if count >= max_agg:
                break
            if j != i and labels[j] == -1:
                labels[j] = nc
                members[count] = j
                count += 1
        if count < 3:
            ring = count
            for m in range(ring):
                v = members[m]
                for k in range(indptr[v], indptr[v + 1]):
                    j = indices[k]
                    if count >= max_agg:
                        break
                    if labels[j] == -1:
                        labels[j] = nc
                        members[count] = j
                        count += 1
        if count == 1:
            # isolated seed: join the strongest-coupled neighbouring aggregate
            best = -1
            best_w = -1.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j == i:
                    continue
                w = abs(data[k])
                lj = labels[j]
                if lj != nc and lj >= 0 and sizes[lj] < max_agg and w > best_w:
                    best_w = w
                    best = lj
            if best >= 0:
                labels[i] = best
                sizes[best] += 1
                continue
        sizes[nc] = count
        nc += 1
    return labels, nc


@_jit
def schwarz_sweep(indptr, indices, data, c_indptr, c_indices, c_data, scale,
                  block_ptr, block_idx, factors, factor_ptr, r, z, backward):
    """Multiplicative block sweep with dense local Cholesky solves.

    The residual is taken against ``A + scale * C``; keeping the two parts
    apart lets a large ``scale`` act on exact differences.

    ``factors`` holds the row-major lower Cholesky factor of each local
    matrix, flattened; ``factor_ptr`` indexes into it.
    """
    nb_ = len(block_ptr) - 1
    for t in range(nb_):
        b = nb_ - 1 - t if backward else t
        start = block_ptr[b]
        m = block_ptr[b + 1] - start
        f0 = factor_ptr[b]
        res = np.empty(m)
        for a in range(m):
            i = block_idx[start + a]
            s = r[i]
            for k in range(indptr[i], indptr[i + 1]):
                s -= data[k] * z[indices[k]]
            if scale != 0.0:
                t = 0.0
                for k in range(c_indptr[i], c_indptr[i + 1]):
                    t += c_data[k] * z[c_indices[k]]
                s -= scale * t
            res[a] = s
        # L y = res
        for a in range(m):
            s = res[a]
            for c in range(a):
                s -= factors[f0 + a * m + c] * res[c]
            res[a] = s / factors[f0 + a * m + a]
        # L^T w = y
        for a in range(m - 1, -1, -1):
            s = res[a]
            for c in range(a + 1, m):
                s -= factors[f0 + c * m + a] * res[c]
            res[a] = s / factors[f0 + a * m + a]
        for a in range(m):
            z[block_idx[start + a]] += res[a]
