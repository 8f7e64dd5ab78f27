"""Independent float64 reference implementations.

Everything here is deliberately naive (explicit loops, full sorts, dense
copies) and shares no code path with the package, so tests can check the
production implementations against an isolated route.
"""

import numpy as np


def matmul_naive(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, kk = a.shape
    k2, n = b.shape
    assert kk == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(kk):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_ref(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def topk_ref(scores, k):
    """Top-k by value, ties to the lower index, returned ascending."""
    s = np.asarray(scores, dtype=np.float64)
    order = sorted(range(s.size), key=lambda i: (-s[i], i))
    return np.array(sorted(order[:k]), dtype=np.int64)


def attention_ref(q, K, V):
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    w = softmax_ref(K @ q / np.sqrt(K.shape[1]))
    return w @ V, w


def topk_attention_ref(q, K, V, k):
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    idx = topk_ref(K @ q, k)
    w = softmax_ref(K[idx] @ q / np.sqrt(K.shape[1]))
    return w @ V[idx], idx


def sliced_scores_ref(q, K, d):
    """Copy-then-dense: explicit column slice copies before the product."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    K = np.asarray(K, dtype=np.float64)
    return np.array(K[:, :d]) @ np.array(q[:d])


def gathered_scores_ref(q, K, indices):
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    K = np.asarray(K, dtype=np.float64)
    return np.array(K[np.asarray(indices)]) @ q


def gathered_wsum_ref(w, V, indices):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    V = np.asarray(V, dtype=np.float64)
    return w @ np.array(V[np.asarray(indices)])


def pca_ref(keys):
    """PCA spectrum and components via SVD of the centered matrix.

    Returns (normalized eigenvalues descending, principal directions as
    columns). Independent route from the covariance+eigh production path.
    """
    k = np.asarray(keys, dtype=np.float64)
    centered = k - k.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=True)
    eig = np.zeros(k.shape[1], dtype=np.float64)
    eig[: svals.size] = svals**2 / (k.shape[0] - 1)
    total = eig.sum()
    return eig / total if total > 0 else eig, vt.T


def rel_err(actual, expected):
    a = np.asarray(actual, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    scale = max(1e-30, float(np.abs(e).max()))
    return float(np.abs(a - e).max()) / scale
