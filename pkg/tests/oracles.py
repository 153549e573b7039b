"""Independent reference computations used only by the tests.

Nothing here calls into the package's numeric paths: loops instead of
vectorized products, a classical two-sided Jacobi eigensolver instead of
LAPACK, brute-force enumeration instead of sorted sweeps.
"""
import math

import numpy as np


def matmul_loops(a, b):
    n, k = len(a), len(b)
    m = len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return np.array(out)


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic two-sided Jacobi eigendecomposition of a symmetric matrix."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.linalg.norm(a)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q], rot[q, p] = s, -s
                a = rot.T @ a @ rot
                v = v @ rot
    return np.diag(a).copy(), v


def two_pass_stats(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    mean = [sum(x[:, j]) / n for j in range(x.shape[1])]
    var = [sum((x[i, j] - mean[j]) ** 2 for i in range(n)) / n for j in range(x.shape[1])]
    return np.array(mean), np.sqrt(np.array(var))


def central_diff(f, x, h=1e-5):
    """Gradient of scalar f at array x by central differences (x restored)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def rank1_bruteforce(values, gallery_labels, probe_labels):
    hits = 0
    g, p = values.shape
    for j in range(p):
        best = 0
        for i in range(1, g):
            if values[i, j] > values[best, j]:
                best = i
        hits += gallery_labels[best] == probe_labels[j]
    return hits / p


def vr_at_far_bruteforce(values, gallery_labels, probe_labels, target):
    """Best VR over all thresholds t (accept s >= t) whose FAR <= target."""
    genuine, impostor = [], []
    g, p = values.shape
    for i in range(g):
        for j in range(p):
            (genuine if gallery_labels[i] == probe_labels[j] else impostor).append(values[i, j])
    best = 0.0
    for t in sorted(set(values.ravel().tolist())) + [math.inf]:
        far = sum(s >= t for s in impostor) / len(impostor)
        vr = sum(s >= t for s in genuine) / len(genuine)
        if far <= target:
            best = max(best, vr)
    return best
