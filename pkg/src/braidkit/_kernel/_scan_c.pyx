# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled crossing-scan kernel.

Arithmetic must stay bit-identical to ``scan_py.scan_crossings`` (same IEEE
operations, same order; built with -ffp-contract=off so no FMA fusion).
"""

from libc.stdlib cimport free, malloc

BACKEND = "cython"


def scan_crossings(double[::1] ts, double[::1] dx, double[::1] dy, double eps_x):
    """Compiled twin of ``scan_py.scan_crossings``; see there for semantics."""
    cdef Py_ssize_t n = ts.shape[0]
    cdef Py_ssize_t k, d, li, ri
    cdef double v, a, b, u, t0, t1, y0, y1

    cdef double* snapped = <double*> malloc(n * sizeof(double))
    cdef signed char* signs = <signed char*> malloc(n * sizeof(signed char))
    cdef signed char* resolved = <signed char*> malloc(n * sizeof(signed char))
    if snapped == NULL or signs == NULL or resolved == NULL:
        free(snapped)
        free(signs)
        free(resolved)
        raise MemoryError()

    try:
        for k in range(n):
            v = dx[k]
            if -eps_x < v < eps_x:
                snapped[k] = 0.0
                signs[k] = 0
            else:
                snapped[k] = v
                signs[k] = 1 if v > 0.0 else -1
            resolved[k] = signs[k]

        for k in range(n):
            if signs[k] != 0:
                continue
            d = 1
            while True:
                li = k - d
                ri = k + d
                if li >= 0 and signs[li] != 0:
                    resolved[k] = signs[li]
                    break
                if ri < n and signs[ri] != 0:
                    resolved[k] = signs[ri]
                    break
                if li < 0 and ri >= n:
                    break
                d += 1

        t_stars = []
        dy_at = []
        for k in range(n - 1):
            if resolved[k] == 0 or resolved[k + 1] == 0 or resolved[k] == resolved[k + 1]:
                continue
            a = snapped[k]
            b = snapped[k + 1]
            if a == 0.0:
                u = 0.0
            elif b == 0.0:
                u = 1.0
            else:
                u = a / (a - b)
            t0 = ts[k]
            t1 = ts[k + 1]
            y0 = dy[k]
            y1 = dy[k + 1]
            t_stars.append(t0 + (t1 - t0) * u)
            dy_at.append(y0 + (y1 - y0) * u)
        return t_stars, dy_at
    finally:
        free(snapped)
        free(signs)
        free(resolved)
