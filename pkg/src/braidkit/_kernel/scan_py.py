"""Pure-Python crossing-scan kernel (fallback twin of ``_scan_c``).

Both backends must perform the same IEEE-double operations in the same order
so their outputs are bit-identical; keep any change here mirrored in
``_scan_c.pyx``.
"""

from __future__ import annotations

BACKEND = "python"


def scan_crossings(ts, dx, dy, eps_x):
    """Find sign-change crossings of the longitudinal gap ``dx`` over time.

    ``ts``/``dx``/``dy`` are equal-length float sequences holding sample
    times, x_i - x_j and y_i - y_j.  Samples with ``|dx| < eps_x`` snap to
    zero; a zero sample acts as a crossing boundary whose sign is taken from
    the nearest nonzero neighbor (ties resolve to the earlier sample).  Each
    detected sign change yields the linear-interpolation root of ``dx`` and
    ``dy`` interpolated there.

    Returns:
        (t_stars, dy_at_cross): parallel lists, in increasing time order.
    """
    n = len(ts)
    snapped = [0.0] * n
    signs = [0] * n
    for k in range(n):
        v = float(dx[k])
        if -eps_x < v < eps_x:
            snapped[k] = 0.0
            signs[k] = 0
        else:
            snapped[k] = v
            signs[k] = 1 if v > 0.0 else -1

    resolved = list(signs)
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
                break  # dx is identically ~0: no crossing decidable
            d += 1

    t_stars: list[float] = []
    dy_at: list[float] = []
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
        t0 = float(ts[k])
        t1 = float(ts[k + 1])
        y0 = float(dy[k])
        y1 = float(dy[k + 1])
        t_stars.append(t0 + (t1 - t0) * u)
        dy_at.append(y0 + (y1 - y0) * u)
    return t_stars, dy_at
