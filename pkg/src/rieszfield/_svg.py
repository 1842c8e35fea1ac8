"""Minimal self-contained SVG scatter writer.

Plots a projected point configuration with an optional support-boundary
overlay (drawn as small dots tracing the contour).  Everything else is
left to the exported CSV tables; this is a quick visual sanity check,
not a plotting library.
"""

from __future__ import annotations

import numpy as np

_W = 640
_H = 640
_PAD = 40


def _bbox(arrays):
    pts = np.concatenate([a for a in arrays if len(a)], axis=0)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    return lo, hi


def scatter_svg(path, points: np.ndarray, contour: np.ndarray | None = None, title: str = "") -> None:
    """Write a 2-D scatter with contour dots to an SVG file."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    contour = np.zeros((0, 2)) if contour is None else np.atleast_2d(np.asarray(contour, dtype=float))
    lo, hi = _bbox([points, contour])
    span = hi - lo
    scale = min((_W - 2 * _PAD) / span[0], (_H - 2 * _PAD) / span[1])

    def sx(x):
        return _PAD + (x - lo[0]) * scale

    def sy(y):
        return _H - _PAD - (y - lo[1]) * scale  # SVG y grows downward

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )
    for x, y in contour:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1" fill="#cc4444"/>')
    for x, y in points:
        parts.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="#33658a" '
            f'fill-opacity="0.85"/>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def project_points(X: np.ndarray) -> np.ndarray:
    """Ambient points to the 2-D plot plane: 1-D sets sit on the x-axis,
    higher-dimensional ambients drop to their first two coordinates."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] == 1:
        return np.column_stack([X[:, 0], np.zeros(len(X))])
    return X[:, :2]


def support_contour(cset, measure, resolution: int = 220) -> np.ndarray:
    """Ambient midpoints of parameter-grid edges where the support
    indicator flips; projected, they trace the support boundary."""
    bounds = cset.param_bounds
    if len(bounds) == 1:
        (a, b) = bounds[0]
        t = np.linspace(a, b, 40 * resolution)[:, None]
        ind = measure.support_indicator(cset.chart(t))
        flip = np.nonzero(ind[1:] != ind[:-1])[0]
        mids = cset.chart(0.5 * (t[flip] + t[flip + 1]))
        return project_points(mids)
    (a0, b0), (a1, b1) = bounds
    u = np.linspace(a0, b0, resolution)
    v = np.linspace(a1, b1, resolution)
    U, V = np.meshgrid(u, v, indexing="ij")
    P = np.column_stack([U.ravel(), V.ravel()])
    ind = measure.support_indicator(cset.chart(P)).reshape(resolution, resolution)
    segs = []
    fu = np.nonzero(ind[1:, :] != ind[:-1, :])
    if len(fu[0]):
        mid = np.column_stack([0.5 * (u[fu[0]] + u[fu[0] + 1]), v[fu[1]]])
        segs.append(mid)
    fv = np.nonzero(ind[:, 1:] != ind[:, :-1])
    if len(fv[0]):
        mid = np.column_stack([u[fv[0]], 0.5 * (v[fv[1]] + v[fv[1] + 1])])
        segs.append(mid)
    if not segs:
        return np.zeros((0, 2))
    return project_points(cset.chart(np.concatenate(segs, axis=0)))
