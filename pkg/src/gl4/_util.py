"""Small shared numerics/IO helpers. Internal."""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log x. x, y positive."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    slope, _ = np.linalg.lstsq(A, ly, rcond=None)[0]
    return float(slope)


def line_fit(x, y):
    """Least-squares (slope, intercept) of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    slope, intercept = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope), float(intercept)


def smoothstep5(u):
    """Quintic smoothstep: 0 for u<=0, 1 for u>=1, C^2 monotone in between."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


def smoothstep5_d(u):
    """First derivative of :func:`smoothstep5` with respect to u."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uu = np.clip(u, 0.0, 1.0)
    d = 30.0 * uu ** 2 * (1.0 - uu) ** 2
    return np.where(inside, d, 0.0)


def ramp(u, lo, hi):
    """Normalized position of u inside [lo, hi] (clipped)."""
    return np.clip((u - lo) / (hi - lo), 0.0, 1.0)


def trapz_weights(x):
    """Composite-trapezoid quadrature weights for an arbitrary 1-D grid."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def fmt17(x) -> str:
    """17-significant-digit decimal rendering used by every CSV emitter."""
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> None:
    """Write text to `path` via a temp file + rename (atomic on POSIX)."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gl4tmp-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def stable_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def thread_count() -> int:
    """Parallelism cap from GL4_THREADS (defaults to 1 = serial)."""
    raw = os.environ.get("GL4_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map fn over items honoring GL4_THREADS; preserves order."""
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
