"""Loop-heavy kernels with numba and numpy implementations.

The public names at the bottom resolve to the compiled versions unless
``OPFLOW_DISABLE_JIT`` is set; both variants are importable under the
``*_jit`` / ``*_numpy`` names so they can be compared directly.
"""

import math

import numpy as np

from ._accel import njit, pick

# lattice energy ------------------------------------------------------------


def lattice_terms_numpy(phi):
    """Per-field sums (sum over links of squared differences, sum phi^2, sum phi^4).

    ``phi`` has shape (n, L, L).
    """
    grad = np.zeros(phi.shape[0])
    for axis in (1, 2):
        diff = phi - np.roll(phi, -1, axis=axis)
        grad += np.sum(diff * diff, axis=(1, 2))
    sq = phi * phi
    return grad, np.sum(sq, axis=(1, 2)), np.sum(sq * sq, axis=(1, 2))


@njit
def lattice_terms_jit(phi):
    n, L, _ = phi.shape
    grad = np.zeros(n)
    sq = np.zeros(n)
    quart = np.zeros(n)
    for s in range(n):
        g = 0.0
        q2 = 0.0
        q4 = 0.0
        for i in range(L):
            ip = (i + 1) % L
            for j in range(L):
                jp = (j + 1) % L
                v = phi[s, i, j]
                dx = v - phi[s, ip, j]
                dy = v - phi[s, i, jp]
                g += dx * dx + dy * dy
                v2 = v * v
                q2 += v2
                q4 += v2 * v2
        grad[s] = g
        sq[s] = q2
        quart[s] = q4
    return grad, sq, quart


# maze walker ---------------------------------------------------------------


def _clear_numpy(walls, x, y, margin):
    H, W = walls.shape
    for cx in (x - margin, x + margin):
        for cy in (y - margin, y + margin):
            if cx < 0.0 or cy < 0.0 or cx >= W or cy >= H:
                return False
            if walls[int(cy), int(cx)]:
                return False
    return True


def walk_numpy(walls, start, speed, margin, turn, normals, uniforms):
    """Momentum random walk that never steps into a wall.

    Step k turns the heading by ``turn * normals[k]``. A step that would
    bring the clearance square of half-width ``margin`` into a wall or off
    the grid is reflected: the x component is flipped, then the y component,
    then both. If no reflection is clear the walker stays put and the
    heading is redrawn as ``2 pi uniforms[k]``.
    Returns the ``len(normals) + 1`` visited positions.
    """
    n = normals.shape[0]
    out = np.empty((n + 1, 2))
    x, y = float(start[0]), float(start[1])
    theta = 2.0 * math.pi * float(uniforms[0])
    out[0, 0], out[0, 1] = x, y
    for k in range(n):
        theta += turn * normals[k]
        c, s = math.cos(theta), math.sin(theta)
        moved = False
        for sx, sy in ((1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)):
            nx = x + speed * sx * c
            ny = y + speed * sy * s
            if _clear_numpy(walls, nx, ny, margin):
                x, y = nx, ny
                theta = math.atan2(sy * s, sx * c)
                moved = True
                break
        if not moved:
            theta = 2.0 * math.pi * uniforms[k]
        out[k + 1, 0], out[k + 1, 1] = x, y
    return out


@njit
def _clear_jit(walls, x, y, margin):
    H, W = walls.shape
    for a in range(2):
        cx = x - margin if a == 0 else x + margin
        for b in range(2):
            cy = y - margin if b == 0 else y + margin
            if cx < 0.0 or cy < 0.0 or cx >= W or cy >= H:
                return False
            if walls[int(cy), int(cx)]:
                return False
    return True


@njit
def walk_jit(walls, start, speed, margin, turn, normals, uniforms):
    n = normals.shape[0]
    out = np.empty((n + 1, 2))
    x = start[0]
    y = start[1]
    theta = 2.0 * math.pi * uniforms[0]
    out[0, 0] = x
    out[0, 1] = y
    for k in range(n):
        theta += turn * normals[k]
        c = math.cos(theta)
        s = math.sin(theta)
        moved = False
        for m in range(4):
            sx = -1.0 if m % 2 == 1 else 1.0
            sy = -1.0 if m >= 2 else 1.0
            nx = x + speed * sx * c
            ny = y + speed * sy * s
            if _clear_jit(walls, nx, ny, margin):
                x = nx
                y = ny
                theta = math.atan2(sy * s, sx * c)
                moved = True
                break
        if not moved:
            theta = 2.0 * math.pi * uniforms[k]
        out[k + 1, 0] = x
        out[k + 1, 1] = y
    return out


# segment validation ---------------------------------------------------------


def first_violation_numpy(walls, paths, n_sub):
    """Index of the first invalid sample along each polyline, or -1.

    Each segment between consecutive points is sampled at its start and at
    ``n_sub`` evenly spaced interior points; the final vertex is checked last.
    Sample j of segment i has flat index ``i * (n_sub + 1) + j``. A sample
    is invalid if it is outside [0, W] x [0, H] or inside a wall cell.
    """
    H, W = walls.shape
    n, P, _ = paths.shape
    frac = np.arange(n_sub + 1) / (n_sub + 1)
    seg = paths[:, :-1, None, :] + frac[None, None, :, None] * (paths[:, 1:, None, :] - paths[:, :-1, None, :])
    pts = np.concatenate([seg.reshape(n, -1, 2), paths[:, -1:, :]], axis=1)
    x, y = pts[..., 0], pts[..., 1]
    inside = (x >= 0.0) & (x <= W) & (y >= 0.0) & (y <= H) & np.isfinite(x) & np.isfinite(y)
    ix = np.clip(np.nan_to_num(x), 0, W - 1e-9).astype(int)
    iy = np.clip(np.nan_to_num(y), 0, H - 1e-9).astype(int)
    bad = ~inside | walls[iy, ix]
    first = np.argmax(bad, axis=1)
    return np.where(bad.any(axis=1), first, -1)


@njit
def _bad_point(walls, x, y):
    H, W = walls.shape
    if not (x >= 0.0 and x <= W and y >= 0.0 and y <= H):
        return True
    ix = min(int(x), W - 1)
    iy = min(int(y), H - 1)
    return walls[iy, ix]


@njit
def first_violation_jit(walls, paths, n_sub):
    n, P, _ = paths.shape
    out = np.full(n, -1, dtype=np.int64)
    for s in range(n):
        idx = 0
        found = False
        for i in range(P - 1):
            x0 = paths[s, i, 0]
            y0 = paths[s, i, 1]
            dx = paths[s, i + 1, 0] - x0
            dy = paths[s, i + 1, 1] - y0
            for j in range(n_sub + 1):
                f = j / (n_sub + 1)
                if _bad_point(walls, x0 + f * dx, y0 + f * dy):
                    out[s] = idx
                    found = True
                    break
                idx += 1
            if found:
                break
        if not found and _bad_point(walls, paths[s, P - 1, 0], paths[s, P - 1, 1]):
            out[s] = idx
    return out


lattice_terms = pick(lattice_terms_jit, lattice_terms_numpy)
walk = pick(walk_jit, walk_numpy)
first_violation = pick(first_violation_jit, first_violation_numpy)
