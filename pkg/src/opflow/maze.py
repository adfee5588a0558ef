"""Grid mazes, exploratory trajectory data and planning by inpainting.

Cell (row r, column c) of the bitmap covers [c, c+1] x [r, r+1] in the
continuous frame, so a point (x, y) lies in cell (floor(y), floor(x)).
Trajectories are arrays of shape (50, 2) and are flattened to d = 100 as
``[x_1, y_1, x_2, y_2, ...]`` for the interpolant.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import DisconnectedMaze, NoValidPath
from .paths import inpainting_path
from .sampler import IntegrationConfig, generate

N_POINTS = 50
WINDOW = 300
STRIDE = 6
N_SUB = 6
CANDIDATES = (5, 10, 20, 30, 40, 45, 50)
# power of two, so world <-> model coordinates round-trip exactly
SCALE = 0.25


@dataclass(frozen=True, eq=False)
class MazeGrid:
    walls: np.ndarray  # (H, W) bool, True = wall

    def __post_init__(self):
        w = np.array(self.walls, dtype=bool)
        if w.ndim != 2 or not w.size:
            raise ValueError("maze bitmap must be a non-empty 2D array")
        w.setflags(write=False)
        object.__setattr__(self, "walls", w)
        if not w.all() and len(components(w)) != 1:
            raise DisconnectedMaze(f"free cells form {len(components(w))} components")
        if w.all():
            raise DisconnectedMaze("maze has no free cell")

    @property
    def shape(self):
        return self.walls.shape

    @property
    def width(self):
        return self.walls.shape[1]

    @property
    def height(self):
        return self.walls.shape[0]

    @property
    def center(self):
        return (self.width / 2, self.height / 2)

    def free_cells(self) -> np.ndarray:
        """(row, col) pairs of free cells."""
        return np.argwhere(~self.walls)

    def is_free(self, x: float, y: float) -> bool:
        if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
            return False
        return not self.walls[min(int(y), self.height - 1), min(int(x), self.width - 1)]

    def to_text(self) -> str:
        return "\n".join("".join("#" if v else "." for v in row) for row in self.walls) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MazeGrid":
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if len({len(r) for r in rows}) != 1:
            raise ValueError("maze rows have different lengths")
        bad = set("".join(rows)) - {"#", "."}
        if bad:
            raise ValueError(f"unexpected maze characters {sorted(bad)}")
        return cls(np.array([[c == "#" for c in r] for r in rows]))

    @classmethod
    def load(cls, path) -> "MazeGrid":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


def components(walls) -> list[list[tuple[int, int]]]:
    """4-connected components of the free cells."""
    walls = np.asarray(walls, dtype=bool)
    H, W = walls.shape
    seen = np.zeros_like(walls)
    comps = []
    for r0, c0 in np.argwhere(~walls):
        if seen[r0, c0]:
            continue
        comp = []
        queue = deque([(int(r0), int(c0))])
        seen[r0, c0] = True
        while queue:
            r, c = queue.popleft()
            comp.append((r, c))
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < H and 0 <= cc < W and not walls[rr, cc] and not seen[rr, cc]:
                    seen[rr, cc] = True
                    queue.append((rr, cc))
        comps.append(comp)
    return comps


def generate_maze(size: int = 9, rng: np.random.Generator | None = None, braid: float = 0.5) -> MazeGrid:
    """Recursive-backtracker maze on an odd ``size`` bitmap.

    Logical cells sit at odd coordinates and corridors are one cell wide.
    Afterwards each remaining interior wall cell that separates two corridor
    cells is removed with probability ``braid``, which adds loops.
    """
    if size < 3 or size % 2 == 0:
        raise ValueError("maze size must be odd and at least 3")
    rng = rng or np.random.default_rng()
    n = (size - 1) // 2
    walls = np.ones((size, size), dtype=bool)
    visited = np.zeros((n, n), dtype=bool)
    stack = [(int(rng.integers(n)), int(rng.integers(n)))]
    visited[stack[0]] = True
    walls[2 * stack[0][0] + 1, 2 * stack[0][1] + 1] = False
    while stack:
        r, c = stack[-1]
        nbrs = [(r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= r + dr < n and 0 <= c + dc < n and not visited[r + dr, c + dc]]
        if not nbrs:
            stack.pop()
            continue
        rr, cc = nbrs[int(rng.integers(len(nbrs)))]
        visited[rr, cc] = True
        walls[r + rr + 1, c + cc + 1] = False
        walls[2 * rr + 1, 2 * cc + 1] = False
        stack.append((rr, cc))
    for r in range(1, size - 1):
        for c in range(1, size - 1):
            if not walls[r, c] or (r % 2 == 1 and c % 2 == 1):
                continue
            between_rows = r % 2 == 0 and c % 2 == 1
            between_cols = r % 2 == 1 and c % 2 == 0
            if (between_rows or between_cols) and rng.random() < braid:
                walls[r, c] = False
    return MazeGrid(walls)


# data collection -------------------------------------------------------------


class TrajectoryPool(NamedTuple):
    trajectories: np.ndarray  # (n, 50, 2), world coordinates
    starts: np.ndarray  # dense start index of each kept window
    n_windows: int
    n_discarded: int
    dense: np.ndarray  # the full walker trajectory

    @property
    def kept_fraction(self) -> float:
        return 1.0 - self.n_discarded / max(self.n_windows, 1)


def random_walk(maze: MazeGrid, n_steps: int, rng: np.random.Generator, speed=0.15, margin=0.2, turn=0.2, start=None):
    """Wall-avoiding momentum walk of ``n_steps`` steps from a free cell centre."""
    if start is None:
        cells = maze.free_cells()
        r, c = cells[rng.integers(len(cells))]
        start = (c + 0.5, r + 0.5)
    normals = rng.standard_normal(n_steps)
    uniforms = rng.random(max(n_steps, 1))
    return kernels.walk(np.ascontiguousarray(maze.walls), np.asarray(start, dtype=float), float(speed), float(margin), float(turn), normals, uniforms)


def collect_dataset(
    maze: MazeGrid,
    n_steps: int,
    rng: np.random.Generator,
    n_windows: int | None = None,
    speed: float = 0.15,
    margin: float = 0.2,
    turn: float = 0.2,
) -> TrajectoryPool:
    """Extract sparse 50-point trajectories from one long exploratory walk.

    Windows of 300 consecutive positions start at random offsets and are
    subsampled every 6th point. Windows whose piecewise-linear sparse path
    touches a wall are dropped.
    """
    if len(components(maze.walls)) != 1:
        raise DisconnectedMaze("free cells are not connected")
    if n_steps < WINDOW:
        raise ValueError(f"need at least {WINDOW} steps")
    dense = random_walk(maze, n_steps, rng, speed, margin, turn)
    n_windows = n_windows or max(1, n_steps // 10)
    starts = rng.integers(0, dense.shape[0] - WINDOW + 1, size=n_windows)
    idx = starts[:, None] + STRIDE * np.arange(N_POINTS)[None, :]
    sparse = dense[idx]
    ok = kernels.first_violation(np.ascontiguousarray(maze.walls), np.ascontiguousarray(sparse), N_SUB) < 0
    return TrajectoryPool(sparse[ok], starts[ok], n_windows, int((~ok).sum()), dense)


# validation and planning -----------------------------------------------------


def validate_paths(maze: MazeGrid, trajectories) -> np.ndarray:
    """First violating supersample index per trajectory, or -1 when valid."""
    t = np.asarray(trajectories, dtype=float)
    if t.ndim == 2:
        t = t.reshape(1, -1, 2) if t.shape[-1] != 2 else t[None]
    return kernels.first_violation(np.ascontiguousarray(maze.walls), np.ascontiguousarray(t), N_SUB)


def validate_path(maze: MazeGrid, trajectory):
    """``(True, None)`` if every segment stays in free space, else ``(False, (x, y))``.

    Each segment is checked at its start and at 6 interior points.
    """
    t = np.asarray(trajectory, dtype=float).reshape(-1, 2)
    k = int(validate_paths(maze, t[None])[0])
    if k < 0:
        return True, None
    seg, j = divmod(k, N_SUB + 1)
    if seg == t.shape[0] - 1:
        return False, (float(t[-1, 0]), float(t[-1, 1]))
    p = t[seg] + j / (N_SUB + 1) * (t[seg + 1] - t[seg])
    return False, (float(p[0]), float(p[1]))


def to_model(traj, center=(0.0, 0.0)) -> np.ndarray:
    """World trajectories (..., 50, 2) to centred, scaled model vectors (..., 100)."""
    t = np.asarray(traj, dtype=float) - np.asarray(center, dtype=float)
    return t.reshape(*t.shape[:-2], -1) * SCALE


def from_model(x, center=(0.0, 0.0)) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x / SCALE).reshape(*x.shape[:-1], -1, 2) + np.asarray(center, dtype=float)


def pinned_coordinates(goal_index: int) -> list[int]:
    """Flattened coordinates pinned for start at point 1 and goal at ``goal_index`` (1-based)."""
    g = goal_index - 1
    return [0, 1, 2 * g, 2 * g + 1]


def plan_many(model, maze: MazeGrid, starts, goals, seed: int = 0, steps: int = 100, candidates: Sequence[int] = CANDIDATES, eps: float = 0.0):
    """Plan a batch of (start, goal) pairs.

    Candidates are tried in increasing order; a pair keeps the first
    candidate whose trajectory is valid. Points after the goal index are
    set to the goal (the agent waits there), so the returned 50-point
    trajectory is valid exactly when its prefix is. Returns
    ``(trajectories, used)`` with ``used = 0`` for pairs with no valid plan.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    goals = np.atleast_2d(np.asarray(goals, dtype=float))
    n = starts.shape[0]
    d = 2 * N_POINTS
    out = np.zeros((n, N_POINTS, 2))
    used = np.zeros(n, dtype=int)
    todo = np.arange(n)
    for c in candidates:
        if not todo.size:
            break
        obs = np.zeros((todo.size, d))
        pin = pinned_coordinates(c)
        obs[:, pin[:2]] = to_model(starts[todo, None], maze.center)
        obs[:, pin[2:]] = to_model(goals[todo, None], maze.center)
        cfg = IntegrationConfig(steps=steps, eps=eps, noise="alpha_half", seed=int(np.random.SeedSequence([seed, c]).generate_state(1)[0]))
        x = generate(model, inpainting_path(d, pin), obs, cfg, n=todo.size)
        traj = from_model(x, maze.center)
        # the pinned model coordinates are exact; undo the centring round-off
        traj[:, 0] = starts[todo]
        traj[:, c - 1 :] = goals[todo, None]
        ok = validate_paths(maze, traj) < 0
        out[todo[ok]] = traj[ok]
        used[todo[ok]] = c
        todo = todo[~ok]
    return out, used


def plan(model, maze: MazeGrid, start, goal, seed: int = 0, steps: int = 100, candidates: Sequence[int] = CANDIDATES, eps: float = 0.0):
    """Plan from ``start`` to ``goal``; returns (trajectory (50, 2), goal index used).

    Raises :class:`NoValidPath` when every candidate index fails validation.
    """
    for p, name in ((start, "start"), (goal, "goal")):
        if not maze.is_free(*p):
            raise ValueError(f"{name} {tuple(p)} is not in free space")
    traj, used = plan_many(model, maze, [start], [goal], seed, steps, candidates, eps)
    if used[0] == 0:
        raise NoValidPath(f"no candidate index in {list(candidates)} gave a valid path")
    return traj[0], int(used[0])


def arc_length(traj) -> float:
    t = np.asarray(traj, dtype=float).reshape(-1, 2)
    return float(np.sum(np.linalg.norm(np.diff(t, axis=0), axis=1)))


def random_free_points(maze: MazeGrid, n: int, rng: np.random.Generator, jitter: float = 0.0) -> np.ndarray:
    """Free-cell centres, optionally shifted uniformly by up to ``jitter``."""
    cells = maze.free_cells()
    pick = cells[rng.integers(len(cells), size=n)]
    pts = pick[:, ::-1] + 0.5
    if jitter:
        pts = pts + rng.uniform(-jitter, jitter, size=pts.shape)
    return pts


def write_trajectory_csv(path, traj):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in np.asarray(traj).reshape(-1, 2):
            w.writerow([repr(float(x)), repr(float(y))])


def read_trajectory_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(a), float(b)] for a, b in rows[1:]])


def rasterize(maze: MazeGrid, trajectories, scale: int = 16) -> np.ndarray:
    """8-bit image: walls black, free cells light grey, trajectory samples white."""
    H, W = maze.shape
    img = np.where(np.repeat(np.repeat(maze.walls, scale, 0), scale, 1), 0, 160).astype(np.uint8)
    for t in np.asarray(trajectories, dtype=float).reshape(-1, N_POINTS, 2) if np.size(trajectories) else []:
        dense = np.concatenate([t[i] + np.linspace(0, 1, 8, endpoint=False)[:, None] * (t[i + 1] - t[i]) for i in range(len(t) - 1)] + [t[-1:]])
        px = np.clip((dense[:, 0] * scale).astype(int), 0, W * scale - 1)
        py = np.clip((dense[:, 1] * scale).astype(int), 0, H * scale - 1)
        img[py, px] = 255
    return img
