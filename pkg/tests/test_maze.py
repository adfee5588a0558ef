import numpy as np
import pytest

from opflow import maze
from opflow.errors import DisconnectedMaze, NoValidPath
from opflow.interpolant import GaussianGaussian, GaussianOracle

ROOM = maze.MazeGrid.from_text(
    """
#########
#.......#
#.......#
#.......#
###.#####
#.......#
#########
"""
)


def test_text_round_trip(tmp_path):
    ROOM.save(tmp_path / "m.txt")
    back = maze.MazeGrid.load(tmp_path / "m.txt")
    assert np.array_equal(back.walls, ROOM.walls)
    assert (back.width, back.height) == (9, 7)
    assert back.center == (4.5, 3.5)


def test_disconnected_and_bad_text():
    with pytest.raises(DisconnectedMaze):
        maze.MazeGrid.from_text("#####\n#.#.#\n#####\n")
    with pytest.raises(ValueError):
        maze.MazeGrid.from_text("##\n#.x\n")


def test_is_free():
    assert ROOM.is_free(1.5, 1.5)
    assert not ROOM.is_free(0.5, 0.5)
    assert not ROOM.is_free(-0.1, 1.5)
    assert ROOM.is_free(3.5, 4.5)


@pytest.mark.parametrize("seed", range(5))
def test_generated_maze_connected(seed):
    m = maze.generate_maze(9, np.random.default_rng(seed))
    assert m.walls.shape == (9, 9)
    assert m.walls[0].all() and m.walls[-1].all() and m.walls[:, 0].all() and m.walls[:, -1].all()
    assert len(maze.components(m.walls)) == 1


def test_generate_maze_deterministic():
    a = maze.generate_maze(9, np.random.default_rng(3))
    b = maze.generate_maze(9, np.random.default_rng(3))
    assert np.array_equal(a.walls, b.walls)
    with pytest.raises(ValueError):
        maze.generate_maze(8)


@pytest.fixture(scope="module")
def pool():
    m = maze.generate_maze(9, np.random.default_rng(0))
    return m, maze.collect_dataset(m, 30_000, np.random.default_rng(1), n_windows=2000)


def test_dataset_shapes(pool):
    m, p = pool
    assert p.trajectories.shape[1:] == (50, 2)
    assert len(p.trajectories) == p.n_windows - p.n_discarded


def test_dense_windows_avoid_walls(pool):
    m, p = pool
    cells = np.floor(p.dense).astype(int)
    assert not np.any(m.walls[cells[:, 1], cells[:, 0]])
    for s, t in zip(p.starts[:50], p.trajectories[:50]):
        np.testing.assert_array_equal(p.dense[s : s + 300 : 6], t)


def test_sparse_windows_valid(pool):
    m, p = pool
    assert p.kept_fraction >= 0.99
    assert np.all(maze.validate_paths(m, p.trajectories) < 0)


def test_collect_errors():
    disc = maze.MazeGrid.__new__(maze.MazeGrid)
    object.__setattr__(disc, "walls", np.array([[1, 1, 1, 1, 1], [1, 0, 1, 0, 1], [1, 1, 1, 1, 1]], dtype=bool))
    with pytest.raises(DisconnectedMaze):
        maze.collect_dataset(disc, 1000, np.random.default_rng(0))
    with pytest.raises(ValueError):
        maze.collect_dataset(ROOM, 100, np.random.default_rng(0))


def test_validate_path_examples():
    ok = np.array([[1.5, 1.5], [6.5, 1.5], [6.5, 3.5]])
    assert maze.validate_path(ROOM, ok) == (True, None)
    bad = np.array([[1.5, 3.5], [1.5, 5.5]])
    valid, where = maze.validate_path(ROOM, bad)
    assert not valid
    assert not ROOM.is_free(*where)
    assert where[0] == 1.5 and 4.0 <= where[1] < 5.0
    valid, where = maze.validate_path(ROOM, np.array([[1.5, 1.5], [1.5, 1.5], [10.0, 1.5]]))
    assert not valid


def test_model_transform_round_trip(rng):
    t = rng.uniform(0, 9, (3, 50, 2))
    x = maze.to_model(t, ROOM.center)
    assert x.shape == (3, 100)
    np.testing.assert_allclose(maze.from_model(x, ROOM.center), t, rtol=0, atol=1e-14)
    assert maze.pinned_coordinates(1) == [0, 1, 0, 1]
    assert maze.pinned_coordinates(50) == [0, 1, 98, 99]


def brownian_oracle(sigma=0.02, spread=3.0):
    """Gaussian trajectories whose conditional mean between pins is the straight segment."""
    i = np.arange(50)
    K = spread**2 + sigma**2 * np.minimum.outer(i, i)
    cov = np.kron(K, np.eye(2))
    return GaussianOracle(GaussianGaussian(np.zeros(100), cov))


def test_plan_start_equals_goal():
    src = brownian_oracle()
    p = np.array([2.5, 2.5])
    traj, used = maze.plan(src, ROOM, p, p, seed=0)
    assert used == 5
    assert np.all(traj[0] == p) and np.all(traj[4:] == p)
    assert maze.arc_length(traj) < 0.5


def test_plan_adjacent_cells_prefers_short_index():
    src = brownian_oracle()
    start, goal = np.array([2.5, 2.5]), np.array([3.5, 2.5])
    traj, used = maze.plan(src, ROOM, start, goal, seed=1)
    assert used == 5
    long, _ = maze.plan(src, ROOM, start, goal, seed=1, candidates=(50,))
    assert maze.arc_length(traj) < maze.arc_length(long)


def test_plan_returns_minimal_valid_candidate(monkeypatch):
    src = brownian_oracle(sigma=0.02)
    starts = np.array([[1.5, 1.5], [2.5, 2.5], [1.5, 3.5], [7.5, 1.5]])
    goals = np.array([[6.5, 2.5], [2.5, 2.5], [7.5, 2.5], [1.5, 3.5]])
    real = maze.validate_paths
    # pair i is declared invalid for its first i candidates: on each call
    # only the first pair still waiting passes
    calls = []

    def gate(m, trajs):
        out = real(m, trajs).copy()
        calls.append(len(trajs))
        out[1:] = 0
        return out

    monkeypatch.setattr(maze, "validate_paths", gate)
    traj, used = maze.plan_many(src, ROOM, starts, goals, seed=3)
    assert used.tolist() == list(maze.CANDIDATES[:4])
    assert calls == [4, 3, 2, 1]
    for t, s, g, u in zip(traj, starts, goals, used):
        assert real(ROOM, t[None])[0] < 0
        assert np.all(t[0] == s) and np.all(t[u - 1 :] == g)


def test_candidate_seeds_replay_alone():
    src = brownian_oracle(sigma=0.3)
    s, g = np.array([[1.5, 2.5]]), np.array([[6.5, 2.5]])
    traj, used = maze.plan_many(src, ROOM, s, g, seed=4, candidates=(20,))
    again, _ = maze.plan_many(src, ROOM, s, g, seed=4, candidates=(20,))
    both, _ = maze.plan_many(src, ROOM, s, g, seed=4, candidates=(5, 20))
    assert np.array_equal(traj, again)
    if used[0] == 20:
        assert np.array_equal(traj, both)


def test_plan_straight_line_blocked_raises():
    # straight segments cannot turn the corner through the doorway
    src = brownian_oracle(sigma=1e-4)
    with pytest.raises(NoValidPath):
        maze.plan(src, ROOM, np.array([1.5, 1.5]), np.array([1.5, 5.5]), seed=0)


def test_plan_rejects_wall_points():
    with pytest.raises(ValueError):
        maze.plan(brownian_oracle(), ROOM, np.array([0.5, 0.5]), np.array([1.5, 1.5]))


def test_plan_deterministic():
    src = brownian_oracle(sigma=0.1)
    s, g = np.array([1.5, 1.5]), np.array([7.5, 3.5])
    a = maze.plan(src, ROOM, s, g, seed=7)
    b = maze.plan(src, ROOM, s, g, seed=7)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_trajectory_csv_and_raster(tmp_path, rng):
    t = rng.uniform(1, 6, (50, 2))
    maze.write_trajectory_csv(tmp_path / "t.csv", t)
    assert np.array_equal(maze.read_trajectory_csv(tmp_path / "t.csv"), t)
    img = maze.rasterize(ROOM, t[None], scale=4)
    assert img.shape == (28, 36) and img.dtype == np.uint8
