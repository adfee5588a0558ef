"""Command-line experiment runner.

    opflow <command> [--config FILE] [--seed N] [--out DIR] [--workers N] [--set section.key=value ...]

Every run writes ``resolved.cfg`` into the output directory; rerunning with
``--config out/resolved.cfg`` reproduces the outputs. Failures print a
single JSON line ``{"status": "error", ...}`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io, maze, pathopt, phi4, validation
from .drift_model import TrainConfig, train
from .errors import ConfigError, OpflowError
from .interpolant import GaussianGaussian, GaussianOracle, IndependentGaussianData
from .paths import blockwise_path, diagonal_path, inpainting_path
from .posterior import PosteriorDrifts, QuadraticReward, gaussian_posterior_oracle
from .sampler import IntegrationConfig, generate

log = logging.getLogger("opflow")

COMMANDS = (
    "train",
    "sample",
    "inpaint",
    "posterior",
    "phi4-mcmc",
    "phi4-posterior",
    "maze-collect",
    "maze-plan",
    "path-opt",
    "validate-oracles",
)


# builders ---------------------------------------------------------------------


def build_coupling(cfg):
    c = cfg["coupling"]
    if c["kind"] == "gaussian":
        return GaussianGaussian(np.atleast_1d(np.asarray(c["mean"], dtype=float)), np.atleast_2d(np.asarray(c["cov"], dtype=float)))
    if c["kind"] == "data":
        if not c["data"]:
            raise ConfigError("coupling.data must name a sample file")
        return IndependentGaussianData.from_file(c["data"])
    raise ConfigError(f"unknown coupling.kind {c['kind']!r}")


def train_config(cfg, seed) -> TrainConfig:
    t = dict(cfg["train"])
    t["hidden"] = tuple(t["hidden"])
    t["dilations"] = tuple(t["dilations"])
    t["phases"] = [tuple(p) for p in t["phases"]]
    return TrainConfig(seed=seed, **t)


def observed_indices(spec, dim):
    """Index list, or {"rle": [[flag, count], ...]} with flag 1 = observed."""
    if isinstance(spec, dict):
        flags = np.concatenate([np.full(int(n), bool(v)) for v, n in spec["rle"]]) if spec["rle"] else np.zeros(0, bool)
        if flags.size != dim:
            raise ConfigError(f"run-length mask covers {flags.size} entries, expected {dim}")
        return np.flatnonzero(flags).tolist()
    if spec == "all":
        return list(range(dim))
    return [int(i) for i in spec]


def build_path(cfg, dim):
    p = cfg["path"]
    if p["kind"] == "diagonal":
        return diagonal_path(dim)
    if p["kind"] == "inpainting":
        return inpainting_path(dim, observed_indices(p["observed"], dim))
    if p["kind"] == "blockwise":
        return blockwise_path(dim, p["blocks"])
    if p["kind"] == "tabulated":
        return pathopt.read_path_csv(p["csv"]).schedule()
    raise ConfigError(f"unknown path.kind {p['kind']!r}")


def integration_config(cfg, seed, pin=()) -> IntegrationConfig:
    i = cfg["integration"]
    return IntegrationConfig(i["steps"], i["eps"], i["noise"], tuple(pin), seed, i["t_start"], i["t_end"])


def drift_source(cfg, coupling=None):
    if cfg["model"]["path"]:
        return io.load_model(cfg["model"]["path"])
    coupling = coupling or build_coupling(cfg)
    if isinstance(coupling, GaussianGaussian):
        return GaussianOracle(coupling)
    raise ConfigError("model.path is required unless the coupling is Gaussian")


def reward_from(cfg):
    r = cfg["reward"]
    return QuadraticReward(np.asarray(r["A"], dtype=float), np.asarray(r["b"], dtype=float))


def phi4_params(cfg, h=None) -> phi4.Phi4Params:
    p = cfg["phi4"]
    return phi4.Phi4Params(p["L"], p["chi"], p["kappa"], p["gamma"], p["beta0"], p["kappa0"], p["h"] if h is None else h)


def maze_grid(cfg, seed):
    m = cfg["maze"]
    if m["file"]:
        return maze.MazeGrid.load(m["file"])
    return maze.generate_maze(m["size"], np.random.default_rng([seed, 7]), m["braid"])


# commands --------------------------------------------------------------------


def cmd_train(cfg, out, seed):
    coupling = build_coupling(cfg)
    model, losses = train(coupling, train_config(cfg, seed))
    io.save_model(out / "model.bin", model)
    io.write_loss_csv(out / "loss.csv", losses)
    return {"final_loss": float(np.mean(losses[-100:]))}


def _generate_from_input(cfg, out, seed, force_inpaint=False):
    coupling = None
    if cfg["data"]["input"]:
        x_obs = io.load_samples(cfg["data"]["input"])
    else:
        coupling = build_coupling(cfg)
        x_obs = coupling.sample_data(cfg["integration"]["n"], np.random.default_rng([seed, 3]))
    dim = x_obs.shape[1]
    if force_inpaint and cfg["path"]["kind"] != "inpainting":
        raise ConfigError("inpaint needs path.kind = \"inpainting\"")
    path = build_path(cfg, dim)
    if len(path.pinned) == dim:
        out_x = x_obs.copy()
    else:
        out_x = generate(drift_source(cfg, coupling), path, x_obs, integration_config(cfg, seed), n=x_obs.shape[0])
    io.save_samples(out / "samples.bin", out_x)
    io.save_samples_csv(out / "samples.csv", out_x)
    side = int(round(np.sqrt(dim)))
    if side * side == dim and dim > 1:
        io.write_pgm(out / "samples.pgm", io.tile_fields(out_x[:64].reshape(-1, side, side)))
    return {"n": int(out_x.shape[0]), "mean": out_x.mean(axis=0).tolist()}


def cmd_sample(cfg, out, seed):
    return _generate_from_input(cfg, out, seed)


def cmd_inpaint(cfg, out, seed):
    return _generate_from_input(cfg, out, seed, force_inpaint=True)


def cmd_posterior(cfg, out, seed):
    coupling = build_coupling(cfg)
    reward = reward_from(cfg)
    source = PosteriorDrifts(drift_source(cfg, coupling), reward)
    icfg = integration_config(cfg, seed)
    if icfg.t_start == 0.0:
        icfg = IntegrationConfig(icfg.steps, icfg.eps, icfg.noise, (), seed, 1e-3, icfg.t_end)
    n = cfg["integration"]["n"]
    x = generate(source, inpainting_path(coupling.dim, ()), np.zeros((n, coupling.dim)), icfg, n=n)
    io.save_samples(out / "samples.bin", x)
    rows = [{"stat": f"mean_{i}", "generated": float(v)} for i, v in enumerate(x.mean(axis=0))]
    rows += [{"stat": f"var_{i}", "generated": float(v)} for i, v in enumerate(x.var(axis=0, ddof=1))]
    if isinstance(coupling, GaussianGaussian):
        mr, Sr = gaussian_posterior_oracle(coupling.mean, coupling.cov, reward)
        ref = list(mr) + list(np.diag(Sr))
        for r, v in zip(rows, ref):
            r["reference"] = float(v)
    io.write_rows_csv(out / "moments.csv", rows, ["stat", "generated", "reference"] if "reference" in rows[0] else None)
    return {"mean": x.mean(axis=0).tolist()}


def _mcmc(cfg, params, seed, tag):
    p = cfg["phi4"]
    rng = np.random.default_rng([seed, tag])
    init = rng.standard_normal((p["n_chains"], params.L, params.L))
    return phi4.sample_mcmc(params, p["n_samples"], p["burn_in"], p["thin"], p["dt"], rng, p["n_chains"], p["preconditioned"], init, return_chains=True)


def cmd_phi4_mcmc(cfg, out, seed):
    params = phi4_params(cfg)
    fields, chains = _mcmc(cfg, params, seed, 11)
    io.save_samples(out / "configs.bin", fields.reshape(len(fields), -1))
    m = phi4.magnetization(fields)
    mean, se = phi4.chain_mean_se(m, chains)
    io.write_rows_csv(out / "magnetization.csv", [{"h": params.h, "mean": mean, "se": se, "var": float(m.var(ddof=1))}])
    io.write_pgm(out / "configs.pgm", io.tile_fields(fields[:64]))
    return {"magnetization": mean, "se": se}


def cmd_phi4_posterior(cfg, out, seed):
    p = cfg["phi4"]
    prior = phi4_params(cfg, h=0.0)
    if cfg["model"]["path"]:
        model = io.load_model(cfg["model"]["path"])
        pool = io.load_samples(cfg["coupling"]["data"]) if cfg["coupling"]["data"] else None
    else:
        fields, _ = _mcmc(cfg, prior, seed, 11)
        pool = fields.reshape(len(fields), -1)
        io.save_samples(out / "prior_configs.bin", pool)
        model, losses = train(IndependentGaussianData.from_array(pool), train_config(cfg, seed))
        io.save_model(out / "model.bin", model)
        io.write_loss_csv(out / "loss.csv", losses)
    mc = {k: p[k] for k in ("n_samples", "burn_in", "thin", "dt", "n_chains")}
    rows = []
    for h in sorted({0.0, float(p["h"])}):
        rows += phi4.phi4_posterior_experiment(model, prior, h, p["n_gen"], mc, p["gen_steps"], p["t0"], seed, pool)
    io.write_rows_csv(out / "report.csv", rows, ["h", *phi4.REPORT_FIELDS])
    return {"agree": all(r["agree"] for r in rows if r["observable"] == "magnetization_mean")}


def cmd_maze_collect(cfg, out, seed):
    m = cfg["maze"]
    grid = maze_grid(cfg, seed)
    pool = maze.collect_dataset(grid, m["n_steps"], np.random.default_rng([seed, 8]), m["n_windows"], m["speed"], m["margin"], m["turn"])
    grid.save(out / "maze.txt")
    io.save_samples(out / "pool.bin", pool.trajectories.reshape(len(pool.trajectories), -1))
    io.write_rows_csv(out / "collect.csv", [{"windows": pool.n_windows, "discarded": pool.n_discarded, "kept_fraction": pool.kept_fraction}])
    io.write_pgm(out / "pool.pgm", maze.rasterize(grid, pool.trajectories[:20]))
    return {"kept": int(len(pool.trajectories)), "kept_fraction": pool.kept_fraction}


def train_maze_model(cfg, grid, pool_world, seed):
    """``train.nu = "maze"`` mixes diagonal draws with draws pinning each planning prefix."""
    coupling = IndependentGaussianData.from_array(maze.to_model(pool_world.reshape(-1, maze.N_POINTS, 2), grid.center))
    tc = train_config(cfg, seed)
    if tc.nu == "maze":
        sets = [maze.pinned_coordinates(c) for c in maze.CANDIDATES]
        tc = replace(tc, nu={"kind": "mixture", "components": [[0.6, {"kind": "pinned", "sets": sets}], [0.4, "diagonal"]]})
    return train(coupling, tc)


def cmd_maze_plan(cfg, out, seed):
    m = cfg["maze"]
    grid = maze_grid(cfg, seed)
    if cfg["model"]["path"]:
        model = io.load_model(cfg["model"]["path"])
    else:
        if m["data"]:
            world = io.load_samples(m["data"])
        else:
            pool = maze.collect_dataset(grid, m["n_steps"], np.random.default_rng([seed, 8]), m["n_windows"], m["speed"], m["margin"], m["turn"])
            world = pool.trajectories
        model, losses = train_maze_model(cfg, grid, np.asarray(world), seed)
        io.save_model(out / "model.bin", model)
        io.write_loss_csv(out / "loss.csv", losses)
    rng = np.random.default_rng([seed, 9])
    starts = maze.random_free_points(grid, m["n_plans"], rng)
    goals = maze.random_free_points(grid, m["n_plans"], rng)
    traj, used = maze.plan_many(model, grid, starts, goals, seed, m["plan_steps"], eps=m["plan_eps"])
    valid = used > 0
    exact = np.all(traj[valid, 0] == starts[valid], axis=1) & np.all(traj[valid, np.maximum(used[valid] - 1, 0)] == goals[valid], axis=1)
    grid.save(out / "maze.txt")
    io.write_rows_csv(
        out / "plans.csv",
        [{"start_x": s[0], "start_y": s[1], "goal_x": g[0], "goal_y": g[1], "index": int(u)} for s, g, u in zip(starts.tolist(), goals.tolist(), used)],
    )
    io.save_samples(out / "plans.bin", traj.reshape(len(traj), -1))
    io.write_pgm(out / "plans.pgm", maze.rasterize(grid, traj[valid][:20]))
    return {"valid_fraction": float(valid.mean()), "pins_exact": bool(exact.all())}


def cmd_path_opt(cfg, out, seed):
    coupling = build_coupling(cfg)
    source = drift_source(cfg, coupling)
    o = cfg["pathopt"]
    d = coupling.dim
    init = pathopt.ParametricPath.straight(np.ones(d), np.zeros(d), o["n_controls"])
    if o["perturb"]:
        noise = np.random.default_rng([seed, 5]).uniform(-o["perturb"], o["perturb"], init.controls.shape)
        init = init.with_controls(init.controls + noise)
    ocfg = pathopt.OptimizerConfig(o["n_particles"], o["n_quadrature"], o["sweeps"], o["step"], seed=seed)
    best, trace = pathopt.optimize_path(init, source, coupling, ocfg)
    pathopt.write_path_csv(best, out / "path.csv")
    io.write_rows_csv(out / "trace.csv", [{"sweep": i, "objective": float(v)} for i, v in enumerate(trace)])
    return {"initial": float(trace[0]), "final": float(trace[-1])}


def cmd_validate_oracles(cfg, out, seed):
    o = cfg["oracles"]
    checks = validation.run_all(o["n_mc"], o["bins"])
    io.write_rows_csv(out / "oracles.csv", [{"check": c.name, "value": float(c.value), "tolerance": c.tolerance, "passed": c.passed} for c in checks])
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise ValidationFailed(f"oracle checks failed: {', '.join(failed)}")
    return {"checks": len(checks)}


class ValidationFailed(OpflowError):
    pass


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


# entry point ---------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="opflow", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    return ap


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = os.environ.get("OPFLOW_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config, args.command) if args.config else cfgmod.defaults(args.command)
        for item in args.set:
            key, _, val = item.partition("=")
            cfgmod.set_key(cfg, key.strip(), cfgmod._value(val.strip()), "--set")
        cfg[""]["command"] = args.command
        if args.seed is not None:
            cfg[""]["seed"] = args.seed
        if args.out is not None:
            cfg[""]["out"] = str(args.out)
        if args.workers is not None:
            cfg[""]["workers"] = args.workers
        seed = int(cfg[""]["seed"])
        out = Path(cfg[""]["out"])
        out.mkdir(parents=True, exist_ok=True)
        cfgmod.save(cfg, out / "resolved.cfg")
        t0 = time.time()
        summary = HANDLERS[args.command](cfg, out, seed)
        summary = {"status": "ok", "command": args.command, "seconds": round(time.time() - t0, 3), **summary}
        print(json.dumps(summary))
        return 0
    except ConfigError as exc:
        print(json.dumps({"status": "error", "type": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return 2
    except (OpflowError, ValueError, OSError) as exc:
        print(json.dumps({"status": "error", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
