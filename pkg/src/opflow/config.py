"""Experiment configuration files.

One setting per line, ``section.key = value``; ``[section]`` headers prefix
the keys that follow. Values are JSON (numbers, strings, lists, objects,
true/false); anything that does not parse as JSON is taken as a bare
string. Lines starting with ``#`` and text after
`` #`` are comments. Unknown sections or keys are errors.
"""

from __future__ import annotations

import copy
import json

from .errors import ConfigError

DEFAULTS = {
    "": {"command": "validate-oracles", "seed": 0, "out": "out", "workers": 0},
    "coupling": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]], "data": None},
    "model": {"path": None},
    "train": {
        "batch_size": 256,
        "steps": 5000,
        "lr": 1e-3,
        "lr_decay": 0.5,
        "decay_every": 2000,
        "optimizer": "sgd",
        "nu": "uniform",
        "phases": [],
        "mode": "hadamard",
        "hidden": [256, 256, 256],
        "activation": "tanh",
        "skip": False,
        "arch": "mlp",
        "point_dim": 1,
        "dilations": [1, 2, 4, 8, 16],
        "compute": "float64",
        "log_every": 500,
    },
    "path": {"kind": "diagonal", "observed": [], "blocks": [], "csv": None},
    "integration": {"method": "ode", "steps": 200, "eps": 0.0, "noise": "standard", "t_start": 0.0, "t_end": 1.0, "n": 1000},
    "data": {"input": None},
    "reward": {"A": 0.0, "b": 0.0},
    "phi4": {
        "L": 8,
        "chi": 1.0,
        "kappa": -0.8,
        "gamma": 1.0,
        "beta0": 1.0,
        "kappa0": None,
        "h": 0.02,
        "dt": 0.01,
        "burn_in": 2000,
        "thin": 20,
        "n_samples": 20000,
        "n_chains": 200,
        "preconditioned": True,
        "n_gen": 20000,
        "gen_steps": 200,
        "t0": 1e-3,
    },
    "maze": {
        "file": None,
        "size": 9,
        "braid": 0.5,
        "n_steps": 400000,
        "n_windows": 40000,
        "speed": 0.15,
        "margin": 0.2,
        "turn": 0.2,
        "n_plans": 200,
        "plan_steps": 200,
        "plan_eps": 1.0,
        "data": None,
    },
    "pathopt": {"n_controls": 4, "n_particles": 2000, "n_quadrature": 20, "sweeps": 30, "step": 0.1, "perturb": 0.0},
    "oracles": {"n_mc": 1000000, "bins": 50},
}


# Per-command starting points, applied before the config file and --set.
COMMAND_DEFAULTS = {
    "maze-plan": {
        "train": {
            "arch": "conv",
            "point_dim": 2,
            "hidden": [64],
            "activation": "silu",
            "compute": "float32",
            "batch_size": 64,
            "steps": 16000,
            "lr": 2e-3,
            "optimizer": "adam",
            "decay_every": 4000,
            "nu": "maze",
        }
    },
    "phi4-posterior": {"train": {"skip": True, "optimizer": "adam", "steps": 3000, "decay_every": 750}},
}


def defaults(command: str | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    for sec, body in COMMAND_DEFAULTS.get(command, {}).items():
        cfg[sec].update(copy.deepcopy(body))
    return cfg


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse(text: str, source: str = "<config>", command: str | None = None) -> dict:
    cfg = defaults(command)
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in cfg:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        set_key(cfg, f"{section}.{key}" if section else key, _value(val), f"{source}:{lineno}")
    return cfg


def set_key(cfg: dict, dotted: str, value, where: str = "override"):
    sec, _, key = dotted.rpartition(".")
    if sec not in cfg:
        raise ConfigError(f"{where}: unknown section {sec!r}")
    if key not in cfg[sec]:
        raise ConfigError(f"{where}: unknown key {dotted!r}")
    cfg[sec][key] = value


def load(path, command: str | None = None) -> dict:
    with open(path) as fh:
        return parse(fh.read(), str(path), command)


def dump(cfg: dict) -> str:
    lines = []
    for sec, body in cfg.items():
        if sec:
            lines.append(f"\n[{sec}]")
        for k, v in body.items():
            lines.append(f"{k} = {json.dumps(v)}")
    return "\n".join(lines).lstrip("\n") + "\n"


def save(cfg: dict, path):
    with open(path, "w") as fh:
        fh.write(dump(cfg))
