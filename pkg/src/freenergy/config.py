"""Flat key=value run configuration with section headers.

Unknown sections or keys are rejected outright so a typo never silently
falls back to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

FRAMEWORKS = ("pc", "pc_graph", "ngc", "bcdim", "backprop")
TASKS = ("classify", "generate", "associative")

# section -> key -> (type, default); None default means required.
_SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "framework": (str, None),
        "task": (str, None),
        "seed": (int, 0),
        "epochs": (int, 1),
        "batch_size": (int, 1),
    },
    "model": {
        "dims": ("ints", None),
        "activation": (str, "tanh"),
    },
    "inference": {
        "gamma": (float, 0.1),
        "iterations": (int, 50),
        "tol": (float, 0.0),
        "backtracking": (bool, False),
        "alpha": (float, 0.01),
        "schedule": (str, "standard"),
        "beta": (float, 0.1),
        "leak": (float, 0.0),
        "gamma_e": (float, 0.9),
        "eps1": (float, 1e-6),
        "eps2": (float, 1e-6),
        "scaling": (bool, False),
        "dampening": (str, "ones"),
        "head": (str, "squared_error"),
    },
    "data": {
        "source": (str, None),  # idx | synth
        "train_images": (str, ""),
        "train_labels": (str, ""),
        "test_images": (str, ""),
        "test_labels": (str, ""),
        "train_limit": (int, 0),  # 0 = all
        "test_limit": (int, 0),
        "kind": (str, "random_sign"),
        "n": (int, 0),
        "n_test": (int, 0),
        "pattern_dims": (int, 0),
        "data_seed": (int, 0),
    },
    "corruption": {
        "kind": (str, "mask_fraction"),
        "fraction": (float, 0.25),
        "seed": (int, 0),
    },
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a run needs, validated against the schema above."""

    framework: str
    task: str
    seed: int
    epochs: int
    batch_size: int
    dims: list[int]
    activation: str
    inference: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    corruption: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"unknown framework {self.framework!r}; choose from {FRAMEWORKS}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        compatible = {
            "pc": ("classify", "generate"),
            "pc_graph": ("associative",),
            "ngc": ("generate",),
            "bcdim": ("generate",),
            "backprop": ("classify",),
        }
        if self.task not in compatible[self.framework]:
            raise ConfigError(
                f"framework {self.framework!r} does not support task {self.task!r} "
                f"(supported: {compatible[self.framework]})"
            )


def _convert(section: str, key: str, raw: str):
    typ, _ = _SCHEMA[section][key]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "ints":
            return [int(v) for v in raw.replace(" ", "").split(",") if v]
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def parse_config(path, seed_override: Optional[int] = None) -> RunConfig:
    """Parse and validate a config file; --seed on the CLI wins over the file."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[section][key] = _convert(section, key, raw)

    def resolved(section: str) -> dict:
        out = {}
        for key, (_, default) in _SCHEMA[section].items():
            if key in values.get(section, {}):
                out[key] = values[section][key]
            elif default is None:
                raise ConfigError(f"missing required key {key!r} in section [{section}]")
            else:
                out[key] = default
        return out

    run = resolved("run")
    model = resolved("model")
    inference = resolved("inference")
    data = resolved("data")
    corruption = resolved("corruption")

    if data["source"] not in ("idx", "synth"):
        raise ConfigError(f"[data] source must be 'idx' or 'synth', got {data['source']!r}")

    seed = seed_override if seed_override is not None else run["seed"]
    return RunConfig(
        framework=run["framework"],
        task=run["task"],
        seed=seed,
        epochs=run["epochs"],
        batch_size=run["batch_size"],
        dims=model["dims"],
        activation=model["activation"],
        inference=inference,
        data=data,
        corruption=corruption,
    )
