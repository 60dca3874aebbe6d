"""INI experiment configuration.

Sections map onto the runtime dataclasses:

    [data]     -> SyntheticConfig   (n_samples, timesteps, dim_language, ...)
    [train]    -> TrainConfig       (learning_rate, batch_size, ...)
    [dropout]  -> DropoutPolicy     (p_audio, p_language, p_visual, ...)
    [sweep]    -> levels, seeds, model

Unknown keys are rejected so typos fail loudly. CLI flags override file
values.
"""

from __future__ import annotations

import configparser
import dataclasses
from typing import Any

from .data import SyntheticConfig
from .dropout import DropoutPolicy
from .training import TrainConfig

EXAMPLE_CONFIG = """\
[data]
n_samples = 3000
timesteps = 12
dim_language = 16
dim_audio = 16
dim_visual = 16
num_classes = 4
snr_language = 1.5
snr_audio = 6.0
snr_visual = 0.0
seed = 0
task = classification

[train]
learning_rate = 0.0001
batch_size = 15
max_epochs = 40
hidden_size = 32
early_stop_patience = 7
plateau_factor = 0.5
plateau_patience = 3

[dropout]
p_audio = 0.8
p_language = 0.0
p_visual = 0.8
granularity = per_sequence
guard_all_dropped = false

[sweep]
model = bi_eflstm
levels = 0.0, 0.2, 0.4, 0.6, 0.8, 0.9
seeds = 0, 1, 2, 3, 4
"""


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    with open(path) as f:
        parser.read_file(f)
    return parser


def _coerce(field: dataclasses.Field, raw: str) -> Any:
    text = raw.strip()
    if field.type in ("int", int):
        return int(text)
    if field.type in ("float", float):
        return float(text)
    if field.type in ("bool", bool):
        if text.lower() in ("true", "yes", "1", "on"):
            return True
        if text.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"cannot read {text!r} as a boolean for {field.name}")
    if "float | None" in str(field.type):
        return None if text.lower() in ("none", "") else float(text)
    if "tuple" in str(field.type):
        if text.lower() in ("none", ""):
            return None
        return tuple(float(part) for part in text.replace(",", " ").split())
    return text


def _section_to_kwargs(parser: configparser.ConfigParser, section: str, cls) -> dict:
    if not parser.has_section(section):
        return {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in parser.items(section):
        if key not in known:
            raise KeyError(f"unknown key {key!r} in [{section}] (expected one of {sorted(known)})")
        kwargs[key] = _coerce(known[key], raw)
    return kwargs


def synthetic_config(parser: configparser.ConfigParser, **overrides) -> SyntheticConfig:
    kwargs = _section_to_kwargs(parser, "data", SyntheticConfig)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return SyntheticConfig(**kwargs)


def dropout_policy(parser: configparser.ConfigParser, **overrides) -> DropoutPolicy:
    kwargs = _section_to_kwargs(parser, "dropout", DropoutPolicy)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return DropoutPolicy(**kwargs)


def train_config(parser: configparser.ConfigParser, policy: DropoutPolicy | None = None, **overrides) -> TrainConfig:
    kwargs = _section_to_kwargs(parser, "train", TrainConfig)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if policy is not None:
        kwargs["dropout_policy"] = policy
    return TrainConfig(**kwargs)


def _parse_number_list(text: str) -> list[float]:
    return [float(part) for part in text.replace(",", " ").split()]


def sweep_settings(parser: configparser.ConfigParser) -> dict:
    """levels / seeds / model from [sweep], or empty when absent."""
    out: dict[str, Any] = {}
    if not parser.has_section("sweep"):
        return out
    section = parser["sweep"]
    if "levels" in section:
        out["levels"] = _parse_number_list(section["levels"])
    if "seeds" in section:
        out["seeds"] = [int(s) for s in _parse_number_list(section["seeds"])]
    if "model" in section:
        out["model"] = section["model"].strip()
    extra = set(section) - {"levels", "seeds", "model"}
    if extra:
        raise KeyError(f"unknown key(s) {sorted(extra)} in [sweep]")
    return out
