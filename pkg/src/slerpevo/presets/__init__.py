"""Named configuration bundles for the CLI.

A preset collects the schedule, architecture, training, data, and experiment
parameters that belong together at one scale. `desk` fits a single CPU;
`paper` mirrors the published MNIST setup. The JSON files live alongside
this module.
"""

import json
from importlib import resources
from pathlib import Path

from ..denoiser import ArchConfig, TrainConfig
from ..errors import ConfigurationError
from ..schedule import NoiseSchedule, linear_schedule

BUNDLED = ("desk", "full")


def load_preset(name_or_path: str) -> dict:
    """Load a bundled preset by name, or any JSON file by path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        if name_or_path not in BUNDLED:
            raise ConfigurationError(
                f"unknown preset {name_or_path!r}; bundled presets: {', '.join(BUNDLED)}")
        text = resources.files(__package__).joinpath(f"{name_or_path}.json").read_text()
    preset = json.loads(text)
    for key in ("schedule", "arch", "train"):
        if key not in preset:
            raise ConfigurationError(f"preset is missing the {key!r} section")
    return preset


def preset_schedule(preset: dict) -> NoiseSchedule:
    s = preset["schedule"]
    return linear_schedule(s["T"], s["beta_start"], s["beta_end"])


def preset_arch(preset: dict) -> ArchConfig:
    return ArchConfig.from_dict(preset["arch"])


def preset_train(preset: dict, **overrides) -> TrainConfig:
    params = dict(preset["train"])
    params.update({k: v for k, v in overrides.items() if v is not None})
    # an epochs override below the preset's checkpoint cadence shrinks the
    # cadence rather than rejecting the config
    epochs = params.get("epochs", 0)
    if epochs > 0:
        params["checkpoint_interval"] = min(params.get("checkpoint_interval", 0), epochs)
    return TrainConfig(**params)
