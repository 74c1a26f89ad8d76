#!/usr/bin/env python3
"""
Configuration loader for fdnet runs.

Loads and validates the JSON files under config/ that set the loss weights,
the optimizer, the camera lookup table and the synthetic scene setup.
"""

import json
import os
from typing import Any, Dict, Optional

from fdnet.camera import reference_intrinsics
from fdnet.errors import ConfigError
from fdnet.losses import LossWeights
from fdnet.optim import OptimConfig
from fdnet.synth import BUILTIN_SCENES

REQUIRED_KEYS = {
    "loss": ["alpha", "beta", "gamma", "clip_percentile", "n_scales"],
    "optimizer": ["iterations", "step_size", "init_distance"],
    "camera": ["lut_entries"],
    "synth": ["n_frames", "step", "speed"],
}

_LOSS_KEYS = ("alpha", "beta", "gamma", "clip_percentile", "n_scales", "automask_warmup", "decay_smoothness")
_OPTIM_KEYS = ("iterations", "step_size", "init_distance", "optimize_log_distance", "seed", "init_jitter", "log_every",
               "tolerance", "patience")


class ConfigLoader:
    """Load and validate configuration from JSON files."""

    def __init__(self, config_path: str):
        """
        Load configuration from a JSON file.

        Args:
            config_path: Path to the JSON configuration file

        Raises:
            FileNotFoundError: If the configuration file doesn't exist
            ConfigError: If the configuration is invalid
        """
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_path, 'r') as f:
            try:
                self.config = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Configuration file {config_path} is not valid JSON: {e}")

        self.config_path = config_path
        self.validate_config()

    def validate_config(self):
        """
        Validate the configuration structure.

        Raises:
            ConfigError: If required sections or keys are missing
        """
        for section, keys in REQUIRED_KEYS.items():
            if section not in self.config:
                raise ConfigError(f"Missing required configuration section: {section}")
            for key in keys:
                if key not in self.config[section]:
                    raise ConfigError(f"Missing required key in {section}: {key}")

        # Build the typed views once so bad values fail at load time
        self.loss_weights()
        self.optim_config()
        if self.lut_entries() < 2:
            raise ConfigError(f"camera.lut_entries must be >= 2, got {self.lut_entries()}")
        if int(self.config["synth"]["n_frames"]) < 2:
            raise ConfigError(f"synth.n_frames must be >= 2, got {self.config['synth']['n_frames']}")

    def get_value(self, section: str, key: str, default: Optional[Any] = None) -> Any:
        """
        Get a configuration value with an optional default.

        Args:
            section: Configuration section name
            key: Configuration key within the section
            default: Default value to return if the key doesn't exist

        Returns:
            The configuration value or the default

        Raises:
            ConfigError: If the section or key doesn't exist and no default is provided
        """
        if section not in self.config:
            if default is not None:
                return default
            raise ConfigError(f"Configuration section not found: {section}")

        if key not in self.config[section]:
            if default is not None:
                return default
            raise ConfigError(f"Configuration key not found: {section}.{key}")

        return self.config[section][key]

    def get_section(self, section: str) -> Dict[str, Any]:
        if section not in self.config:
            raise ConfigError(f"Configuration section not found: {section}")

        return self.config[section]

    def loss_weights(self) -> LossWeights:
        section = self.config["loss"]
        return LossWeights(**{k: section[k] for k in _LOSS_KEYS if k in section})

    def optim_config(self) -> OptimConfig:
        section = self.config["optimizer"]
        values = {k: section[k] for k in _OPTIM_KEYS if k in section}
        return OptimConfig(weights=self.loss_weights(), lut_entries=self.lut_entries(), **values)

    def lut_entries(self) -> int:
        return int(self.config["camera"]["lut_entries"])

    def camera(self):
        """Reference fisheye camera at the configured resolution."""
        section = self.config["camera"]
        return reference_intrinsics(
            width=int(section.get("width", 64)),
            height=int(section.get("height", 40)),
            theta_max=float(section.get("theta_max", 1.745)),
        )

    def synth_settings(self) -> Dict[str, Any]:
        """
        Synthetic snippet settings with defaults filled in.

        Returns:
            Dict with scene, n_frames, step, speed, direction, channels, frame_interval.
            A relative scene path is resolved against the config file directory.
        """
        section = self.config["synth"]
        scene = section.get("scene", "default")
        if scene not in BUILTIN_SCENES and not os.path.isabs(scene):
            scene = os.path.join(os.path.dirname(os.path.abspath(self.config_path)), scene)
        return {
            "scene": scene,
            "n_frames": int(section["n_frames"]),
            "step": float(section["step"]),
            "speed": float(section["speed"]),
            "direction": [float(v) for v in section.get("direction", [1.0, 0.0, 0.0])],
            "channels": int(section.get("channels", 1)),
            "frame_interval": float(section.get("frame_interval", 0.1)),
        }

    def save_to_file(self, output_path: str):
        """
        Save the current configuration to a file.

        Args:
            output_path: Path to save the configuration to
        """
        with open(output_path, 'w') as f:
            json.dump(self.config, f, indent=2)

    def update_section(self, section: str, updates: Dict[str, Any]):
        """
        Update a configuration section with new values.

        Args:
            section: Configuration section name
            updates: Dictionary of updates to apply

        Raises:
            ConfigError: If the section doesn't exist or the result is invalid
        """
        if section not in self.config:
            raise ConfigError(f"Configuration section not found: {section}")

        self.config[section].update(updates)
        self.validate_config()
