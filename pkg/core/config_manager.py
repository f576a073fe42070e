# core/config_manager.py
"""
Run Configuration Manager
Builds RunConfig from built-in defaults, an optional key=value config file and
ROADINSPECT_* environment overrides (a .env file is honoured).
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from .block_format import dump_blocks, parse_blocks, sections_as_dict
from .config_models import RunConfig
from .errors import ConfigurationError, DecodeError

logger = logging.getLogger(__name__)

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:  # pragma: no cover
    logger.debug("python-dotenv not installed, using process environment only")

# [run] keys live at the top level of RunConfig
RUN_SECTION = "run"
NESTED_SECTIONS = ("network", "train", "augment", "servo", "plant", "camera", "detect", "sim")

ENV_OVERRIDES = {
    "ROADINSPECT_SEED": ("seed",),
    "ROADINSPECT_OUT": ("out_dir",),
    "ROADINSPECT_VARIANT": ("network", "variant"),
    "ROADINSPECT_INPUT_SIZE": ("train", "input_size"),
    "ROADINSPECT_SCENE": ("scene_path",),
}


class RunConfigManager:
    """Loads, overrides and saves run configurations"""

    def __init__(self, config_path: Optional[Union[str, Path]] = None, use_env: bool = True):
        self.config_path = Path(config_path) if config_path else None
        self.use_env = use_env

    def load(self, overrides: Optional[Dict[str, Any]] = None, full_scale: bool = False) -> RunConfig:
        """Defaults <- full scale <- file <- environment <- explicit overrides"""
        config = RunConfig().model_dump()

        if full_scale:
            self._deep_update(config, self.full_scale_values())

        if self.config_path is not None:
            if not self.config_path.exists():
                raise ConfigurationError(f"config file not found: {self.config_path}")
            self._deep_update(config, self._read_file(self.config_path))
            logger.info("config loaded from %s", self.config_path)

        if self.use_env:
            self._deep_update(config, self._env_values())

        if overrides:
            self._deep_update(config, overrides)

        try:
            return RunConfig.model_validate(config)
        except ValidationError as exc:
            raise ConfigurationError(f"invalid run configuration: {exc}") from exc

    @staticmethod
    def full_scale_values() -> Dict[str, Any]:
        """Full-scale training values (416 px, batch 64, 10k iterations)"""
        return {
            "dataset_size": 1000,
            "network": {"width": 1.0},
            "train": {
                "learning_rate": 0.001,
                "momentum": 0.9,
                "decay": 0.0005,
                "batch_size": 64,
                "subdivisions": 4,
                "iterations": 10000,
                "input_size": 416,
                "channels": 3,
                "checkpoint_interval": 1000,
            },
            "augment": {"saturation": 1.5, "exposure": 1.5, "hue": 0.1},
        }

    def save_config(self, config: RunConfig, path: Union[str, Path]) -> Path:
        """Write a config file that load() reads back to the same RunConfig"""
        data = config.model_dump(mode="json")
        blocks = [(RUN_SECTION, {k: v for k, v in data.items()
                                 if k not in NESTED_SECTIONS and v is not None})]
        for section in NESTED_SECTIONS:
            blocks.append((section, {k: v for k, v in data[section].items() if v is not None}))
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_blocks(blocks), encoding="utf-8")
        return path

    def _read_file(self, path: Path) -> Dict[str, Any]:
        try:
            sections = sections_as_dict(parse_blocks(path.read_text(encoding="utf-8")))
        except DecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc

        values: Dict[str, Any] = {}
        for section, entries in sections.items():
            if section in ("", RUN_SECTION):
                values.update(entries)
            elif section in NESTED_SECTIONS:
                values.setdefault(section, {}).update(entries)
            else:
                raise ConfigurationError(f"{path}: unknown section [{section}]")
        return values

    def _env_values(self) -> Dict[str, Any]:
        values: Dict[str, Any] = {}
        for env_name, key_path in ENV_OVERRIDES.items():
            raw = os.getenv(env_name)
            if raw is None or raw == "":
                continue
            target = values
            for key in key_path[:-1]:
                target = target.setdefault(key, {})
            target[key_path[-1]] = raw
            logger.debug("override %s from environment", ".".join(key_path))
        return values

    def _deep_update(self, base_dict: Dict[str, Any], updates: Dict[str, Any]) -> None:
        """Recursively update nested dictionary"""
        for key, value in updates.items():
            if isinstance(value, dict) and key in base_dict and isinstance(base_dict[key], dict):
                self._deep_update(base_dict[key], value)
            else:
                base_dict[key] = value
