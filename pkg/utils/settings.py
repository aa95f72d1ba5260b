"""
Settings management for Telemetry Incognito.

This module handles loading defense configuration files and the built-in
privacy-level presets.
"""
import copy
import json
from functools import lru_cache
from pathlib import Path

from src.core.errors import ConfigError
from utils.logging_utils import get_logger

logger = get_logger(__name__)

ROOT_DIR = Path(__file__).resolve().parent.parent

# Path to the default defense configuration
SETTINGS_FILE = ROOT_DIR / "settings.json"

# Path to the versioned built-in presets: epsilons, clamps and bounds per level
PRESETS_FILE = ROOT_DIR / "presets.json"

SUPPORTED_PRESET_VERSIONS = (1,)

# Default settings
DEFAULT_SETTINGS = {
    "level": "off",
    "features": None,  # None means every defense is enabled
    "overrides": {},
    "seed": 0,
    "rerandomize_per_session": True,
    "arm_ratio_mode": "corrected",
    "calibration": {
        "assumed_depth_m": 0.913,
        "default_pitch_hz": 170.0,
        "right_handed": True,
    },
}


def _read_json(path):
    """Read a JSON document, wrapping I/O and decode failures in ConfigError."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Settings file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from None
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from None


def load_settings(path=None):
    """
    Load a defense configuration file merged over DEFAULT_SETTINGS.

    Args:
        path (str | Path, optional): Config file. None loads settings.json when it
            exists and falls back to the defaults otherwise.

    Returns:
        dict: Settings dictionary with every default key present
    """
    result = copy.deepcopy(DEFAULT_SETTINGS)

    if path is None:
        if not SETTINGS_FILE.exists():
            return result
        path = SETTINGS_FILE

    settings = _read_json(path)
    if not isinstance(settings, dict):
        raise ConfigError(f"{path} must contain a JSON object, got {type(settings).__name__}")

    # Merge with defaults to ensure all keys exist
    calibration = dict(result["calibration"])
    calibration.update(settings.get("calibration") or {})
    result.update(settings)
    result["calibration"] = calibration

    logger.debug(f"Loaded settings from {path}")
    return result


@lru_cache(maxsize=None)
def _load_presets_cached(path_str):
    presets = _read_json(path_str)
    version = presets.get("version")
    if version not in SUPPORTED_PRESET_VERSIONS:
        raise ConfigError(f"Unsupported presets version {version!r} in {path_str}")
    for section in ("attributes", "clamps"):
        if section not in presets:
            raise ConfigError(f"Presets file {path_str} lacks the '{section}' section")
    return presets


def load_presets(path=None):
    """
    Load the built-in privacy presets.

    Returns:
        dict: A private copy of the presets document
    """
    return copy.deepcopy(_load_presets_cached(str(path or PRESETS_FILE)))
