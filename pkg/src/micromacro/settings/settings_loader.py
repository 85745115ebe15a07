import functools
import logging
import os
from pathlib import Path
from typing import Any, Iterable

from pydantic.v1.utils import deep_update, unique_list

from .._paths import PROJECT_ROOT_PATH
from .yaml import load_yaml_file

logger = logging.getLogger(__name__)


def settings_folder() -> Path:
    return Path(os.environ.get("MICROMACRO_SETTINGS_FOLDER", PROJECT_ROOT_PATH))


def active_profiles() -> list[str]:
    """
    Profiles requested through `MICROMACRO_PROFILES` (comma separated), in order.

    Returns:
        The de-duplicated list of profile names.
    """
    return unique_list(
        [
            item.strip()
            for item in os.environ.get("MICROMACRO_PROFILES", "").split(",")
            if item.strip()
        ]
    )


def merge_settings(settings: Iterable[dict[str, Any]]) -> dict[str, Any]:
    """
    Merge multiple settings dictionaries into a single dictionary.

    Later dictionaries win on conflicting leaves; nested sections are merged key by key.

    Args:
        settings: An iterable of dictionaries containing settings.

    Returns:
        A dictionary containing the merged settings.
    """
    return functools.reduce(deep_update, settings, {})


def load_settings_from_profile(profile: str) -> dict[str, Any]:
    """
    Load settings from a named profile file `settings-<profile>.yaml`.

    Args:
        profile: The name of the profile.

    Returns:
        A dictionary containing the settings for the specified profile.
    """
    path = settings_folder() / f"settings-{profile}.yaml"
    return load_yaml_file(path)


def load_experiment_settings(config_path: Path | str) -> dict[str, Any]:
    """
    Load the raw settings for one experiment.

    The experiment file given on the command line is the base; active profiles are
    merged over it in order, as profile files refine a base settings file.

    Args:
        config_path: Path of the experiment configuration.

    Returns:
        The merged, not yet validated, settings mapping.
    """
    profiles = active_profiles()
    logger.info(f"Loading {config_path} with profiles {profiles}")
    layers = [load_yaml_file(Path(config_path))]
    layers += [load_settings_from_profile(profile) for profile in profiles]
    merged: dict[str, Any] = merge_settings(layers)
    return merged
