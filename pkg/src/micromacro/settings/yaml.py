"""YAML loading for experiment configurations with `${VAR:default}` placeholders."""

import os
import re
from collections.abc import Mapping
from pathlib import Path
from typing import Any, TextIO

from yaml import SafeLoader
from yaml.nodes import ScalarNode

PLACEHOLDER_TAG = "!placeholder"
_placeholder = re.compile(r"^\$\{(\w+)(?::(.*))?\}$")


class PlaceholderLoader(SafeLoader):
    """SafeLoader that resolves `${VAR}` and `${VAR:default}` scalars from `environ`."""

    environ: Mapping[str, str] = os.environ

    def expand(self, node: ScalarNode) -> str:
        found = _placeholder.match(str(node.value))
        if found is None:
            return str(node.value)
        name, default = found.groups()
        value = self.environ.get(name)
        if value is not None:
            return value
        if default is None:
            raise ValueError(
                f"Environment variable {name} is not set and no default value is provided"
            )
        return default


PlaceholderLoader.add_implicit_resolver(PLACEHOLDER_TAG, _placeholder, ["$"])
PlaceholderLoader.add_constructor(PLACEHOLDER_TAG, PlaceholderLoader.expand)


def load_yaml_with_envvars(stream: TextIO, environ: Mapping[str, str] = os.environ) -> Any:
    """
    Parse one YAML document, expanding placeholders against `environ`.

    The text after the first colon is the default of an unset variable. Expanded values
    stay strings; the settings model coerces them.

    Raises:
        ValueError: If a variable is unset and has no default.
    """
    loader = PlaceholderLoader(stream)
    loader.environ = environ
    try:
        return loader.get_single_data()
    finally:
        loader.dispose()


def load_yaml_file(path: Path, environ: Mapping[str, str] = os.environ) -> dict[str, Any]:
    """
    Read a configuration file holding a top-level mapping; an empty file gives {}.

    Raises:
        ValueError: If the file has content but no top-level mapping.
    """
    with Path(path).open("r") as f:
        config = load_yaml_with_envvars(f, environ)
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ValueError(f"Config file has no top-level mapping: {path}")
    return config
