from pathlib import Path
from typing import Any, Callable

import numpy as np
import pytest
import yaml

from micromacro.core.ensemble import WeightedEnsemble
from micromacro.core.space_model import ConfigurationSpace


@pytest.fixture
def torus() -> ConfigurationSpace:
    return ConfigurationSpace.torus()


@pytest.fixture
def real_line() -> ConfigurationSpace:
    return ConfigurationSpace.real_line()


@pytest.fixture
def uniform_ensemble(torus: ConfigurationSpace) -> WeightedEnsemble:
    """1000 equally weighted particles drawn uniformly on the torus."""
    rng = np.random.default_rng(1234)
    return WeightedEnsemble.uniform(rng.random(1000), torus)


@pytest.fixture
def base_config() -> dict[str, Any]:
    """Small, fast experiment configuration."""
    return {
        "model": {"label": "pure-diffusion"},
        "micro": {"window": 0.0125, "k": 5},
        "macro": {"dt": 0.025, "horizon": 0.05},
        "restriction": {"family": "trigonometric", "level": 2},
        "ensemble": {"j": 200, "seed": 7, "initial": {"kind": "uniform"}},
        "oracle": {"grid_m": 256, "dt_count": 4},
        "moment_gain": {
            "candidates": [
                {"kind": "sin", "order": 2},
                {"kind": "cos", "order": 2},
                {"kind": "bump", "center": 0.25, "width": 0.1},
            ]
        },
    }


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[..., Path]:
    def write(config: dict[str, Any], name: str = "experiment.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(config))
        return path

    return write
