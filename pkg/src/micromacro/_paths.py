import os
from pathlib import Path

PROJECT_ROOT_PATH: Path = Path(__file__).parents[2]
local_data_path: Path = PROJECT_ROOT_PATH / "local_data"


def default_output_path() -> Path:
    """Output directory from `MICROMACRO_OUTPUT_DIR`, else `local_data/runs`."""
    return Path(os.environ.get("MICROMACRO_OUTPUT_DIR", local_data_path / "runs"))
