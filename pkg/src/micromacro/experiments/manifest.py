from datetime import datetime
from typing import Any

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """
    Record of one command invocation.

    Attributes:
        command (str): Sub-command that was run.
        config_path (str): Configuration file given on the command line.
        config (dict[str, Any]): Echo of the validated settings, empty if they did not validate.
        version (str): Package version.
        seed (int | None): Root seed of the run.
        started_at (datetime): Start timestamp (UTC).
        finished_at (datetime | None): End timestamp (UTC).
        wall_time (float | None): Seconds between start and end.
        outputs (list[str]): Every file produced, in order.
        failures (list[str]): Failure notes.
        exit_status (int): Process exit status.
    """

    command: str
    config_path: str
    config: dict[str, Any] = Field(default_factory=dict)
    version: str
    seed: int | None = None
    started_at: datetime
    finished_at: datetime | None = None
    wall_time: float | None = None
    outputs: list[str] = Field(default_factory=list)
    failures: list[str] = Field(default_factory=list)
    exit_status: int = 0
