from .manifest import RunManifest
from .moment_gain.service import MomentGainService
from .oracle.service import OracleService
from .run.service import RunService
from .sweep.service import SweepService

__all__ = [
    MomentGainService,
    OracleService,
    RunManifest,
    RunService,
    SweepService,
]
