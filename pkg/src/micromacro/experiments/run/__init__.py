from .service import RunService, build_accel_config

__all__ = [RunService, build_accel_config]
