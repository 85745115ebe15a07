from .service import SweepService

__all__ = [SweepService]
