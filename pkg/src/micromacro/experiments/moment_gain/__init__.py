from .service import MomentGainService

__all__ = [MomentGainService]
