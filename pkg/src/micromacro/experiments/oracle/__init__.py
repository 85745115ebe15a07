from .service import OracleService

__all__ = [OracleService]
