"""Flexible-load (cryptominer) participation in frequency-regulation markets.

Day-ahead Reg-Up/Reg-Down clearing, real-time regulation dispatch, an aggregate
grid-frequency model, mining economics and a historical-data pipeline.
"""

from minereg.errors import ContractViolation, MineregError, ValidationError

__version__ = "0.1.0"

__all__ = ["ContractViolation", "MineregError", "ValidationError", "__version__"]
