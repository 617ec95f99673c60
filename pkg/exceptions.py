# exceptions.py
from typing import List

from fastapi import HTTPException, status

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class IpdSimError(Exception):
    """Base de toutes les erreurs du domaine"""
    exit_code = EXIT_DOMAIN

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class EnergyDomainError(IpdSimError):
    def __init__(self, voltage: float, v_max: float):
        super().__init__(f"Voltage {voltage!r} V outside [0, {v_max}] V")
        self.voltage = voltage


class ChargingStarvedError(IpdSimError):
    def __init__(self, what: str = "charging demand"):
        super().__init__(f"Charging starved: harvesting rate is zero while computing {what}")


class NeverReachesError(IpdSimError):
    def __init__(self, v_current: float, v_target: float):
        super().__init__(
            f"Capacitor never reaches {v_target:.4f} V from {v_current:.4f} V with zero harvesting"
        )


class InvalidTasksetError(IpdSimError):
    def __init__(self, violations: List[str]):
        super().__init__("Invalid taskset: " + "; ".join(violations))
        self.violations = violations


class ConfigurationError(IpdSimError):
    exit_code = EXIT_USAGE


class TasksetFileError(IpdSimError):
    exit_code = EXIT_USAGE

    def __init__(self, path: str, reason: str):
        super().__init__(f"Cannot load '{path}': {reason}")
        self.path = path


# ============================================================================
# ERREURS HTTP
# ============================================================================

class InvalidTasksetRequest(HTTPException):
    def __init__(self, violations: List[str]):
        super().__init__(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=violations
        )


class UnknownPolicy(HTTPException):
    def __init__(self, policy: str):
        super().__init__(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Policy '{policy}' not found"
        )
