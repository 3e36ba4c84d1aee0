"""Relay selection and scheduling for wireless-powered networks."""
from .model import (
    EhParams,
    GeometryConfig,
    NetworkInstance,
    SystemParams,
    harvest_rate,
    rate,
    sample_instance,
)
from .scheduler import InfeasibleError, Schedule, lambert_w0, nl_powmu, verify_schedule
from .selection import bba, enumerate_optimal, select

__version__ = "0.1.0"

__all__ = [
    "EhParams",
    "GeometryConfig",
    "InfeasibleError",
    "NetworkInstance",
    "Schedule",
    "SystemParams",
    "bba",
    "enumerate_optimal",
    "harvest_rate",
    "lambert_w0",
    "nl_powmu",
    "rate",
    "sample_instance",
    "select",
    "verify_schedule",
]
