"""Firmware-in-the-loop: run real C firmware against simulator HAL shims."""

from .bridge import (
    DEFAULT_WATCHDOG_S,
    FirmwareImage,
    FirmwareInstance,
    FirmwareLoadError,
    FirmwareStateError,
    FirmwareWatchdogError,
    SimRadioConfigStruct,
    default_hal_bindings,
    load_firmware,
)
from .build import BuildError, build_provider, build_shared, find_compiler

__all__ = [
    "BuildError",
    "DEFAULT_WATCHDOG_S",
    "FirmwareImage",
    "FirmwareInstance",
    "FirmwareLoadError",
    "FirmwareStateError",
    "FirmwareWatchdogError",
    "SimRadioConfigStruct",
    "build_provider",
    "build_shared",
    "default_hal_bindings",
    "find_compiler",
    "load_firmware",
]
