"""Firmware-in-the-loop bridge.

Host-compiled firmware modules (shared objects with unresolved HAL
imports and an exported entry point) run on a dedicated OS thread per
instance.  The HAL symbols resolve against a process-global forwarding
library whose function pointers land in Python; dispatch to the right
instance happens through a thread-id registry, so one set of global C
symbols serves any number of firmware instances.

Firmware and kernel alternate through a two-slot rendezvous: the firmware
thread posts a HAL request and blocks; a mirror kernel task executes the
call in virtual time and posts the result.  Between HAL calls the mirror
blocks the kernel in wall-clock time, so virtual time never advances
while firmware code executes.
"""

from __future__ import annotations

import ctypes
import logging
import os
import queue
import shutil
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from ..kernel import Simulation, TaskCancelled
from ..phy import Radio, RadioConfig
from .build import build_provider

log = logging.getLogger(__name__)

DEFAULT_ENTRY_SYMBOL = "firmware_main"
DEFAULT_WATCHDOG_S = 10.0

LOADED = "loaded"
RUNNING = "running"
FINISHED = "finished"
FAULTED = "faulted"


class FirmwareLoadError(RuntimeError):
    """The module could not be loaded or is missing required symbols."""


class FirmwareStateError(RuntimeError):
    """An instance operation conflicts with its lifecycle state."""


class FirmwareWatchdogError(RuntimeError):
    """Firmware made no HAL call within the wall-clock watchdog limit."""


@dataclass(frozen=True)
class FirmwareImage:
    path: Path
    entry_symbol: str = DEFAULT_ENTRY_SYMBOL


class SimRadioConfigStruct(ctypes.Structure):
    """Mirror of sim_radio_config_t from the firmware HAL headers."""

    _fields_ = [
        ("frequency_hz", ctypes.c_uint32),
        ("bandwidth_hz", ctypes.c_uint32),
        ("spreading_factor", ctypes.c_uint8),
        ("coding_rate", ctypes.c_uint8),
        ("preamble_symbols", ctypes.c_uint8),
        ("iq_inverted", ctypes.c_uint8),
        ("tx_power_dbm", ctypes.c_int8),
    ]


# -- default HAL bindings (the per-instance binding table) -----------------


async def _hal_delay(instance: "FirmwareInstance", ms: int):
    await instance.sim.sleep(ms / 1000.0)
    return None


async def _hal_get_tick(instance: "FirmwareInstance"):
    return instance.sim.now_ms()


async def _radio_configure(instance: "FirmwareInstance", cfg: dict):
    instance.radio.set_config(RadioConfig(
        frequency_hz=cfg["frequency_hz"],
        sf=cfg["spreading_factor"],
        bw_hz=cfg["bandwidth_hz"],
        cr=cfg["coding_rate"],
        preamble_symbols=cfg["preamble_symbols"],
        iq_inverted=bool(cfg["iq_inverted"]),
        tx_power_dbm=float(cfg["tx_power_dbm"]),
    ))
    return None


async def _radio_transmit(instance: "FirmwareInstance", data: bytes):
    await instance.radio.transmit(data)
    return 0


async def _radio_receive(instance: "FirmwareInstance", buf_addr: int,
                         max_len: int, timeout_ms: int):
    reception = await instance.radio.receive(timeout_ms / 1000.0)
    if reception is None:
        return -1
    payload = reception.packet.payload
    n = min(len(payload), max_len)
    if n < len(payload):
        instance.truncation_count += 1
        log.warning("%s: receive buffer too small (%d < %d), truncating",
                    instance.name, max_len, len(payload))
    ctypes.memmove(buf_addr, payload, n)
    instance.received_log.append((instance.sim.now_s, payload))
    return n


def default_hal_bindings() -> Dict[str, Callable]:
    """The standard binding table: HAL symbol name -> shim coroutine."""
    return {
        "HAL_Delay": _hal_delay,
        "HAL_GetTick": _hal_get_tick,
        "SIM_RadioConfigure": _radio_configure,
        "SIM_RadioTransmit": _radio_transmit,
        "SIM_RadioReceive": _radio_receive,
    }


# -- provider loading and per-thread dispatch ----------------------------------

_DELAY_FN = ctypes.CFUNCTYPE(None, ctypes.c_uint32)
_GET_TICK_FN = ctypes.CFUNCTYPE(ctypes.c_uint32)
_CONFIGURE_FN = ctypes.CFUNCTYPE(None, ctypes.c_void_p)
_TRANSMIT_FN = ctypes.CFUNCTYPE(ctypes.c_int32, ctypes.POINTER(ctypes.c_uint8),
                                ctypes.c_uint32)
_RECEIVE_FN = ctypes.CFUNCTYPE(ctypes.c_int32, ctypes.POINTER(ctypes.c_uint8),
                               ctypes.c_uint32, ctypes.c_uint32)


class _VTable(ctypes.Structure):
    _fields_ = [
        ("delay", _DELAY_FN),
        ("get_tick", _GET_TICK_FN),
        ("radio_configure", _CONFIGURE_FN),
        ("radio_transmit", _TRANSMIT_FN),
        ("radio_receive", _RECEIVE_FN),
    ]


_thread_registry: Dict[int, "FirmwareInstance"] = {}
_provider_lib = None
_provider_callbacks = []  # keep CFUNCTYPE objects alive for the process


def _current_instance() -> Optional["FirmwareInstance"]:
    return _thread_registry.get(threading.get_ident())


def _cb_delay(ms):
    instance = _current_instance()
    if instance is not None:
        instance._hal_call("HAL_Delay", (int(ms),))


def _cb_get_tick():
    instance = _current_instance()
    if instance is None:
        return 0
    return int(instance._hal_call("HAL_GetTick", ())) & 0xFFFFFFFF


def _cb_configure(cfg_ptr):
    instance = _current_instance()
    if instance is None:
        return
    struct = ctypes.cast(cfg_ptr, ctypes.POINTER(SimRadioConfigStruct)).contents
    cfg = {name: getattr(struct, name) for name, _ in SimRadioConfigStruct._fields_}
    instance._hal_call("SIM_RadioConfigure", (cfg,))


def _cb_transmit(data_ptr, length):
    instance = _current_instance()
    if instance is None:
        return -1
    data = ctypes.string_at(data_ptr, length)
    return int(instance._hal_call("SIM_RadioTransmit", (data,)))


def _cb_receive(buf_ptr, max_len, timeout_ms):
    instance = _current_instance()
    if instance is None:
        return -1
    address = ctypes.cast(buf_ptr, ctypes.c_void_p).value
    return int(instance._hal_call(
        "SIM_RadioReceive", (address, int(max_len), int(timeout_ms))))


def _load_provider():
    """Compile and load the forwarding library (once per process)."""
    global _provider_lib
    if _provider_lib is not None:
        return
    so_path = build_provider()
    lib = ctypes.CDLL(str(so_path), mode=ctypes.RTLD_GLOBAL)
    vtable = _VTable.in_dll(lib, "sim_hal_vtable")
    callbacks = [_DELAY_FN(_cb_delay), _GET_TICK_FN(_cb_get_tick),
                 _CONFIGURE_FN(_cb_configure), _TRANSMIT_FN(_cb_transmit),
                 _RECEIVE_FN(_cb_receive)]
    (vtable.delay, vtable.get_tick, vtable.radio_configure,
     vtable.radio_transmit, vtable.radio_receive) = callbacks
    _provider_callbacks.extend(callbacks)
    _provider_lib = lib


# -- the rendezvous ------------------------------------------------------------------


class _HalRequest:
    __slots__ = ("name", "args", "result", "done")

    def __init__(self, name: str, args: tuple):
        self.name = name
        self.args = args
        self.result: Any = None
        self.done = threading.Event()


class _FirmwareFinished:
    def __init__(self, exit_code: int):
        self.exit_code = exit_code


class FirmwareInstance:
    """One loaded firmware module bound to one simulated radio."""

    def __init__(self, image: FirmwareImage, sim: Simulation,
                 bindings: Optional[Dict[str, Callable]] = None,
                 watchdog_s: float = DEFAULT_WATCHDOG_S):
        self.image = image
        self.sim = sim
        self.bindings = bindings or default_hal_bindings()
        self.watchdog_s = watchdog_s
        self.name = Path(image.path).stem
        self.state = LOADED
        self.radio: Optional[Radio] = None
        self.exit_code: Optional[int] = None
        self.received_log: list = []
        self.truncation_count = 0
        self._requests: "queue.Queue" = queue.Queue()
        self._thread: Optional[threading.Thread] = None
        self._mirror_task = None
        self._stopping = False
        self._lib, self._entry, self._tempdir = self._load(image)

    @staticmethod
    def _load(image: FirmwareImage):
        _load_provider()
        path = Path(image.path)
        if not path.exists():
            raise FirmwareLoadError(f"firmware module not found: {path}")
        # Load a private copy: dlopen dedups by inode, and a fresh copy
        # gives every instance its own globals.
        tempdir = tempfile.TemporaryDirectory(prefix="lorawansim-fw-")
        private = Path(tempdir.name) / path.name
        shutil.copy2(path, private)
        try:
            lib = ctypes.CDLL(str(private),
                              mode=os.RTLD_LOCAL | os.RTLD_NOW)
        except OSError as exc:
            message = str(exc)
            if "undefined symbol" in message:
                symbol = message.rsplit("undefined symbol:", 1)[-1].strip()
                raise FirmwareLoadError(
                    f"{path.name}: unresolved HAL import {symbol!r}; provide "
                    "a shim implementation for application-specific "
                    "peripherals") from None
            raise FirmwareLoadError(f"cannot load {path}: {message}") from None
        try:
            entry = getattr(lib, image.entry_symbol)
        except AttributeError:
            raise FirmwareLoadError(
                f"{path.name}: entry symbol {image.entry_symbol!r} not found"
            ) from None
        entry.restype = ctypes.c_int
        entry.argtypes = []
        return lib, entry, tempdir

    # -- lifecycle ------------------------------------------------------------

    def start(self, radio: Radio) -> None:
        """Run the firmware entry point, synchronized with virtual time."""
        if self.state != LOADED:
            raise FirmwareStateError(
                f"{self.name}: cannot start from state {self.state!r}")
        self.radio = radio
        self._thread = threading.Thread(
            target=self._thread_main, daemon=True,
            name=f"firmware-{self.name}")
        self._mirror_task = self.sim.spawn(
            self._mirror(), name=f"firmware-{self.name}")
        self.state = RUNNING

    def stop(self) -> None:
        """Release the instance; firmware parks at its next HAL call."""
        if self.state == LOADED:
            raise FirmwareStateError(f"{self.name}: not started")
        if self.state in (FINISHED, FAULTED):
            return
        self._stopping = True
        if self._mirror_task is not None:
            self.sim.cancel_task(self._mirror_task)
        self.state = FINISHED

    # -- firmware thread side -------------------------------------------------------

    def _thread_main(self) -> None:
        _thread_registry[threading.get_ident()] = self
        try:
            code = int(self._entry())
        except BaseException:  # pragma: no cover - native faults vary
            log.exception("%s: firmware entry raised", self.name)
            code = -1
        finally:
            _thread_registry.pop(threading.get_ident(), None)
        self._requests.put(_FirmwareFinished(code))

    def _park_forever(self) -> None:
        threading.Event().wait()  # daemon thread; never returns

    def _hal_call(self, name: str, args: tuple):
        if self._stopping:
            self._park_forever()
        request = _HalRequest(name, args)
        self._requests.put(request)
        request.done.wait()
        return request.result

    # -- kernel side ---------------------------------------------------------------

    def _next_request(self):
        """Block the kernel until the firmware's next HAL call.

        Virtual time is frozen during the wait: we are inside a task step,
        so the timer lock is held the whole time.
        """
        waited = 0.0
        while True:
            try:
                return self._requests.get(timeout=self.watchdog_s)
            except queue.Empty:
                waited += self.watchdog_s
                log.error(
                    "%s: no HAL call for %.0f s of wall time; firmware is "
                    "likely busy-looping without yielding", self.name, waited)
                self.state = FAULTED
                raise FirmwareWatchdogError(
                    f"{self.name}: firmware made no HAL call within "
                    f"{self.watchdog_s:.0f} s (wall time)") from None

    async def _mirror(self):
        self._thread.start()
        try:
            while True:
                request = self._next_request()
                if isinstance(request, _FirmwareFinished):
                    self.exit_code = request.exit_code
                    self.state = FINISHED
                    log.info("%s: firmware finished with code %d", self.name,
                             request.exit_code)
                    return
                handler = self.bindings.get(request.name)
                if handler is None:
                    raise FirmwareLoadError(
                        f"{self.name}: no binding for HAL call {request.name!r}")
                request.result = await handler(self, *request.args)
                request.done.set()
        except TaskCancelled:
            if self.state == RUNNING:
                self.state = FINISHED
            raise
        finally:
            self._stopping = True


def load_firmware(image: FirmwareImage, sim: Simulation,
                  bindings: Optional[Dict[str, Callable]] = None,
                  watchdog_s: float = DEFAULT_WATCHDOG_S) -> FirmwareInstance:
    """Load a host-compiled firmware module; returns it in state 'loaded'."""
    return FirmwareInstance(image, sim, bindings=bindings,
                            watchdog_s=watchdog_s)
