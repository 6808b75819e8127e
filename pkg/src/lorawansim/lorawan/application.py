"""Application-layer plug-in point, multiplexed by FPort."""

from __future__ import annotations

import abc

APP_PORT_MIN = 1
APP_PORT_MAX = 223


class Application(abc.ABC):
    """Handler bound to one FPort (1..223).

    Server-side applications receive uplinks via :meth:`on_uplink`;
    device-side applications receive downlinks via :meth:`on_downlink`.
    Subclasses override whichever side they live on.
    """

    @abc.abstractmethod
    def port(self) -> int:
        """FPort this application is registered on."""

    async def on_uplink(self, dev_addr: int, payload: bytes) -> None:
        pass

    async def on_downlink(self, payload: bytes) -> None:
        pass


def check_app_port(port: int) -> int:
    if not APP_PORT_MIN <= port <= APP_PORT_MAX:
        raise ValueError(
            f"application FPort must be {APP_PORT_MIN}..{APP_PORT_MAX}, got {port}")
    return port
