"""Host-toolchain helpers for building loadable firmware modules."""

from __future__ import annotations

import logging
import shutil
import subprocess
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

log = logging.getLogger(__name__)


class BuildError(RuntimeError):
    pass


def find_compiler() -> Optional[str]:
    for name in ("cc", "gcc", "clang"):
        path = shutil.which(name)
        if path:
            return path
    return None


def require_compiler() -> str:
    compiler = find_compiler()
    if compiler is None:
        raise BuildError(
            "no host C compiler found (tried cc, gcc, clang); install one "
            "to build firmware modules")
    return compiler


def build_shared(sources: Sequence, out_path, extra_flags: Iterable[str] = ()) -> Path:
    """Compile C sources into a position-independent shared module."""
    compiler = require_compiler()
    out_path = Path(out_path)
    cmd = [compiler, "-shared", "-fPIC", "-O2", "-o", str(out_path),
           *map(str, sources), *extra_flags]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BuildError(
            f"compiler failed ({' '.join(cmd)}):\n{proc.stderr.strip()}")
    return out_path


_provider_dir: Optional[tempfile.TemporaryDirectory] = None
_provider_so: Optional[Path] = None


def build_provider() -> Path:
    """Compile (once per process) the HAL forwarding library."""
    global _provider_dir, _provider_so
    if _provider_so is not None and _provider_so.exists():
        return _provider_so
    source = Path(__file__).resolve().parent / "hal_provider.c"
    _provider_dir = tempfile.TemporaryDirectory(prefix="lorawansim-hal-")
    _provider_so = build_shared([source],
                                Path(_provider_dir.name) / "hal_provider.so")
    log.debug("built HAL provider at %s", _provider_so)
    return _provider_so
