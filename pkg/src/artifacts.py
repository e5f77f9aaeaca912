"""
Writing report artifacts.

JSON is UTF-8 with 2-space indentation, sorted keys, a trailing newline and
no NaN/Infinity; CSV uses pandas with ``\\n`` line endings. Every write goes
to a temporary file in the target directory that is then moved into place.
"""

import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .errors import DataIOError

logger = logging.getLogger(__name__)

TOOL_NAME = "osteorisk"


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(item) for item in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def dumps(payload: Any) -> str:
    try:
        return json.dumps(_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"
    except ValueError as e:
        raise DataIOError(f"Artifact contains a non-finite number: {e}")


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(temporary, path)
    except OSError as e:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise DataIOError(f"Cannot write {path}: {e}")
    logger.debug(f"Wrote {path}")


def write_json(path, payload: Any):
    _atomic_write(path, dumps(payload))


def provenance(seed: int, dataset_checksum: Optional[str], **extra) -> Dict[str, Any]:
    """Keys embedded in every artifact."""
    keys = {"seed": int(seed), "dataset_checksum": dataset_checksum}
    keys.update(extra)
    return keys


def manifest(command: str, seed: int, dataset_checksum: Optional[str], **extra) -> Dict[str, Any]:
    """The bundle manifest; the only artifact carrying a timestamp."""
    payload = {
        "tool": TOOL_NAME,
        "version": __version__,
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    payload.update(provenance(seed, dataset_checksum, **extra))
    return payload


class Bundle:
    """
    Collects a command's artifacts in memory and writes them together, so a
    command that fails before ``flush`` leaves nothing behind.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self._pending: Dict[str, Tuple[str, Any]] = {}

    def add_json(self, relative: str, payload: Any):
        self._pending[relative] = ("json", dumps(payload))

    def add_csv(self, relative: str, frame: pd.DataFrame, index: bool = False):
        self._pending[relative] = ("csv", frame.to_csv(index=index, lineterminator="\n"))

    def flush(self):
        for relative in sorted(self._pending):
            _, text = self._pending[relative]
            _atomic_write(self.out_dir / relative, text)
        logger.info(f"Wrote {len(self._pending)} artifact(s) to {self.out_dir}")
        self._pending.clear()
