"""Binary checkpoints of propagated coefficients.

Layout (little-endian):

    magic b"DSCK" | version u16 | header length u32 | header (UTF-8 JSON)
    time f64 | step i64 | count u64 | count complex128 values

The header records the basis the coefficients belong to, the array shape and,
from version 2 on, the norm and energy series recorded up to the saved step.
A restore against a different basis is refused.
"""
import json
import logging
import os
import struct
from typing import NamedTuple

import numpy as np

from hermite_dirac.utils.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"DSCK"
VERSION = 2
READABLE_VERSIONS = (1, 2)
_PREFIX = struct.Struct("<4sHI")
_STATE = struct.Struct("<dqQ")


class Checkpoint(NamedTuple):
    t: float
    step: int
    coefficients: np.ndarray
    descriptor: dict
    series: dict | None


def _canonical(descriptor):
    return json.dumps(descriptor, sort_keys=True, separators=(",", ":"), default=str)


def save_checkpoint(path, descriptor, t, step, coefficients, series=None):
    """Write coefficients, their time/step and the recorded series atomically."""
    data = np.ascontiguousarray(coefficients, dtype="<c16")
    header = {"basis": descriptor, "shape": list(data.shape)}
    if series is not None:
        header["series"] = series
    encoded = _canonical(header).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(encoded)))
        f.write(encoded)
        f.write(_STATE.pack(float(t), int(step), data.size))
        f.write(data.tobytes())
    os.replace(tmp, path)
    logger.debug(f"Checkpoint written to {path} at step {step}")


def load_checkpoint(path, expected_descriptor=None):
    """Read a checkpoint back.

    Returns:
        Checkpoint: series is None for files written without one

    Raises:
        CheckpointError: unreadable file, wrong magic or version, or a basis
            that differs from expected_descriptor
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")

    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, length = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version not in READABLE_VERSIONS:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected one of {READABLE_VERSIONS}")

    offset = _PREFIX.size
    try:
        header = json.loads(raw[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt descriptor ({e})")
    offset += length

    if expected_descriptor is not None and _canonical(header["basis"]) != _canonical(expected_descriptor):
        raise CheckpointError(f"{path}: basis descriptor does not match the current grid")

    if len(raw) < offset + _STATE.size:
        raise CheckpointError(f"{path}: truncated state record")
    t, step, count = _STATE.unpack_from(raw, offset)
    offset += _STATE.size
    payload = raw[offset:]
    if len(payload) != 16 * count:
        raise CheckpointError(f"{path}: expected {count} coefficients, found {len(payload) // 16}")
    coefficients = np.frombuffer(payload, dtype="<c16").reshape(header["shape"]).astype(complex)
    logger.info(f"Restored checkpoint {path}: step {step}, t = {t:.6e}")
    return Checkpoint(t, step, coefficients, header["basis"], header.get("series"))
