"""Binary feature-file container shared by every pipeline stage.

Layout (little-endian): magic "HMSE", u32 version, u32 frame count,
u32 stream width, u32 frame_shift, then float32 row-major frames.
Pitch tracks are stored as a width-2 stream (voiced flag, log-F0); the
NaN pitch sentinel for unvoiced frames exists on disk only and is turned
back into the voiced mask on read.
"""

from __future__ import annotations

import struct

import numpy as np

from .analysis import F0Track, MelCepstrumSequence
from .errors import CorruptHeader, IoError, NotFound

MAGIC = b"HMSE"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def write_features(path, frames: np.ndarray, frame_shift: int) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise ValueError("frames must be 2-D (frames x width)")
    header = _HEADER.pack(MAGIC, VERSION, frames.shape[0], frames.shape[1], frame_shift)
    try:
        with open(path, "wb") as handle:
            handle.write(header)
            handle.write(frames.tobytes())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def read_features(path) -> tuple[np.ndarray, int]:
    """Returns (frames as float64, frame_shift)."""
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except FileNotFoundError as exc:
        raise NotFound(str(path)) from exc
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise CorruptHeader(f"{path}: truncated header")
    magic, version, count, width, frame_shift = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptHeader(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size :]
    expected = 4 * count * width
    if len(body) != expected:
        raise CorruptHeader(f"{path}: body is {len(body)} bytes, expected {expected}")
    frames = np.frombuffer(body, dtype="<f4").reshape(count, width)
    return frames.astype(np.float64), frame_shift


def write_f0(path, track: F0Track) -> None:
    frames = np.column_stack([track.voiced.astype(np.float64), track.log_f0])
    frames[~track.voiced, 1] = np.nan  # disk sentinel
    write_features(path, frames, track.frame_shift)


def read_f0(path) -> F0Track:
    frames, frame_shift = read_features(path)
    if frames.shape[1] != 2:
        raise CorruptHeader(f"{path}: pitch stream must have width 2")
    voiced = frames[:, 0] > 0.5
    log_f0 = frames[:, 1].copy()
    log_f0[~voiced] = np.nan
    return F0Track(frame_shift, voiced, log_f0)


def write_mgc(path, mc: MelCepstrumSequence) -> None:
    write_features(path, mc.frames, mc.frame_shift)


def read_mgc(path, alpha: float) -> MelCepstrumSequence:
    """The container stores no warping constant; the caller supplies it."""
    frames, frame_shift = read_features(path)
    return MelCepstrumSequence(frames.shape[1] - 1, alpha, frame_shift, frames)
