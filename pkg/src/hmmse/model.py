"""Voice model container: context-dependent phone HMMs with back-off tying.

Five emitting states per phone, left to right, no skips.  Each state holds
a diagonal Gaussian for the spectral stream, a two-space distribution for
the pitch stream (a Gaussian on voiced frames plus an unvoiced point mass
weighted by voiced_weight) and a scalar duration Gaussian.  Context lookup
never fails for phones in the inventory: unseen contexts fall back to the
center monophone.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CorruptHeader, IoError, NotFound, UnalignableLabel
from .labels import ContextLabel

STATES_PER_PHONE = 5
MODEL_MAGIC = b"HMSEMDL"
MODEL_VERSION = 1


@dataclass
class StreamGaussian:
    """Diagonal Gaussian; voiced_weight is set on the pitch stream only."""

    mean: np.ndarray
    variance: np.ndarray
    voiced_weight: Optional[float] = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance must have equal shape")

    def copy(self) -> "StreamGaussian":
        return StreamGaussian(self.mean.copy(), self.variance.copy(), self.voiced_weight)


@dataclass
class HmmState:
    spectral: StreamGaussian
    pitch: StreamGaussian
    duration_mean: float = 3.0
    duration_var: float = 2.0
    self_loop: float = 0.6

    def copy(self) -> "HmmState":
        return HmmState(
            self.spectral.copy(),
            self.pitch.copy(),
            self.duration_mean,
            self.duration_var,
            self.self_loop,
        )


@dataclass
class PhoneHmm:
    states: list
    occupancy: float = 0.0  # expected frames from the last training pass

    def __post_init__(self):
        if len(self.states) != STATES_PER_PHONE:
            raise ValueError(f"phone HMM needs exactly {STATES_PER_PHONE} states")

    def copy(self) -> "PhoneHmm":
        return PhoneHmm([s.copy() for s in self.states], self.occupancy)


@dataclass
class VoiceModel:
    """Context map plus monophone back-off and training metadata."""

    models: dict
    backoff: dict
    metadata: dict = field(default_factory=dict)
    kind: str = "average"

    def lookup(self, ctx: ContextLabel) -> PhoneHmm:
        hmm = self.models.get(ctx.key())
        if hmm is not None:
            return hmm
        try:
            return self.backoff[ctx.center]
        except KeyError:
            raise UnalignableLabel(ctx.center) from None

    def phone_set(self):
        return set(self.backoff)

    def copy(self) -> "VoiceModel":
        return VoiceModel(
            {k: v.copy() for k, v in self.models.items()},
            {k: v.copy() for k, v in self.backoff.items()},
            copy.deepcopy(self.metadata),
            self.kind,
        )


def _state_scalars(state: HmmState) -> dict:
    return {
        "duration_mean": state.duration_mean,
        "duration_var": state.duration_var,
        "self_loop": state.self_loop,
        "voiced_weight": state.pitch.voiced_weight,
    }


def save_model(model: VoiceModel, path) -> None:
    """Versioned container: JSON structure block + one float32 vector blob."""
    blob_parts = []

    def pack_hmm(hmm: PhoneHmm) -> dict:
        entry = {"occupancy": hmm.occupancy, "states": []}
        for state in hmm.states:
            entry["states"].append(_state_scalars(state))
            for vec in (
                state.spectral.mean,
                state.spectral.variance,
                state.pitch.mean,
                state.pitch.variance,
            ):
                blob_parts.append(np.asarray(vec, dtype="<f4").tobytes())
        return entry

    backoff_order = sorted(model.backoff)
    context_order = sorted(model.models)
    doc = {
        "kind": model.kind,
        "metadata": model.metadata,
        "spectral_width": int(len(next(iter(model.backoff.values())).states[0].spectral.mean))
        if model.backoff
        else 0,
        "pitch_width": int(len(next(iter(model.backoff.values())).states[0].pitch.mean))
        if model.backoff
        else 0,
        "backoff": {p: pack_hmm(model.backoff[p]) for p in backoff_order},
        "contexts": [
            {"key": list(key), **pack_hmm(model.models[key])} for key in context_order
        ],
    }
    payload = json.dumps(doc, sort_keys=True).encode("utf-8")
    blob = b"".join(blob_parts)
    try:
        with open(path, "wb") as handle:
            handle.write(MODEL_MAGIC)
            handle.write(struct.pack("<II", MODEL_VERSION, len(payload)))
            handle.write(payload)
            handle.write(blob)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def load_model(path) -> VoiceModel:
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except FileNotFoundError as exc:
        raise NotFound(str(path)) from exc
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if not raw.startswith(MODEL_MAGIC):
        raise CorruptHeader(f"{path}: bad magic")
    offset = len(MODEL_MAGIC)
    version, json_len = struct.unpack_from("<II", raw, offset)
    if version != MODEL_VERSION:
        raise CorruptHeader(f"{path}: unsupported version {version}")
    offset += 8
    doc = json.loads(raw[offset : offset + json_len].decode("utf-8"))
    blob = np.frombuffer(raw[offset + json_len :], dtype="<f4").astype(np.float64)

    spectral_width = doc["spectral_width"]
    pitch_width = doc["pitch_width"]
    cursor = 0

    def take(width: int) -> np.ndarray:
        nonlocal cursor
        out = blob[cursor : cursor + width]
        cursor += width
        return out.copy()

    def unpack_hmm(entry: dict) -> PhoneHmm:
        states = []
        for scalars in entry["states"]:
            spectral = StreamGaussian(take(spectral_width), take(spectral_width))
            pitch = StreamGaussian(
                take(pitch_width), take(pitch_width), scalars["voiced_weight"]
            )
            states.append(
                HmmState(
                    spectral,
                    pitch,
                    scalars["duration_mean"],
                    scalars["duration_var"],
                    scalars["self_loop"],
                )
            )
        return PhoneHmm(states, entry["occupancy"])

    backoff = {p: unpack_hmm(entry) for p, entry in sorted(doc["backoff"].items())}
    models = {}
    for entry in doc["contexts"]:
        models[tuple(entry["key"])] = unpack_hmm(entry)
    if cursor != len(blob):
        raise CorruptHeader(f"{path}: parameter blob size mismatch")
    return VoiceModel(models, backoff, doc["metadata"], doc["kind"])
