"""Forced alignment: maximum-likelihood segmentation of a known label
sequence against observed features.

Scoring is segmental: every state contributes its span's emission scores
plus a duration Gaussian term, with a hard minimum of one frame per state.
Score ties resolve by giving later states the shortest span, so earlier
states absorb ambiguous frames; this is deterministic and tests rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewFrames
from .hmm import Observation, _Chain, _state_log_emissions
from .labels import PhoneLabel, expand_context
from .model import STATES_PER_PHONE, VoiceModel

MIN_DURATION_VAR = 0.25


@dataclass
class AlignedPhone:
    phoneme: str
    start_frame: int
    end_frame: int
    state_spans: list  # (start, end) per emitting state


@dataclass
class AlignmentResult:
    phones: list
    state_durations: np.ndarray  # frames per chain state
    log_likelihood: float
    frame_count: int


def duration_log_probs(chain: _Chain, max_frames: int) -> np.ndarray:
    """(chain length, max_frames) duration scores; column d-1 scores d frames."""
    d = np.arange(1, max_frames + 1, dtype=np.float64)
    out = np.empty((chain.n, max_frames))
    for p, (hmm, s) in enumerate(chain.positions):
        state = hmm.states[s]
        var = max(state.duration_var, MIN_DURATION_VAR)
        out[p] = -0.5 * (np.log(2 * np.pi * var) + (d - state.duration_mean) ** 2 / var)
    return out


def viterbi_align(model: VoiceModel, labels, features: Observation) -> AlignmentResult:
    """Best monotone segmentation of the concatenated label HMM.

    labels may be PhoneLabel or ContextLabel sequences; phone labels are
    context-expanded first.  Unknown contexts resolve through the back-off
    map, so only an unknown phoneme raises.
    """
    if labels and isinstance(labels[0], PhoneLabel):
        labels = expand_context(labels, model.metadata.get("context_width", "quinphone"))
    chain = _Chain(model, labels)
    T = len(features)
    S = chain.n
    if T < S:
        raise TooFewFrames(f"{T} frames for {S} states")

    emit_unique = _state_log_emissions(chain.unique_states, features)
    emit = emit_unique[:, chain.position_to_unique]
    dur = duration_log_probs(chain, T)

    # V[s, t]: best score with states 0..s covering frames [0, t)
    neg_inf = -np.inf
    cum = np.vstack([np.zeros(S), np.cumsum(emit, axis=0)])  # (T+1, S)
    t_grid = np.arange(T + 1)
    d_grid = np.arange(1, T + 1)
    prev_idx = t_grid[:, None] - d_grid[None, :]  # (T+1, T)
    valid0 = prev_idx >= 0
    prev_clip = np.maximum(prev_idx, 0)

    v_prev = None
    back = np.zeros((S, T + 1), dtype=np.int64)
    for s in range(S):
        if s == 0:
            scores = np.where(
                (prev_idx == 0), dur[0][None, :] + cum[t_grid, 0][:, None], neg_inf
            )
        else:
            u = v_prev - cum[:, s]
            scores = np.where(valid0, u[prev_clip] + dur[s][None, :], neg_inf)
            scores += cum[t_grid, s][:, None]
        best_d = np.argmax(scores, axis=1)  # smallest d wins ties
        v = scores[t_grid, best_d]
        back[s] = best_d + 1
        v_prev = v

    total = v_prev[T]
    if not np.isfinite(total):
        raise TooFewFrames("no feasible segmentation")

    durations = np.empty(S, dtype=np.int64)
    t = T
    for s in range(S - 1, -1, -1):
        d = back[s, t]
        durations[s] = d
        t -= d
    assert t == 0

    phones = []
    start = 0
    for i, ctx in enumerate(labels):
        spans = []
        for s in range(STATES_PER_PHONE):
            d = int(durations[i * STATES_PER_PHONE + s])
            spans.append((start, start + d))
            start += d
        phones.append(AlignedPhone(ctx.center, spans[0][0], spans[-1][1], spans))
    return AlignmentResult(phones, durations, float(total), T)


def score_segmentation(
    model: VoiceModel, labels, features: Observation, durations
) -> float:
    """Recompute the segmental score of an explicit duration assignment.

    Independent of the DP; used to cross-check alignment results."""
    if labels and isinstance(labels[0], PhoneLabel):
        labels = expand_context(labels, model.metadata.get("context_width", "quinphone"))
    chain = _Chain(model, labels)
    emit_unique = _state_log_emissions(chain.unique_states, features)
    emit = emit_unique[:, chain.position_to_unique]
    dur = duration_log_probs(chain, len(features))
    total = 0.0
    t = 0
    for p, d in enumerate(durations):
        total += emit[t : t + d, p].sum() + dur[p, d - 1]
        t += d
    if t != len(features):
        raise ValueError("durations do not cover the utterance")
    return float(total)


def alignment_to_labels(
    result: AlignmentResult, frame_shift: int, sample_rate: int
) -> list:
    """Convert frame spans to timed labels in 100 ns units."""
    out = []
    for phone in result.phones:
        start = round(phone.start_frame * frame_shift * 10_000_000 / sample_rate)
        end = round(phone.end_frame * frame_shift * 10_000_000 / sample_rate)
        out.append(PhoneLabel(phone.phoneme, start, end))
    return out
