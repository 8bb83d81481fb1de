"""Acoustic model training: flat start, embedded Baum-Welch, back-off
tying and mean-transform speaker adaptation.

Training observations carry the spectral stream with its deltas, the pitch
stream (log-F0 with deltas, computed on a gap-interpolated contour) and the
per-frame voicing mask.  All probability arithmetic stays in the log
domain; the pitch stream is trained as a two-space model so unvoiced
frames never touch the pitch Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .analysis import F0Track, MelCepstrumSequence
from .errors import (
    DimensionMismatch,
    EmptyCorpus,
    InsufficientData,
    NumericalUnderflow,
    TooShort,
)
from .model import STATES_PER_PHONE, HmmState, PhoneHmm, StreamGaussian, VoiceModel

# One source of truth for the dynamic-feature windows; parameter generation
# must use exactly these or trajectories silently degrade.
DELTA_WINDOW = (-0.5, 0.0, 0.5)
DELTA_DELTA_WINDOW = (1.0, -2.0, 1.0)

VARIANCE_FLOOR_SCALE = 1e-4
MIN_SELF_LOOP = 1e-4
MIN_VOICED_WEIGHT = 1e-4
LOG_ZERO = -np.inf


def compute_deltas(stream: np.ndarray) -> np.ndarray:
    """Append delta and delta-delta columns; boundaries replicate."""
    stream = np.asarray(stream, dtype=np.float64)
    if stream.ndim == 1:
        stream = stream[:, None]
    if len(stream) < 3:
        raise TooShort("need at least 3 frames for dynamic features")
    padded = np.vstack([stream[:1], stream, stream[-1:]])
    delta = (padded[2:] - padded[:-2]) / 2.0
    ddelta = padded[2:] - 2.0 * padded[1:-1] + padded[:-2]
    return np.hstack([stream, delta, ddelta])


def interpolate_log_f0(track: F0Track) -> np.ndarray:
    """Continuous log-F0 contour: linear across unvoiced gaps, held at edges.

    Only used to give the pitch deltas a defined value near voicing onsets;
    the voiced mask still decides which frames the Gaussians ever see.
    """
    n = len(track)
    if not np.any(track.voiced):
        return np.zeros(n)
    idx = np.flatnonzero(track.voiced)
    return np.interp(np.arange(n), idx, track.log_f0[idx])


@dataclass
class Observation:
    """Per-utterance training features: spectral + pitch streams with deltas."""

    spectral: np.ndarray  # (T, 3*(order+1))
    pitch: np.ndarray     # (T, 3)
    voiced: np.ndarray    # (T,) bool

    def __post_init__(self):
        if not (len(self.spectral) == len(self.pitch) == len(self.voiced)):
            raise DimensionMismatch("stream lengths differ")

    def __len__(self) -> int:
        return len(self.spectral)


def make_observation(f0: F0Track, mc: MelCepstrumSequence) -> Observation:
    if len(f0) != len(mc):
        raise DimensionMismatch(
            f"pitch track has {len(f0)} frames, cepstra {len(mc)}"
        )
    spectral = compute_deltas(mc.frames)
    pitch = compute_deltas(interpolate_log_f0(f0))
    return Observation(spectral, pitch, f0.voiced.copy())


# --------------------------------------------------------------------------
# embedded chain machinery


class _Chain:
    """Concatenated label HMM for one utterance.

    positions: chain index -> (PhoneHmm, state index); unique states are
    deduplicated so emission probabilities are computed once per Gaussian.
    """

    def __init__(self, model: VoiceModel, labels):
        self.hmms = [model.lookup(ctx) for ctx in labels]
        self.positions = []
        for hmm in self.hmms:
            for s in range(STATES_PER_PHONE):
                self.positions.append((hmm, s))
        self.n = len(self.positions)

        self.unique_states = []
        index_of = {}
        self.position_to_unique = np.empty(self.n, dtype=np.int64)
        for p, (hmm, s) in enumerate(self.positions):
            state = hmm.states[s]
            key = id(state)
            if key not in index_of:
                index_of[key] = len(self.unique_states)
                self.unique_states.append(state)
            self.position_to_unique[p] = index_of[key]

    def log_transitions(self):
        stay = np.array(
            [
                np.clip(hmm.states[s].self_loop, MIN_SELF_LOOP, 1 - MIN_SELF_LOOP)
                for hmm, s in self.positions
            ]
        )
        return np.log(stay), np.log1p(-stay)


def _state_log_emissions(states, obs: Observation) -> np.ndarray:
    """(T, n_unique) log emission matrix for both streams."""
    spec = np.array([s.spectral.mean for s in states])
    spec_var = np.array([s.spectral.variance for s in states])
    x = obs.spectral
    inv = 1.0 / spec_var
    quad = (x**2) @ inv.T - 2.0 * (x @ (spec * inv).T) + np.sum(spec**2 * inv, axis=1)
    log_spec = -0.5 * (
        x.shape[1] * np.log(2 * np.pi) + np.sum(np.log(spec_var), axis=1) + quad
    )

    pmean = np.array([s.pitch.mean for s in states])
    pvar = np.array([s.pitch.variance for s in states])
    weight = np.clip(
        np.array([s.pitch.voiced_weight for s in states], dtype=np.float64),
        MIN_VOICED_WEIGHT,
        1 - MIN_VOICED_WEIGHT,
    )
    xp = obs.pitch
    pinv = 1.0 / pvar
    pquad = (xp**2) @ pinv.T - 2.0 * (xp @ (pmean * pinv).T) + np.sum(
        pmean**2 * pinv, axis=1
    )
    log_voiced = (
        -0.5
        * (xp.shape[1] * np.log(2 * np.pi) + np.sum(np.log(pvar), axis=1) + pquad)
        + np.log(weight)
    )
    log_unvoiced = np.broadcast_to(np.log1p(-weight), log_voiced.shape)
    log_pitch = np.where(obs.voiced[:, None], log_voiced, log_unvoiced)
    return log_spec + log_pitch


def _forward_backward(emit, log_stay, log_next):
    """Log-domain forward-backward over a no-skip left-to-right chain.

    Returns (log_gamma, log_xi_stay, log_xi_next, total_log_likelihood).
    """
    T, S = emit.shape
    alpha = np.full((T, S), LOG_ZERO)
    alpha[0, 0] = emit[0, 0]
    for t in range(1, T):
        stay = alpha[t - 1] + log_stay
        enter = np.empty(S)
        enter[0] = LOG_ZERO
        enter[1:] = alpha[t - 1, :-1] + log_next[:-1]
        alpha[t] = np.logaddexp(stay, enter) + emit[t]
    total = alpha[-1, -1]
    if not np.isfinite(total):
        raise NumericalUnderflow("utterance has no feasible state path")

    beta = np.full((T, S), LOG_ZERO)
    beta[-1, -1] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt + log_stay
        leave = np.empty(S)
        leave[:-1] = nxt[1:] + log_next[:-1]
        leave[-1] = LOG_ZERO
        beta[t] = np.logaddexp(stay, leave)

    log_gamma = alpha + beta - total
    check = logsumexp(log_gamma, axis=1)
    if np.max(np.abs(check)) > 1e-8:
        raise NumericalUnderflow(
            f"posteriors off by {np.max(np.abs(check)):.3e}; log-domain bug"
        )

    nxt = beta[1:] + emit[1:]
    log_xi_stay = alpha[:-1] + log_stay[None, :] + nxt - total
    log_xi_next = np.full((T - 1, S), LOG_ZERO)
    log_xi_next[:, :-1] = alpha[:-1, :-1] + log_next[None, :-1] + nxt[:, 1:] - total
    return log_gamma, log_xi_stay, log_xi_next, total


def _viterbi_frames(emit, log_stay, log_next):
    """Frame-level best path through the chain; returns state index per frame."""
    T, S = emit.shape
    delta = np.full(S, LOG_ZERO)
    delta[0] = emit[0, 0]
    back = np.zeros((T, S), dtype=np.int8)  # 1 = entered from the left
    for t in range(1, T):
        stay = delta + log_stay
        enter = np.empty(S)
        enter[0] = LOG_ZERO
        enter[1:] = delta[:-1] + log_next[:-1]
        back[t] = enter > stay
        delta = np.maximum(stay, enter) + emit[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = S - 1
    for t in range(T - 1, 0, -1):
        path[t - 1] = path[t] - back[t, path[t]]
    return path, delta[-1]


# ----------------------------------------------------------------------------
# training ops


def flat_start(corpus, phone_set, metadata=None) -> VoiceModel:
    """Initialize monophones from global statistics.

    Every state of every phone starts at the global stream mean/variance;
    durations split the average phone length uniformly over the five
    states.  Variance floors derived here ride along in the metadata and
    are applied by every later re-estimation.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("flat start needs at least one utterance")

    spec = np.vstack([obs.spectral for obs, _ in corpus])
    g_mean = spec.mean(axis=0)
    g_var = spec.var(axis=0)
    floor = np.maximum(VARIANCE_FLOOR_SCALE * g_var, 1e-12)
    g_var = np.maximum(g_var, floor)

    voiced_rows = np.vstack(
        [obs.pitch[obs.voiced] for obs, _ in corpus if np.any(obs.voiced)]
        or [np.array([[np.log(120.0), 0.0, 0.0]])]
    )
    p_mean = voiced_rows.mean(axis=0)
    p_var = voiced_rows.var(axis=0)
    p_floor = np.maximum(VARIANCE_FLOOR_SCALE * np.maximum(p_var, 1e-4), 1e-12)
    p_var = np.maximum(p_var, p_floor)
    voiced_rate = float(
        np.mean(np.concatenate([obs.voiced for obs, _ in corpus]))
    )

    total_frames = sum(len(obs) for obs, _ in corpus)
    total_labels = sum(len(labels) for _, labels in corpus)
    state_mean = max(1.0, total_frames / total_labels / STATES_PER_PHONE)
    self_loop = float(np.clip(1.0 - 1.0 / state_mean, MIN_SELF_LOOP, 1 - MIN_SELF_LOOP))

    def fresh_state():
        return HmmState(
            StreamGaussian(g_mean.copy(), g_var.copy()),
            StreamGaussian(p_mean.copy(), p_var.copy(), voiced_rate),
            duration_mean=state_mean,
            duration_var=max(1.0, state_mean),
            self_loop=self_loop,
        )

    backoff = {
        phone: PhoneHmm([fresh_state() for _ in range(STATES_PER_PHONE)])
        for phone in sorted(phone_set)
    }
    meta = dict(metadata or {})
    meta["spectral_floor"] = floor.tolist()
    meta["pitch_floor"] = p_floor.tolist()
    meta["training_log"] = []
    return VoiceModel({}, backoff, meta, "average")


def clone_contexts(model: VoiceModel, corpus) -> VoiceModel:
    """Materialize a context model (a monophone clone) for every context
    observed in the corpus, ready for context-dependent re-estimation."""
    out = model.copy()
    for _, labels in corpus:
        for ctx in labels:
            key = ctx.key()
            if key not in out.models:
                out.models[key] = out.backoff[ctx.center].copy()
    return out


def _check_dimensions(model: VoiceModel, corpus):
    any_state = next(iter(model.backoff.values())).states[0]
    spec_w = len(any_state.spectral.mean)
    pitch_w = len(any_state.pitch.mean)
    for i, (obs, _) in enumerate(corpus):
        if obs.spectral.shape[1] != spec_w or obs.pitch.shape[1] != pitch_w:
            raise DimensionMismatch(
                f"utterance {i}: streams {obs.spectral.shape[1]}/{obs.pitch.shape[1]}, "
                f"model {spec_w}/{pitch_w}"
            )


def baum_welch(model: VoiceModel, corpus, iterations: int = 10):
    """Embedded EM over concatenated label HMMs.

    Returns (trained model, per-iteration total log-likelihood).  Utterance
    statistics merge in corpus order so results are reproducible bit for
    bit.  After the EM iterations a single best-path pass re-estimates the
    duration Gaussians from actual state spans.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("training needs at least one utterance")
    model = model.copy()
    _check_dimensions(model, corpus)
    spec_floor = np.array(model.metadata.get("spectral_floor", [1e-12]))
    pitch_floor = np.array(model.metadata.get("pitch_floor", [1e-12]))

    chains = [_Chain(model, labels) for _, labels in corpus]
    history = []

    for _ in range(iterations):
        acc = {}  # id(state) -> accumulator dict
        total_ll = 0.0
        for (obs, _), chain in zip(corpus, chains):
            emit_unique = _state_log_emissions(chain.unique_states, obs)
            emit = emit_unique[:, chain.position_to_unique]
            log_stay, log_next = chain.log_transitions()
            log_gamma, log_xi_stay, log_xi_next, total = _forward_backward(
                emit, log_stay, log_next
            )
            total_ll += total

            gamma = np.exp(log_gamma)
            xi_stay = np.exp(log_xi_stay).sum(axis=0)
            xi_next = np.exp(log_xi_next).sum(axis=0)

            occ_pos = gamma.sum(axis=0)
            gx = gamma.T @ obs.spectral
            gxx = gamma.T @ obs.spectral**2
            gv = gamma * obs.voiced[:, None]
            occ_v_pos = gv.sum(axis=0)
            pvx = gv.T @ obs.pitch
            pvxx = gv.T @ obs.pitch**2

            for p, (hmm, s) in enumerate(chain.positions):
                state = hmm.states[s]
                a = acc.get(id(state))
                if a is None:
                    a = acc[id(state)] = {
                        "state": state,
                        "occ": 0.0,
                        "gx": 0.0,
                        "gxx": 0.0,
                        "occ_v": 0.0,
                        "pvx": 0.0,
                        "pvxx": 0.0,
                        "stay": 0.0,
                        "next": 0.0,
                    }
                a["occ"] += occ_pos[p]
                a["gx"] = a["gx"] + gx[p]
                a["gxx"] = a["gxx"] + gxx[p]
                a["occ_v"] += occ_v_pos[p]
                a["pvx"] = a["pvx"] + pvx[p]
                a["pvxx"] = a["pvxx"] + pvxx[p]
                a["stay"] += xi_stay[p]
                a["next"] += xi_next[p]

        # M-step
        for a in acc.values():
            state = a["state"]
            occ = a["occ"]
            if occ < 1e-8:
                continue
            mean = a["gx"] / occ
            var = np.maximum(a["gxx"] / occ - mean**2, spec_floor)
            state.spectral.mean = mean
            state.spectral.variance = var

            state.pitch.voiced_weight = float(np.clip(a["occ_v"] / occ, 0.0, 1.0))
            if a["occ_v"] > 1e-8:
                pmean = a["pvx"] / a["occ_v"]
                pvar = np.maximum(a["pvxx"] / a["occ_v"] - pmean**2, pitch_floor)
                state.pitch.mean = pmean
                state.pitch.variance = pvar

            flow = a["stay"] + a["next"]
            if flow > 1e-8:
                state.self_loop = float(
                    np.clip(a["stay"] / flow, MIN_SELF_LOOP, 1 - MIN_SELF_LOOP)
                )
        history.append(total_ll)

        # per-model occupancy for back-off tying
        occ_by_state = {k: a["occ"] for k, a in acc.items()}
        for hmm in list(model.models.values()) + list(model.backoff.values()):
            hmm.occupancy = float(
                sum(occ_by_state.get(id(s), 0.0) for s in hmm.states)
            )

    _reestimate_durations(model, corpus, chains)
    model.metadata.setdefault("training_log", [])
    model.metadata["training_log"] = list(model.metadata["training_log"]) + [
        float(v) for v in history
    ]
    return model, history


def _reestimate_durations(model: VoiceModel, corpus, chains):
    """Duration Gaussians from best-path state spans over the corpus."""
    samples = {}
    for (obs, _), chain in zip(corpus, chains):
        emit_unique = _state_log_emissions(chain.unique_states, obs)
        emit = emit_unique[:, chain.position_to_unique]
        log_stay, log_next = chain.log_transitions()
        path, _ = _viterbi_frames(emit, log_stay, log_next)
        boundaries = np.flatnonzero(np.diff(path)) + 1
        spans = np.diff(np.concatenate([[0], boundaries, [len(path)]]))
        chain_pos = np.concatenate([[0], path[boundaries]])
        for pos, span in zip(chain_pos, spans):
            state = chain.positions[pos][0].states[chain.positions[pos][1]]
            samples.setdefault(id(state), (state, []))[1].append(span)
    for state, spans in samples.values():
        spans = np.asarray(spans, dtype=np.float64)
        state.duration_mean = float(max(1.0, spans.mean()))
        state.duration_var = float(max(0.25, spans.var()))


def tie_backoff(model: VoiceModel, min_occupancy: float) -> VoiceModel:
    """Drop context models that saw fewer frames than min_occupancy.

    Lookup then falls back to the center monophone, so synthesis keeps
    working for any in-inventory context."""
    out = model.copy()
    out.models = {
        key: hmm for key, hmm in out.models.items() if hmm.occupancy >= min_occupancy
    }
    return out


# ------------------------------------------------------------------------------
# speaker adaptation


def _solve_block_transform(stats, width, block_slices, shrink):
    """Per-row least squares for one stream, block-diagonal over windows.

    stats: list of (occ, mean, variance, gx) per Gaussian with occ > 0.
    Returns (A, b) assembled over the full stream width.
    """
    A = np.eye(width)
    b = np.zeros(width)
    for sl in block_slices:
        d = sl.stop - sl.start
        for i in range(sl.start, sl.stop):
            g = np.zeros((d + 1, d + 1))
            k = np.zeros(d + 1)
            weight_total = 0.0
            for occ, mean, var, gx in stats:
                xi = np.concatenate([mean[sl], [1.0]])
                w = occ / var[i]
                g += w * np.outer(xi, xi)
                k += gx[i] / var[i] * xi
                weight_total += w
            # shrink toward the identity row for low-rank adaptation sets
            lam = shrink * weight_total
            g[np.diag_indices_from(g)] += lam
            identity_row = np.zeros(d + 1)
            identity_row[i - sl.start] = 1.0
            k += lam * identity_row
            row = np.linalg.solve(g, k)
            A[i, sl.start : sl.stop] = row[:d]
            b[i] = row[d]
    return A, b


def adapt_mllr(model: VoiceModel, corpus, iterations: int = 3, shrink: float = 1e-3):
    """Global affine mean transform per stream, estimated by EM.

    The transform is block-diagonal over the static/delta/delta-delta
    windows (a full matrix is unidentifiable from desk-scale adaptation
    sets) and shrunk slightly toward the identity.  Variances stay fixed.
    """
    corpus = list(corpus)
    if not corpus:
        raise InsufficientData("adaptation set is empty")
    _check_dimensions(model, corpus)

    any_state = next(iter(model.backoff.values())).states[0]
    spec_w = len(any_state.spectral.mean)
    pitch_w = len(any_state.pitch.mean)
    n_blocks = 3
    spec_params = n_blocks * (spec_w // n_blocks) * (spec_w // n_blocks + 1)
    total_frames = sum(len(obs) for obs, _ in corpus)
    if total_frames < spec_params:
        raise InsufficientData(
            f"{total_frames} frames cannot estimate {spec_params} transform parameters"
        )

    base = model.copy()
    chains = [_Chain(base, labels) for _, labels in corpus]
    base_means = {
        id(st): (st.spectral.mean.copy(), st.pitch.mean.copy())
        for chain in chains
        for st in chain.unique_states
    }

    spec_blocks = [
        slice(i * (spec_w // 3), (i + 1) * (spec_w // 3)) for i in range(3)
    ]
    pitch_blocks = [slice(i, i + 1) for i in range(pitch_w)]
    A_spec, b_spec = np.eye(spec_w), np.zeros(spec_w)
    A_pitch, b_pitch = np.eye(pitch_w), np.zeros(pitch_w)

    for _ in range(iterations):
        spec_stats = {}
        pitch_stats = {}
        for (obs, _), chain in zip(corpus, chains):
            emit_unique = _state_log_emissions(chain.unique_states, obs)
            emit = emit_unique[:, chain.position_to_unique]
            log_stay, log_next = chain.log_transitions()
            log_gamma, _, _, _ = _forward_backward(emit, log_stay, log_next)
            gamma = np.exp(log_gamma)
            occ_pos = gamma.sum(axis=0)
            gx = gamma.T @ obs.spectral
            gv = gamma * obs.voiced[:, None]
            occ_v = gv.sum(axis=0)
            px = gv.T @ obs.pitch
            for p, (hmm, s) in enumerate(chain.positions):
                state = hmm.states[s]
                entry = spec_stats.setdefault(id(state), [state, 0.0, 0.0])
                entry[1] += occ_pos[p]
                entry[2] = entry[2] + gx[p]
                pentry = pitch_stats.setdefault(id(state), [state, 0.0, 0.0])
                pentry[1] += occ_v[p]
                pentry[2] = pentry[2] + px[p]

        spec_rows = [
            (occ, base_means[key][0], state.spectral.variance, gx)
            for key, (state, occ, gx) in spec_stats.items()
            if occ > 1e-8
        ]
        A_spec, b_spec = _solve_block_transform(spec_rows, spec_w, spec_blocks, shrink)
        pitch_rows = [
            (occ, base_means[key][1], state.pitch.variance, px)
            for key, (state, occ, px) in pitch_stats.items()
            if occ > 1e-8
        ]
        if pitch_rows:
            A_pitch, b_pitch = _solve_block_transform(
                pitch_rows, pitch_w, pitch_blocks, shrink
            )

        for chain in chains:
            for st in chain.unique_states:
                mean0, pmean0 = base_means[id(st)]
                st.spectral.mean = A_spec @ mean0 + b_spec
                st.pitch.mean = A_pitch @ pmean0 + b_pitch

    # apply the final transform to every state of the model copy
    seen = set()
    for hmm in list(base.models.values()) + list(base.backoff.values()):
        for st in hmm.states:
            if id(st) in seen:
                continue
            seen.add(id(st))
            if id(st) in base_means:
                continue  # already transformed via a chain
            st.spectral.mean = A_spec @ st.spectral.mean + b_spec
            st.pitch.mean = A_pitch @ st.pitch.mean + b_pitch

    base.kind = "adapted"
    base.metadata = dict(base.metadata)
    base.metadata["adaptation"] = {
        "spectral_A": A_spec.tolist(),
        "spectral_b": b_spec.tolist(),
        "pitch_A": A_pitch.tolist(),
        "pitch_b": b_pitch.tolist(),
    }
    return base
