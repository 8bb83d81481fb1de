"""Trajectory generation: durations, maximum-likelihood parameter
generation under delta constraints, and the global-variance step that
counteracts over-smoothing.

The MLPG normal equations (W' S^-1 W) c = W' S^-1 mu are solved per
dimension with a pentadiagonal Cholesky solve; W stacks the static row
with the shared delta windows, replicating boundary frames exactly the
way training-side delta computation does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded
from scipy.sparse import coo_matrix

from .analysis import F0Track, MelCepstrumSequence
from .errors import EmptyCorpus, EmptySequence, SingularSystem
from .hmm import DELTA_DELTA_WINDOW, DELTA_WINDOW
from .model import VoiceModel

RESIDUAL_TOLERANCE = 1e-8
WINDOWS = ((1.0,), DELTA_WINDOW, DELTA_DELTA_WINDOW)


@dataclass
class StateSequence:
    """Ordered emitting states with a frame count per state."""

    states: list
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.states) != len(self.counts):
            raise ValueError("states and counts must pair up")
        if len(self.counts) and np.any(self.counts < 1):
            raise ValueError("every state needs at least one frame")

    @property
    def total_frames(self) -> int:
        return int(self.counts.sum())

    def frame_states(self) -> list:
        out = []
        for state, count in zip(self.states, self.counts):
            out.extend([state] * int(count))
        return out


@dataclass
class GvTarget:
    target: np.ndarray
    weight: float = 0.7
    iterations: int = 20
    step: float = 0.1

    def __post_init__(self):
        self.target = np.atleast_1d(np.asarray(self.target, dtype=np.float64))
        if np.any(self.target <= 0):
            raise ValueError("target variances must be positive")


def predict_durations(model: VoiceModel, labels, rate: float = 1.0) -> StateSequence:
    """Frames per state = max(1, round-half-up(rate * duration mean))."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if not labels:
        raise EmptySequence("no labels to predict durations for")
    states = []
    counts = []
    for ctx in labels:
        hmm = model.lookup(ctx)
        for state in hmm.states:
            states.append(state)
            counts.append(max(1, int(np.floor(rate * state.duration_mean + 0.5))))
    return StateSequence(states, np.array(counts))


_WINDOW_CACHE: dict = {}


def _window_matrix(T: int, window) -> "coo_matrix":
    """T x T sparse matrix applying one delta window with boundary replication."""
    key = (T, window)
    cached = _WINDOW_CACHE.get(key)
    if cached is not None:
        return cached
    half = len(window) // 2
    rows, cols, data = [], [], []
    for t in range(T):
        for k, w in enumerate(window):
            if w == 0.0:
                continue
            rows.append(t)
            cols.append(min(max(t + k - half, 0), T - 1))
            data.append(w)
    mat = coo_matrix((data, (rows, cols)), shape=(T, T)).tocsr()
    mat.sum_duplicates()
    _WINDOW_CACHE[key] = mat
    return mat


def mlpg_solve(means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Solve one dimension's trajectory from stacked per-frame
    [static, delta, delta-delta] means and variances, each (T, 3).

    Infinite variances are legal and simply drop that constraint.  The
    solution's normal-equation residual is verified on every call.
    """
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    T = len(means)
    if T == 0:
        raise EmptySequence("cannot generate an empty trajectory")
    with np.errstate(divide="ignore"):
        precision = 1.0 / variances
    precision[~np.isfinite(variances)] = 0.0

    normal = None
    rhs = np.zeros(T)
    for w_idx, window in enumerate(WINDOWS):
        p = precision[:, w_idx]
        if not np.any(p):
            continue
        W = _window_matrix(T, window)
        weighted = W.multiply(p[:, None]).tocsr()
        term = W.T @ weighted
        normal = term if normal is None else normal + term
        rhs += W.T @ (p * means[:, w_idx])
    if normal is None:
        raise SingularSystem("all precisions are zero")

    bandwidth = 2
    ab = np.zeros((bandwidth + 1, T))
    for offset in range(bandwidth + 1):
        diag = normal.diagonal(offset)
        ab[bandwidth - offset, offset:] = diag
    try:
        solution = solveh_banded(ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc

    residual = normal @ solution - rhs
    scale = max(float(np.linalg.norm(rhs)), 1e-30)
    rel = float(np.linalg.norm(residual)) / scale
    if rel > RESIDUAL_TOLERANCE:
        raise SingularSystem(f"normal-equation residual {rel:.2e}")
    return solution


def mlpg(seq: StateSequence):
    """Generate static trajectories for both streams of a state sequence.

    Returns (spectral matrix (T, order+1), log-F0 array, voiced mask).
    The pitch trajectory is generated separately over each voiced run
    (state voiced_weight > 0.5); unvoiced frames keep NaN.
    """
    frame_states = seq.frame_states()
    T = len(frame_states)
    if T == 0:
        raise EmptySequence("empty state sequence")

    spec_means = np.array([s.spectral.mean for s in frame_states])
    spec_vars = np.array([s.spectral.variance for s in frame_states])
    width = spec_means.shape[1] // 3
    spectral = np.empty((T, width))
    for dim in range(width):
        cols = [dim, width + dim, 2 * width + dim]
        spectral[:, dim] = mlpg_solve(spec_means[:, cols], spec_vars[:, cols])

    voiced = np.array(
        [(s.pitch.voiced_weight or 0.0) > 0.5 for s in frame_states]
    )
    log_f0 = np.full(T, np.nan)
    pitch_means = np.array([s.pitch.mean for s in frame_states])
    pitch_vars = np.array([s.pitch.variance for s in frame_states])
    t = 0
    while t < T:
        if not voiced[t]:
            t += 1
            continue
        start = t
        while t < T and voiced[t]:
            t += 1
        log_f0[start:t] = mlpg_solve(pitch_means[start:t], pitch_vars[start:t])
    return spectral, log_f0, voiced


def generate_parameters(model: VoiceModel, seq: StateSequence, gv=None):
    """MLPG for both streams plus the optional GV step on the spectral one.

    Returns (MelCepstrumSequence, F0Track) using the model metadata for the
    warping constant and frame shift."""
    spectral, log_f0, voiced = mlpg(seq)
    if gv is not None and gv.weight > 0 and len(spectral) >= 2:
        spectral = gv_enhance(spectral, gv)
    alpha = float(model.metadata.get("alpha", 0.42))
    frame_shift = int(model.metadata.get("frame_shift", 80))
    mc = MelCepstrumSequence(spectral.shape[1] - 1, alpha, frame_shift, spectral)
    return mc, F0Track(frame_shift, voiced, log_f0)


def model_gv_stats(corpus_statics, weight=0.7, iterations=20, step=0.1) -> GvTarget:
    """Target = per-dimension mean of per-utterance static variances."""
    corpus_statics = list(corpus_statics)
    if not corpus_statics:
        raise EmptyCorpus("no utterances for variance statistics")
    variances = np.array([np.var(u, axis=0) for u in corpus_statics])
    return GvTarget(np.maximum(variances.mean(axis=0), 1e-12), weight, iterations, step)


def gv_enhance(traj: np.ndarray, gv: GvTarget) -> np.ndarray:
    """Push per-dimension trajectory variance toward the corpus target.

    Ascends L = -(1-w) mean((c - c0)^2) - w (var(c) - target)^2 per
    dimension; a backtracking step keeps the variance distance to target
    non-increasing every iteration.  A constant dimension with a positive
    target gets a deterministic zero-mean ramp to leave the stationary
    point.  w = 0 returns the input unchanged, bit for bit.
    """
    traj = np.asarray(traj, dtype=np.float64)
    if len(traj) < 2:
        raise ValueError("trajectory needs at least 2 frames")
    if gv.weight == 0.0 or gv.iterations == 0:
        return traj
    single = traj.ndim == 1
    c = traj[:, None].copy() if single else traj.copy()
    c0 = c.copy()
    T, D = c.shape
    w = gv.weight
    target = np.broadcast_to(gv.target, (D,))

    ramp = np.arange(T) - (T - 1) / 2.0
    ramp = ramp / np.sqrt(np.mean(ramp**2))

    for _ in range(gv.iterations):
        for d in range(D):
            col = c[:, d]
            mean = col.mean()
            var = col.var()
            tau = target[d]
            if var < 1e-12 * max(tau, 1.0):
                c[:, d] = col + np.sqrt(1e-4 * tau) * ramp
                continue
            grad = -4.0 * w * (var - tau) / T * (col - mean)
            grad -= 2.0 * (1 - w) / T * (col - c0[:, d])
            if not np.any(grad):
                continue
            objective = -(1 - w) * np.mean((col - c0[:, d]) ** 2) - w * (var - tau) ** 2
            step = gv.step * T / 4.0
            for _ in range(60):
                trial = col + step * grad
                t_var = trial.var()
                t_obj = -(1 - w) * np.mean((trial - c0[:, d]) ** 2)
                t_obj -= w * (t_var - tau) ** 2
                if t_obj > objective and abs(t_var - tau) <= abs(var - tau):
                    c[:, d] = trial
                    break
                step *= 0.5
    return c[:, 0] if single else c
