"""Linear-Gaussian Kalman filter for the constant-velocity model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .simkit import H, meas_cov, process_cov, transition_matrix


class SingularInnovation(np.linalg.LinAlgError):
    pass


class RiccatiNonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class KfModel:
    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @classmethod
    def cv(cls, qs: float, vx2: float, vy2: float, dt: float = 1.0) -> "KfModel":
        return cls(transition_matrix(dt), H.copy(), process_cov(qs, dt), meas_cov(vx2, vy2))


@dataclass
class KfState:
    mean: np.ndarray  # [px, vx, py, vy]
    cov: np.ndarray


def _xy(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z[:2]


def init_cov(model: KfModel, dt: float) -> np.ndarray:
    """Covariance of two-point differencing: position block R, velocity block 2R/dt^2 + Q_vv."""
    P = np.zeros((4, 4))
    for axis, p in enumerate((0, 2)):
        r = model.R[axis, axis]
        P[p, p] = r
        P[p, p + 1] = P[p + 1, p] = r / dt
        P[p + 1, p + 1] = 2.0 * r / dt**2 + model.Q[p + 1, p + 1]
    return P


def kf_init(z1, z2, model: KfModel, dt: float) -> KfState:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    z1, z2 = _xy(z1), _xy(z2)
    v = (z2 - z1) / dt
    return KfState(np.array([z2[0], v[0], z2[1], v[1]]), init_cov(model, dt))


def kf_predict(s: KfState, model: KfModel) -> KfState:
    F = model.F
    return KfState(F @ s.mean, F @ s.cov @ F.T + model.Q)


def _gain(cov: np.ndarray, model: KfModel) -> np.ndarray:
    S = model.H @ cov @ model.H.T + model.R
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e14:
        raise SingularInnovation(f"innovation covariance is singular: {S.tolist()}")
    return np.linalg.solve(S, model.H @ cov).T


def _joseph(cov: np.ndarray, K: np.ndarray, model: KfModel) -> np.ndarray:
    A = np.eye(len(cov)) - K @ model.H
    P = A @ cov @ A.T + K @ model.R @ K.T
    return 0.5 * (P + P.T)


def kf_update(s: KfState, z, model: KfModel) -> KfState:
    K = _gain(s.cov, model)
    mean = s.mean + K @ (_xy(z) - model.H @ s.mean)
    return KfState(mean, _joseph(s.cov, K, model))


def kf_run(track: Sequence, model: KfModel, dt: float) -> np.ndarray:
    """Position estimates ``(T, 2)``; the first two are the initialization outputs."""
    z = np.asarray([_xy(m) for m in track])
    if len(z) < 2:
        raise ValueError("a Kalman track needs at least 2 measurements")
    s = kf_init(z[0], z[1], model, dt)
    out = np.empty((len(z), 2))
    out[0] = z[0]
    out[1] = model.H @ s.mean
    for k in range(2, len(z)):
        s = kf_update(kf_predict(s, model), z[k], model)
        out[k] = model.H @ s.mean
    return out


def kf_run_batch(meas: np.ndarray, model: KfModel, dt: float) -> np.ndarray:
    """:func:`kf_run` over ``(N, T, 2)`` tracks at once.

    The covariance recursion does not depend on the data, so one gain
    sequence serves every track.
    """
    meas = np.asarray(meas, dtype=float)
    N, T, _ = meas.shape
    if T < 2:
        raise ValueError("a Kalman track needs at least 2 measurements")
    v = (meas[:, 1] - meas[:, 0]) / dt
    x = np.stack([meas[:, 1, 0], v[:, 0], meas[:, 1, 1], v[:, 1]], axis=1)
    P = init_cov(model, dt)
    out = np.empty((N, T, 2))
    out[:, 0] = meas[:, 0]
    out[:, 1] = meas[:, 1]
    for k in range(2, T):
        x = x @ model.F.T
        P = model.F @ P @ model.F.T + model.Q
        K = _gain(P, model)
        x = x + (meas[:, k] - x @ model.H.T) @ K.T
        P = _joseph(P, K, model)
        out[:, k] = x @ model.H.T
    return out


def steady_state_cov(model: KfModel, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Fixed point of the posterior covariance recursion."""
    P = model.Q + model.H.T @ model.R @ model.H
    for _ in range(max_iter):
        K = _gain(model.F @ P @ model.F.T + model.Q, model)
        nxt = _joseph(model.F @ P @ model.F.T + model.Q, K, model)
        if np.max(np.abs(nxt - P)) < tol:
            return nxt
        P = nxt
    raise RiccatiNonConvergence(f"no fixed point within {max_iter} iterations")


def steady_state_position_rmse(model: KfModel) -> float:
    P = steady_state_cov(model)
    return float(np.sqrt(P[0, 0] + P[2, 2]))
