"""The three exactly solvable qubit models of collisional mean-field dynamics.

Every model is available three ways: as a closed-form Bloch vector field
(:func:`model_rhs`), as a pair generator fed through the generic partial
trace reduction (:meth:`ModelSpec.generator`), and as a closed-form solution
(``*_exact``).  Times are measured in units of ``1/gamma``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import qcore

BALL_TOL = 1e-8
STEP_REJECT_TOL = 1e-6
DEFAULT_DT = 1e-3


class IntegrationError(RuntimeError):
    """Raised when a fixed-step trajectory leaves the Bloch ball."""


class ModelKind(str, enum.Enum):
    PAIR_DECAY = "PairDecay"
    PAIR_DEPHASING = "PairDephasing"
    SINGLET_PURIFICATION = "SingletPurification"


@dataclass(frozen=True)
class ModelSpec:
    """Collision model and its rate.

    ``theta`` is only used by :attr:`ModelKind.PAIR_DEPHASING`.  The singlet
    model has no rate in its closed form; ``gamma`` rescales time there.
    """

    kind: ModelKind
    gamma: float = 1.0
    theta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.kind is ModelKind.PAIR_DEPHASING:
            if self.theta is None:
                raise ValueError("PairDephasing needs theta")
            if abs(np.sin(self.theta)) < 1e-12:
                raise ValueError("sin(theta) = 0 gives trivial dynamics")

    @classmethod
    def pair_decay(cls, gamma: float = 1.0) -> "ModelSpec":
        return cls(ModelKind.PAIR_DECAY, gamma)

    @classmethod
    def pair_dephasing(cls, theta: float, gamma: float = 1.0) -> "ModelSpec":
        return cls(ModelKind.PAIR_DEPHASING, gamma, theta)

    @classmethod
    def singlet_purification(cls, gamma: float = 1.0) -> "ModelSpec":
        return cls(ModelKind.SINGLET_PURIFICATION, gamma)

    def generator(self) -> qcore.PairGenerator:
        """Pair generator whose mean-field reduction yields :func:`model_rhs`."""
        if self.kind is ModelKind.PAIR_DECAY:
            return qcore.decay_generator(self.gamma)
        if self.kind is ModelKind.PAIR_DEPHASING:
            return qcore.dephasing_generator(self.theta, self.gamma)
        return qcore.generator_from_channel(qcore.singlet_channel(), self.gamma)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if times.ndim != 1 or states.shape[0] != times.shape[0] or states.shape[-1] != 3:
            raise ValueError("states must have shape (len(times), ..., 3)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        norms = np.linalg.norm(states, axis=-1)
        if np.any(norms > 1 + BALL_TOL):
            raise ValueError(f"state outside the Bloch ball (|u| = {norms.max():.17g})")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class RateReport:
    fitted_rate: float
    predicted_rate: float
    residual: float


def dephasing_rate(uz, theta: float, gamma: float = 1.0):
    """Transverse decay rate ``gamma sin^2(theta) (1 + u_z sin(2 theta))``."""
    return gamma * np.sin(theta) ** 2 * (1 + np.asarray(uz) * np.sin(2 * theta))


def model_rhs(model: ModelSpec, u) -> np.ndarray:
    """Closed-form Bloch velocity; broadcasts over leading axes of ``u``."""
    u = np.asarray(u, dtype=float)
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    g = model.gamma
    if model.kind is ModelKind.PAIR_DECAY:
        rate = 0.5 * g * (1 - uz)
        return -0.5 * rate[..., None] * np.stack([ux, uy, 2 * (uz - 1)], axis=-1)
    if model.kind is ModelKind.PAIR_DEPHASING:
        rate = dephasing_rate(uz, model.theta, g)
        return -rate[..., None] * np.stack([ux, uy, np.zeros_like(uz)], axis=-1)
    lift = 0.25 * g * (1 - ux * ux - uy * uy - uz * uz)
    return np.stack([np.zeros_like(lift), np.zeros_like(lift), lift], axis=-1)


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _scalar_field(model: ModelSpec):
    """Pure-float twin of :func:`model_rhs` for single trajectories."""
    g = model.gamma
    if model.kind is ModelKind.PAIR_DECAY:

        def field(x, y, z):
            r = 0.25 * g * (1.0 - z)
            return -r * x, -r * y, 2.0 * r * (1.0 - z)

    elif model.kind is ModelKind.PAIR_DEPHASING:
        amp = g * math.sin(model.theta) ** 2
        tilt = math.sin(2 * model.theta)

        def field(x, y, z):
            r = amp * (1.0 + z * tilt)
            return -r * x, -r * y, 0.0

    else:

        def field(x, y, z):
            return 0.0, 0.0, 0.25 * g * (1.0 - x * x - y * y - z * z)

    return field


def _reject(t, dt_used):
    raise IntegrationError(f"state left the Bloch ball at t = {t:.6g}; reduce dt (currently {dt_used})")


def _integrate_single(field, u, times):
    limit = (1 + STEP_REJECT_TOL) ** 2
    out = np.empty((len(times), 3))
    x, y, z = out[0] = u
    for i in range(1, len(times)):
        h = times[i] - times[i - 1]
        a1, b1, c1 = field(x, y, z)
        a2, b2, c2 = field(x + 0.5 * h * a1, y + 0.5 * h * b1, z + 0.5 * h * c1)
        a3, b3, c3 = field(x + 0.5 * h * a2, y + 0.5 * h * b2, z + 0.5 * h * c2)
        a4, b4, c4 = field(x + h * a3, y + h * b3, z + h * c3)
        w = h / 6.0
        x += w * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        y += w * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        z += w * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        if x * x + y * y + z * z > limit:
            _reject(times[i], h)
        out[i] = x, y, z
    return out


def _integrate_batch(f, u, times):
    limit = (1 + STEP_REJECT_TOL) ** 2
    states = np.empty((len(times),) + u.shape)
    states[0] = u
    for i in range(1, len(times)):
        h = times[i] - times[i - 1]
        u = rk4_step(f, u, h)
        if np.any(np.sum(u * u, axis=-1) > limit):
            _reject(times[i], h)
        states[i] = u
    return states


def time_grid(t_end: float, dt: float) -> np.ndarray:
    """``0, dt, 2 dt, ...`` ending exactly at ``t_end``."""
    n_full = int(np.floor(t_end / dt + 1e-9))
    times = dt * np.arange(n_full + 1)
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        return np.append(times, t_end)
    times[-1] = t_end
    return times


def integrate(model: ModelSpec, u0, t_end: float, dt: float = DEFAULT_DT) -> Trajectory:
    """Classical fixed-step RK4 integration of :func:`model_rhs`.

    ``u0`` may be a single Bloch vector or a stack of shape ``(k, 3)``.  The
    last step is shortened so the trajectory ends exactly at ``t_end``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be non-negative, got {t_end}")
    u = np.array(u0, dtype=float)
    if u.shape[-1] != 3:
        raise ValueError("u0 must end in an axis of length 3")
    if np.any(np.linalg.norm(u, axis=-1) > 1 + qcore.BALL_TOL):
        raise ValueError("initial state outside the Bloch ball")

    times = time_grid(t_end, dt)

    if u.shape == (3,):
        states = _integrate_single(_scalar_field(model), tuple(u), times)
    else:
        states = _integrate_batch(lambda y: model_rhs(model, y), u, times)
    return Trajectory(times, states)


def richardson_error(model: ModelSpec, u0, t_end: float, dt: float = DEFAULT_DT) -> float:
    """Estimated global error at ``t_end`` from a half-step comparison."""
    coarse = integrate(model, u0, t_end, dt).final
    fine = integrate(model, u0, t_end, dt / 2).final
    return float(np.max(np.abs(coarse - fine)) * 16 / 15)


def decay_uz_exact(uz0, gamma: float, t):
    """``u_z(t)`` under pair decay: ``1 - u_z`` falls off like ``1/t``."""
    uz0 = np.asarray(uz0, dtype=float)
    t = np.asarray(t, dtype=float)
    gap0 = 1.0 - uz0
    with np.errstate(divide="ignore"):
        inv = np.where(gap0 > 0, 1.0 / np.where(gap0 > 0, gap0, 1.0) + 0.5 * gamma * t, np.inf)
    out = 1.0 - 1.0 / inv
    return float(out) if out.ndim == 0 else out


def decay_transverse_exact(u0, gamma: float, t) -> np.ndarray:
    """Full Bloch vector under pair decay; the orbit is a parabola.

    A scalar ``t`` returns shape ``(3,)``; an array of times returns
    ``(len(t), 3)``.
    """
    u0 = np.asarray(u0, dtype=float)
    t = np.asarray(t, dtype=float)
    gap0 = 1.0 - u0[2]
    if gap0 <= 0:
        return np.broadcast_to(u0, t.shape + (3,)).copy()
    uz = np.asarray(decay_uz_exact(u0[2], gamma, t))
    scale = np.sqrt((1.0 - uz) / gap0)
    return np.stack([u0[0] * scale, u0[1] * scale, uz], axis=-1)


def dephasing_exact(u0, theta: float, gamma: float, t) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    t = np.asarray(t, dtype=float)
    damp = np.exp(-dephasing_rate(u0[2], theta, gamma) * t)
    return np.stack([u0[0] * damp, u0[1] * damp, np.broadcast_to(u0[2], damp.shape)], axis=-1)


def hemisphere_exact(u0, t, gamma: float = 1.0) -> np.ndarray:
    """Singlet purification: ``u_z`` floats up to ``sqrt(1 - u_x^2 - u_y^2)``.

    Pure states and the ``g = 0`` rim are fixed points and are returned
    without evaluating the inverse tanh.
    """
    u0 = np.asarray(u0, dtype=float)
    t = np.asarray(t, dtype=float)
    g = np.sqrt(max(0.0, 1.0 - u0[0] ** 2 - u0[1] ** 2))
    if g == 0.0 or abs(u0[2]) >= g:
        return np.broadcast_to(u0, t.shape + (3,)).copy()
    uz = g * np.tanh(0.25 * gamma * g * t + np.arctanh(u0[2] / g))
    return np.stack(
        [np.broadcast_to(u0[0], uz.shape), np.broadcast_to(u0[1], uz.shape), uz], axis=-1
    )


_AXES = {"x": 0, "y": 1, "z": 2}


def fit_exponential_rate(
    traj: Trajectory,
    component="x",
    *,
    fixed_point: float = 0.0,
    predicted_rate: float | None = None,
    window: float | None = None,
    samples: int = 200,
) -> RateReport:
    """Least-squares exponential rate of ``|u_k(t) - fixed_point|``.

    The fit window starts at the first stored time and spans ``window``
    time units; by default ``5 / predicted_rate`` (or the whole trajectory
    when no positive prediction is given).  ``residual`` is the largest
    deviation of ``log|u_k - fixed_point|`` from the fitted line.
    """
    axis = _AXES.get(component, component)
    if traj.states.ndim != 2:
        raise ValueError("rate fits need a single trajectory, not a batch")
    times = traj.times
    if window is None and predicted_rate is not None and predicted_rate > 0:
        window = 5.0 / predicted_rate
    t_stop = times[-1] if window is None else min(times[-1], times[0] + window)
    last = int(np.searchsorted(times, t_stop, side="right")) - 1
    if last < 1:
        raise ValueError("fit window holds fewer than two samples")
    idx = np.unique(np.round(np.linspace(0, last, samples)).astype(int))

    y = traj.states[idx, axis] - fixed_point
    if np.any(y == 0) or np.any(np.sign(y) != np.sign(y[0])):
        raise ValueError("component reaches zero or changes sign inside the fit window")
    t = times[idx]
    logs = np.log(np.abs(y))
    slope, intercept = np.polyfit(t, logs, 1)
    residual = float(np.max(np.abs(logs - (slope * t + intercept))))
    predicted = float("nan") if predicted_rate is None else float(predicted_rate)
    return RateReport(fitted_rate=float(-slope), predicted_rate=predicted, residual=residual)


def dephasing_rate_scan(theta: float, uz_values, gamma: float = 1.0, transverse: float = 1e-4, t_end: float = 10.0, dt: float = DEFAULT_DT):
    """Fitted transverse decay rate at each ``u_z`` in ``uz_values``.

    The field is linear in ``(u_x, u_y)``, so a small transverse probe
    measures the rate at ``u_z`` itself, poles included.  Returns the rate
    reports and the trajectories they were fitted on.
    """
    model = ModelSpec.pair_dephasing(theta, gamma)
    reports, trajs = [], []
    for uz in uz_values:
        u0 = np.array([transverse, 0.0, uz * math.sqrt(1.0 - transverse**2)])
        traj = integrate(model, u0, t_end, dt)
        predicted = float(dephasing_rate(u0[2], theta, gamma))
        reports.append(fit_exponential_rate(traj, "x", predicted_rate=predicted))
        trajs.append(traj)
    return reports, trajs
