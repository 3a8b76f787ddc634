"""
Quadrotor rigid-body model, motor-limit clipping and forward Euler stepping.

Every function accepts arrays with an optional leading batch dimension, so the
optimizer rolls out N samples through the same code the plant uses.
Quaternions are (w, x, y, z), body-to-world.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Motor thrusts within this band of a limit count as feasible.
_CLAMP_TOL = 1e-9


class DynamicsDomainError(ValueError):
    """Raised when a dynamics input is not finite."""


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.21
    inertia: Tuple[float, float, float] = (1.98e-3, 1.98e-3, 3.95e-3)
    gravity: Tuple[float, float, float] = (0.0, 0.0, -9.81)
    arm_length: float = 0.194
    thrust_to_weight: float = 6.8
    n_rotors: int = 4
    k_rate: float = 20.0
    yaw_torque_coeff: float = 0.016
    collision_radius: float = 0.15

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise ValueError(f"inertia needs three positive entries, got {self.inertia}")
        if self.thrust_to_weight <= 1:
            raise ValueError("thrust_to_weight must exceed 1 to hover")
        if self.n_rotors != 4:
            raise ValueError("only the quad-X mixer (n_rotors=4) is supported")

    @cached_property
    def inertia_vector(self) -> np.ndarray:
        return np.asarray(self.inertia, dtype=np.float64)

    @cached_property
    def gravity_vector(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=np.float64)

    @property
    def hover_thrust(self) -> float:
        return self.mass * abs(self.gravity[2])

    @property
    def c_max(self) -> float:
        return self.thrust_to_weight * self.hover_thrust

    @property
    def motor_max(self) -> float:
        return self.c_max / self.n_rotors

    @cached_property
    def allocation(self) -> np.ndarray:
        """Maps motor thrusts (f0..f3) to (c, tau_x, tau_y, tau_z), quad-X at 45 degrees."""
        d = self.arm_length / math.sqrt(2.0)
        k = self.yaw_torque_coeff
        # motors at (d, d), (-d, d), (-d, -d), (d, -d); spin alternates
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [d, d, -d, -d],
                [-d, d, d, -d],
                [k, -k, k, -k],
            ]
        )

    @cached_property
    def allocation_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.allocation)


@dataclass
class QuadState:
    p_WB: np.ndarray
    q_WB: np.ndarray
    v_WB: np.ndarray
    omega_B: np.ndarray

    @classmethod
    def hover(cls, position, yaw: float = 0.0) -> "QuadState":
        return cls(
            p_WB=np.asarray(position, dtype=np.float64).copy(),
            q_WB=quat_from_yaw(yaw),
            v_WB=np.zeros(3),
            omega_B=np.zeros(3),
        )

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "QuadState":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[..., 0:3], x[..., 3:7], x[..., 7:10], x[..., 10:13])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p_WB, self.q_WB, self.v_WB, self.omega_B], axis=-1)

    def rotation(self) -> np.ndarray:
        return quat_to_rotation(self.q_WB)

    def yaw(self):
        return yaw_of(self.q_WB)

    def is_finite(self):
        return np.all(np.isfinite(self.to_vector()), axis=-1)


@dataclass
class ControlCommand:
    c: float
    omega_cmd: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_vector(cls, u: np.ndarray) -> "ControlCommand":
        u = np.asarray(u, dtype=np.float64)
        return cls(c=u[..., 0], omega_cmd=u[..., 1:4])

    def as_vector(self) -> np.ndarray:
        c = np.asarray(self.c, dtype=np.float64)
        return np.concatenate([c[..., None], np.asarray(self.omega_cmd, dtype=np.float64)], axis=-1)


@dataclass
class StateDerivative:
    p_dot: np.ndarray
    q_dot: np.ndarray
    v_dot: np.ndarray
    omega_dot: np.ndarray


def hover_command(params: QuadParams) -> ControlCommand:
    return ControlCommand(c=params.hover_thrust, omega_cmd=np.zeros(3))


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)])


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        [1 - 2 * (qy**2 + qz**2), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy)],
        [2 * (qx * qy + qw * qz), 1 - 2 * (qx**2 + qz**2), 2 * (qy * qz - qw * qx)],
        [2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx**2 + qy**2)],
    ]
    return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


def body_x_axis(q: np.ndarray) -> np.ndarray:
    """First column of R(q): the camera principal axis in the world frame."""
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [1 - 2 * (qy**2 + qz**2), 2 * (qx * qy + qw * qz), 2 * (qx * qz - qw * qy)], axis=-1
    )


def body_z_axis(q: np.ndarray) -> np.ndarray:
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [2 * (qx * qz + qw * qy), 2 * (qy * qz - qw * qx), 1 - 2 * (qx**2 + qy**2)], axis=-1
    )


def yaw_of(q: np.ndarray):
    """psi = atan2(R[1,0], R[0,0])."""
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.arctan2(2 * (qx * qy + qw * qz), 1 - 2 * (qy**2 + qz**2))


def rotate(q: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """R(q) @ vec with broadcasting; elementwise so batch size never changes the result."""
    R = quat_to_rotation(q)
    return R[..., 0] * vec[..., 0:1] + R[..., 1] * vec[..., 1:2] + R[..., 2] * vec[..., 2:3]


def _mix(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    # Fixed-order products instead of BLAS matmul.
    out = matrix[:, 0] * vec[..., 0:1]
    for j in range(1, matrix.shape[1]):
        out = out + matrix[:, j] * vec[..., j : j + 1]
    return out


def _require_finite(name: str, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DynamicsDomainError(f"non-finite {name} passed to the quadrotor model")


def _derivative(s: QuadState, c, tau_B: np.ndarray, params: QuadParams) -> StateDerivative:
    q = s.q_WB
    w = s.omega_B
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    q_dot = 0.5 * np.stack(
        [
            -wx * qx - wy * qy - wz * qz,
            wx * qw + wz * qy - wy * qz,
            wy * qw - wz * qx + wx * qz,
            wz * qw + wy * qx - wx * qy,
        ],
        axis=-1,
    )
    c = np.asarray(c, dtype=np.float64)
    v_dot = body_z_axis(q) * (c[..., None] / params.mass) + params.gravity_vector

    J = params.inertia_vector
    omega_dot = (tau_B - np.cross(w, J * w)) / J
    return StateDerivative(p_dot=s.v_WB, q_dot=q_dot, v_dot=v_dot, omega_dot=omega_dot)


def state_derivative(s: QuadState, c, tau_B, params: QuadParams) -> StateDerivative:
    """Time derivative of (p, q, v, omega) for a given thrust and body torque."""
    tau_B = np.asarray(tau_B, dtype=np.float64)
    _require_finite("state", s.to_vector())
    _require_finite("thrust/torque", np.asarray(c, dtype=np.float64), tau_B)
    return _derivative(s, c, tau_B, params)


def motor_thrusts(c, tau_B: np.ndarray, params: QuadParams) -> np.ndarray:
    wrench = np.concatenate([np.asarray(c, dtype=np.float64)[..., None], tau_B], axis=-1)
    return _mix(params.allocation_inverse, wrench)


def clip_command(
    u: ControlCommand, s: QuadState, params: QuadParams
) -> Tuple[ControlCommand, np.ndarray]:
    """
    Runs the inner rate loop, allocates to motors, clamps each motor to
    [0, c_max / n_rotors] and rebuilds the realized thrust and torque.
    The returned command carries the body rates that reproduce the realized
    torque, so clipping a clipped command leaves it unchanged.
    """
    c = np.asarray(u.c, dtype=np.float64)
    omega_cmd = np.asarray(u.omega_cmd, dtype=np.float64)
    w = s.omega_B
    J = params.inertia_vector
    gain = J * params.k_rate

    gyro = np.cross(w, J * w)
    tau_des = gain * (omega_cmd - w) + gyro

    f = motor_thrusts(c, tau_des, params)
    f_max = params.motor_max
    clamped = np.any((f < -_CLAMP_TOL) | (f > f_max + _CLAMP_TOL), axis=-1)
    if not np.any(clamped):
        return ControlCommand(c=c, omega_cmd=omega_cmd), tau_des

    realized = _mix(params.allocation, np.clip(f, 0.0, f_max))
    c_out = np.where(clamped, realized[..., 0], c)
    tau_out = np.where(clamped[..., None], realized[..., 1:], tau_des)
    omega_out = np.where(clamped[..., None], w + (tau_out - gyro) / gain, omega_cmd)
    return ControlCommand(c=c_out, omega_cmd=omega_out), tau_out


def step(
    s: QuadState,
    u: ControlCommand,
    dt: float,
    params: QuadParams,
    validate: bool = True,
) -> QuadState:
    """Clip, take one explicit Euler step, re-normalize the quaternion."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if validate:
        _require_finite("state", s.to_vector())
        _require_finite("command", u.as_vector())

    u_clip, tau = clip_command(u, s, params)
    d = _derivative(s, u_clip.c, tau, params)

    q = s.q_WB + dt * d.q_dot
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return QuadState(
        p_WB=s.p_WB + dt * d.p_dot,
        q_WB=q,
        v_WB=s.v_WB + dt * d.v_dot,
        omega_B=s.omega_B + dt * d.omega_dot,
    )
