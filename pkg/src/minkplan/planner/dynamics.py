"""Vehicle dynamics with analytic Jacobians and RK4 discretization.

Models expose continuous-time f(x, u) plus exact first derivatives, and the
translation maps picking out each collision disk's center. The car is the
dynamic bicycle model with simplified Pacejka tire forces; every numeric
parameter lives in a YAML file so swapping vehicles is a data change.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CAR_PARAMS = DATA_DIR / "racing_car.yaml"


class DynamicsError(ValueError):
    pass


def rk4_step(model, x, u, dt: float) -> np.ndarray:
    """Classical Runge-Kutta step with zero-order-hold input."""
    if dt <= 0.0:
        raise DynamicsError("dt must be positive")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise DynamicsError("non-finite state or input")
    k1 = model.f(x, u)
    k2 = model.f(x + 0.5 * dt * k1, u)
    k3 = model.f(x + 0.5 * dt * k2, u)
    k4 = model.f(x + dt * k3, u)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DynamicsError("integration produced non-finite state")
    return out


def rk4_step_jacobians(model, x, u, dt: float):
    """Exact Jacobians of the RK4 map by chain rule through the stages."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = model.n_x
    eye = np.eye(n)

    k1 = model.f(x, u)
    x2 = x + 0.5 * dt * k1
    k2 = model.f(x2, u)
    x3 = x + 0.5 * dt * k2
    k3 = model.f(x3, u)
    x4 = x + dt * k3

    J1x, J1u = model.f_jac(x, u)
    J2x, J2u = model.f_jac(x2, u)
    J3x, J3u = model.f_jac(x3, u)
    J4x, J4u = model.f_jac(x4, u)

    K1x, K1u = J1x, J1u
    K2x = J2x @ (eye + 0.5 * dt * K1x)
    K2u = J2x @ (0.5 * dt * K1u) + J2u
    K3x = J3x @ (eye + 0.5 * dt * K2x)
    K3u = J3x @ (0.5 * dt * K2u) + J3u
    K4x = J4x @ (eye + dt * K3x)
    K4u = J4x @ (dt * K3u) + J4u

    A = eye + (dt / 6.0) * (K1x + 2.0 * K2x + 2.0 * K3x + K4x)
    B = (dt / 6.0) * (K1u + 2.0 * K2u + 2.0 * K3u + K4u)
    return A, B


def rk4_rollout(model, x0, U, dt: float) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    X = np.empty((U.shape[0] + 1, model.n_x))
    X[0] = np.asarray(x0, dtype=float)
    for k in range(U.shape[0]):
        X[k + 1] = rk4_step(model, X[k], U[k], dt)
    return X


def rk4_defects(model, X, U, dt: float) -> np.ndarray:
    """x_{k+1} - RK4(x_k, u_k) for all k at once (models broadcast over k)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    x = X[:-1]
    k1 = model.f(x, U)
    k2 = model.f(x + 0.5 * dt * k1, U)
    k3 = model.f(x + 0.5 * dt * k2, U)
    k4 = model.f(x + dt * k3, U)
    return X[1:] - (x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def rk4_defect_jacobians(model, X, U, dt: float):
    """Batched (A_k, B_k) of the RK4 map along a trajectory."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    x = X[:-1]
    n = model.n_x
    eye = np.eye(n)

    k1 = model.f(x, U)
    x2 = x + 0.5 * dt * k1
    k2 = model.f(x2, U)
    x3 = x + 0.5 * dt * k2
    x4 = x + dt * model.f(x3, U)

    J1x, J1u = model.f_jac(x, U)
    J2x, J2u = model.f_jac(x2, U)
    J3x, J3u = model.f_jac(x3, U)
    J4x, J4u = model.f_jac(x4, U)

    K1x, K1u = J1x, J1u
    K2x = J2x @ (eye + 0.5 * dt * K1x)
    K2u = J2x @ (0.5 * dt * K1u) + J2u
    K3x = J3x @ (eye + 0.5 * dt * K2x)
    K3u = J3x @ (0.5 * dt * K2u) + J3u
    K4x = J4x @ (eye + dt * K3x)
    K4u = J4x @ (dt * K3u) + J4u

    A = eye + (dt / 6.0) * (K1x + 2.0 * K2x + 2.0 * K3x + K4x)
    B = (dt / 6.0) * (K1u + 2.0 * K2u + 2.0 * K3u + K4u)
    return A, B


@dataclass(frozen=True)
class CarParams:
    mass: float
    inertia_z: float
    length_front: float
    length_rear: float
    Bf: float
    Cf: float
    Df: float
    Br: float
    Cr: float
    Dr: float
    Cm1: float
    Cm2: float
    Cr0: float
    Cr2: float
    radius: float

    @staticmethod
    def from_yaml(path=DEFAULT_CAR_PARAMS) -> "CarParams":
        with open(path) as f:
            raw = yaml.safe_load(f)
        if raw.get("schema") != "minkplan.car_params.v1":
            raise DynamicsError(f"unknown car parameter schema {raw.get('schema')!r}")
        try:
            return CarParams(
                mass=float(raw["mass"]),
                inertia_z=float(raw["inertia_z"]),
                length_front=float(raw["length_front"]),
                length_rear=float(raw["length_rear"]),
                Bf=float(raw["tire_front"]["B"]),
                Cf=float(raw["tire_front"]["C"]),
                Df=float(raw["tire_front"]["D"]),
                Br=float(raw["tire_rear"]["B"]),
                Cr=float(raw["tire_rear"]["C"]),
                Dr=float(raw["tire_rear"]["D"]),
                Cm1=float(raw["drivetrain"]["Cm1"]),
                Cm2=float(raw["drivetrain"]["Cm2"]),
                Cr0=float(raw["drivetrain"]["Cr0"]),
                Cr2=float(raw["drivetrain"]["Cr2"]),
                radius=float(raw["vehicle"]["radius"]),
            )
        except KeyError as e:
            raise DynamicsError(f"car parameter file missing key {e}") from e


class CarModel:
    """Dynamic bicycle: states (px, py, psi, vx, vy, omega), inputs (d, delta).

    Tire slip uses atan2, so the model is smooth away from vx = 0; the planner
    operates at forward speeds near 1 m/s where this is well conditioned.
    """

    n_x = 6
    n_u = 2

    def __init__(self, params: CarParams | None = None):
        self.params = params or CarParams.from_yaml()
        # single disk at the position coordinates
        self.ball_radii = (self.params.radius,)
        T = np.zeros((2, 6))
        T[0, 0] = T[1, 1] = 1.0
        self._t_jacs = (T,)

    @property
    def n_b(self) -> int:
        return len(self.ball_radii)

    def translation(self, i: int, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., :2] if i == 0 else self._bad_disk(i)

    def translation_jacobian(self, i: int) -> np.ndarray:
        if i != 0:
            self._bad_disk(i)
        return self._t_jacs[0]

    def _bad_disk(self, i):
        raise DynamicsError(f"car has a single disk, got index {i}")

    def _forces(self, x, u):
        p = self.params
        vx, vy, w = x[..., 3], x[..., 4], x[..., 5]
        d, delta = u[..., 0], u[..., 1]
        qf = w * p.length_front + vy
        qr = w * p.length_rear - vy
        alpha_f = delta - np.arctan2(qf, vx)
        alpha_r = np.arctan2(qr, vx)
        Ffy = p.Df * np.sin(p.Cf * np.arctan(p.Bf * alpha_f))
        Fry = p.Dr * np.sin(p.Cr * np.arctan(p.Br * alpha_r))
        Frx = (p.Cm1 - p.Cm2 * vx) * d - p.Cr0 - p.Cr2 * vx**2
        return alpha_f, alpha_r, Ffy, Fry, Frx

    def f(self, x, u) -> np.ndarray:
        p = self.params
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        psi, vx, vy, w = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
        delta = u[..., 1]
        _, _, Ffy, Fry, Frx = self._forces(x, u)
        out = np.empty(np.broadcast(x[..., 0], u[..., 0]).shape + (6,))
        out[..., 0] = vx * np.cos(psi) - vy * np.sin(psi)
        out[..., 1] = vx * np.sin(psi) + vy * np.cos(psi)
        out[..., 2] = w
        out[..., 3] = (Frx - Ffy * np.sin(delta)) / p.mass + vy * w
        out[..., 4] = (Fry + Ffy * np.cos(delta)) / p.mass - vx * w
        out[..., 5] = (Ffy * p.length_front * np.cos(delta) - Fry * p.length_rear) / p.inertia_z
        return out

    def f_jac(self, x, u):
        p = self.params
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        psi, vx, vy, w = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
        d, delta = u[..., 0], u[..., 1]
        lf, lr = p.length_front, p.length_rear

        qf = w * lf + vy
        qr = w * lr - vy
        den_f = vx**2 + qf**2
        den_r = vx**2 + qr**2
        alpha_f = delta - np.arctan2(qf, vx)
        alpha_r = np.arctan2(qr, vx)
        # slip angle partials
        daf_dvx = qf / den_f
        daf_dvy = -vx / den_f
        daf_dw = -vx * lf / den_f
        dar_dvx = -qr / den_r
        dar_dvy = -vx / den_r
        dar_dw = vx * lr / den_r

        tf = np.arctan(p.Bf * alpha_f)
        tr = np.arctan(p.Br * alpha_r)
        Ffy = p.Df * np.sin(p.Cf * tf)
        Fry = p.Dr * np.sin(p.Cr * tr)
        dFfy = p.Df * np.cos(p.Cf * tf) * p.Cf * p.Bf / (1.0 + (p.Bf * alpha_f) ** 2)
        dFry = p.Dr * np.cos(p.Cr * tr) * p.Cr * p.Br / (1.0 + (p.Br * alpha_r) ** 2)
        dFrx_dvx = -p.Cm2 * d - 2.0 * p.Cr2 * vx
        dFrx_dd = p.Cm1 - p.Cm2 * vx

        sin_d, cos_d = np.sin(delta), np.cos(delta)
        shape = np.broadcast(x[..., 0], u[..., 0]).shape
        Jx = np.zeros(shape + (6, 6))
        Ju = np.zeros(shape + (6, 2))

        sp, cp = np.sin(psi), np.cos(psi)
        Jx[..., 0, 2] = -vx * sp - vy * cp
        Jx[..., 0, 3] = cp
        Jx[..., 0, 4] = -sp
        Jx[..., 1, 2] = vx * cp - vy * sp
        Jx[..., 1, 3] = sp
        Jx[..., 1, 4] = cp
        Jx[..., 2, 5] = 1.0

        m = p.mass
        Jx[..., 3, 3] = (dFrx_dvx - sin_d * dFfy * daf_dvx) / m
        Jx[..., 3, 4] = (-sin_d * dFfy * daf_dvy) / m + w
        Jx[..., 3, 5] = (-sin_d * dFfy * daf_dw) / m + vy
        Ju[..., 3, 0] = dFrx_dd / m
        Ju[..., 3, 1] = (-Ffy * cos_d - sin_d * dFfy) / m

        Jx[..., 4, 3] = (dFry * dar_dvx + cos_d * dFfy * daf_dvx) / m - w
        Jx[..., 4, 4] = (dFry * dar_dvy + cos_d * dFfy * daf_dvy) / m
        Jx[..., 4, 5] = (dFry * dar_dw + cos_d * dFfy * daf_dw) / m - vx
        Ju[..., 4, 1] = (-Ffy * sin_d + cos_d * dFfy) / m

        Iz = p.inertia_z
        Jx[..., 5, 3] = (lf * cos_d * dFfy * daf_dvx - lr * dFry * dar_dvx) / Iz
        Jx[..., 5, 4] = (lf * cos_d * dFfy * daf_dvy - lr * dFry * dar_dvy) / Iz
        Jx[..., 5, 5] = (lf * cos_d * dFfy * daf_dw - lr * dFry * dar_dw) / Iz
        Ju[..., 5, 1] = (-Ffy * lf * sin_d + lf * cos_d * dFfy) / Iz

        return Jx, Ju
