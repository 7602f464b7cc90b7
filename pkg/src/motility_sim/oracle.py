"""Independent reference solutions: the homogeneous ODE reduction and heat-mode decay."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GridSpec, ModelParams
from .errors import DomainError
from .operators import discrete_eigenvalue


@dataclass(frozen=True)
class OdeState:
    u: float
    v: float
    w: float
    t: float = 0.0


@dataclass(frozen=True)
class OdeTrajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @property
    def final(self) -> OdeState:
        return OdeState(float(self.u[-1]), float(self.v[-1]), float(self.w[-1]), float(self.t[-1]))

    def __len__(self):
        return len(self.t)


def _rhs(p: ModelParams, u, v, w):
    uptake = u * float(p.response(max(w, 0.0)))
    return p.beta * uptake, u - v, -uptake


def ode_integrate(s0: OdeState, p: ModelParams, t_end: float, dt: float, every: int = 1) -> OdeTrajectory:
    """Classical RK4 for u' = beta u f(w), v' = u - v, w' = -u f(w).

    Records every ``every``-th step plus the endpoint; step ``n`` ends at
    ``t0 + n dt`` and the last one is shortened to land on ``t_end``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive (got {dt})")
    if t_end < s0.t:
        raise DomainError(f"t_end {t_end} precedes start time {s0.t}")
    u, v, w, t = s0.u, s0.v, s0.w, s0.t
    ts, us, vs, ws = [t], [u], [v], [w]
    n_steps = max(0, math.ceil((t_end - s0.t) / dt - 1e-9))
    for n in range(1, n_steps + 1):
        t_next = t_end if n == n_steps else s0.t + n * dt
        h = t_next - t
        k1 = _rhs(p, u, v, w)
        k2 = _rhs(p, u + 0.5 * h * k1[0], v + 0.5 * h * k1[1], w + 0.5 * h * k1[2])
        k3 = _rhs(p, u + 0.5 * h * k2[0], v + 0.5 * h * k2[1], w + 0.5 * h * k2[2])
        k4 = _rhs(p, u + h * k3[0], v + h * k3[1], w + h * k3[2])
        u += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        w += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t = t_next
        if u < -1e-12 or w < -1e-12:
            raise DomainError(f"ODE state left the nonnegative orthant at t={t}: u={u}, w={w}")
        if n % every == 0 or n == n_steps:
            ts.append(t)
            us.append(u)
            vs.append(v)
            ws.append(w)
    return OdeTrajectory(np.array(ts), np.array(us), np.array(vs), np.array(ws))


def heat_mode_initial(grid: GridSpec, amplitude: float) -> np.ndarray:
    x, _ = grid.centers()
    return 1.0 + amplitude * np.cos(np.pi * x / grid.lx)


def heat_mode_rate(grid: GridSpec, d_coef: float) -> float:
    """Semi-discrete decay exponent ``D lambda_h - 1`` of the first x-mode."""
    return d_coef * discrete_eigenvalue(grid.nx, grid.lx) - 1.0


def heat_mode_decay(grid: GridSpec, d_coef: float, t_end: float, amplitude: float = 0.1) -> np.ndarray:
    """Semi-discrete solution of ``v_t = D Lap_h v + 1 - v`` from ``1 + a cos(pi x / lx)``."""
    if t_end < 0:
        raise DomainError(f"t_end must be >= 0 (got {t_end})")
    x, _ = grid.centers()
    return 1.0 + amplitude * math.exp(heat_mode_rate(grid, d_coef) * t_end) * np.cos(np.pi * x / grid.lx)
