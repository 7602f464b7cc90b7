"""IMEX time stepping for the coupled (u, v, w) system.

The u-equation (degenerate, quasilinear) is advanced by forward Euler under
an explicit stability bound. The linear diffusion in v and w is treated by
backward Euler, solved with a matrix-free Jacobi-preconditioned conjugate
gradient. Both reactions use the same per-cell quantity ``u^n f(w^n)`` so
the combined mass ``sum(u + beta w)`` is exchanged exactly.
"""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import FieldState, GridSpec, ModelParams, first_index, target_from_state
from .errors import NumericsError, PositivityError, SimulationError, SolverError, StiffnessError
from .operators import laplacian_neumann, motility_flux_divergence, regularization_divergence

logger = logging.getLogger(__name__)

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"
ABORTED = "aborted"


@dataclass(frozen=True)
class StepControl:
    dt_init: float = 1e-4
    dt_min: float = 1e-12
    dt_max: float = 0.1
    safety: float = 0.5
    cg_tol: float = 1e-10
    cg_max_iter: int = 1000
    negativity_tol: float = 1e-12

    def validate(self) -> list[str]:
        errors = []
        for name in ("dt_init", "dt_min", "dt_max", "cg_tol"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                errors.append(f"control.{name} must be finite and > 0 (got {value!r})")
        if not errors and not (self.dt_min <= self.dt_init <= self.dt_max):
            errors.append("control requires dt_min <= dt_init <= dt_max")
        if not (isinstance(self.safety, (int, float)) and 0 < self.safety <= 1):
            errors.append(f"control.safety must lie in (0, 1] (got {self.safety!r})")
        if isinstance(self.cg_max_iter, bool) or not isinstance(self.cg_max_iter, int) or self.cg_max_iter <= 0:
            errors.append(f"control.cg_max_iter must be a positive integer (got {self.cg_max_iter!r})")
        if not (isinstance(self.negativity_tol, (int, float)) and self.negativity_tol >= 0):
            errors.append(f"control.negativity_tol must be >= 0 (got {self.negativity_tol!r})")
        return errors


@dataclass(frozen=True)
class StepOutcome:
    state: FieldState
    dt_used: float
    cg_iters_v: int
    cg_iters_w: int
    flushed_mass: float
    # sum(u^n f(w^n)) * cell_area: the rate actually exchanged this step
    consumption: float = 0.0


@dataclass(frozen=True)
class StopRule:
    max_time: float = 100.0
    tol_conv: Optional[float] = None
    max_steps: Optional[int] = None


@dataclass
class RunReport:
    classification: str
    u_star: float
    final_norms: dict
    time_reached: float
    steps: int
    flushed_mass_total: float
    message: str = ""
    v_floor_violations: int = 0
    state: Optional[FieldState] = field(default=None, repr=False)

    @property
    def final_norm(self) -> float:
        return self.final_norms["total"]


# -- stability ---------------------------------------------------------------

def _potential_slope(u: np.ndarray, p: ModelParams) -> np.ndarray:
    """d/du of u (u + eps)^(m-1), i.e. (m u + eps) (u + eps)^(m-2); zero where u + eps = 0."""
    base = u + p.eps
    safe = np.where(base > 0, base, 1.0)
    return np.where(base > 0, (p.m * u + p.eps) * np.power(safe, p.m - 2.0), 0.0)


def diffusivity_bound(state: FieldState, p: ModelParams) -> float:
    kappa = _potential_slope(state.u, p) * np.power(state.v, -p.alpha)
    if p.regularized:
        kappa = kappa + p.eps * p.cap_m * np.power(state.u + 1.0, p.cap_m - 1.0)
    return float(np.max(kappa))


def reaction_bound(state: FieldState, p: ModelParams) -> float:
    f_max = float(p.response(float(np.max(state.w))))
    rho = max(p.beta * f_max, f_max)
    # explicit sink in w must not overshoot zero: dt * u f(w) / w <= 1
    pos = state.w > 0
    if np.any(pos):
        wp = state.w[pos]
        rho = max(rho, float(np.max(state.u[pos] * p.response(wp) / wp)))
    return rho


def stable_dt(state: FieldState, p: ModelParams, ctl: StepControl) -> float:
    """Largest admissible explicit step, clamped to ``[dt_min, dt_max]``."""
    g = state.grid
    denom = 4.0 * diffusivity_bound(state, p) * (1.0 / g.hx**2 + 1.0 / g.hy**2) + reaction_bound(state, p)
    dt = ctl.safety / denom if denom > 0 else math.inf
    if dt < ctl.dt_min:
        raise StiffnessError(f"stable step {dt:.3e} below dt_min {ctl.dt_min:.3e}")
    return min(dt, ctl.dt_max)


# -- linear solves -----------------------------------------------------------

@lru_cache(maxsize=32)
def _neighbour_weights(grid: GridSpec) -> np.ndarray:
    """Diagonal of -laplacian_neumann: interior faces per cell over spacing^2."""
    cx = np.full(grid.nx, 2.0)
    cx[0] = cx[-1] = 1.0
    cy = np.full(grid.ny, 2.0)
    cy[0] = cy[-1] = 1.0
    return cx[:, None] / grid.hx**2 + cy[None, :] / grid.hy**2


def solve_shifted_diffusion(b: np.ndarray, shift: float, diff: float, grid: GridSpec,
                            x0: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Solve ``(shift I - diff Lap_h) x = b`` by Jacobi-preconditioned CG.

    Converges when ``||r||_2 <= tol ||b||_2``. Afterwards the mean of the
    residual is removed along the constant eigenvector (eigenvalue ``shift``),
    so ``sum(shift x - b)`` vanishes to round-off and the solve conserves mass.
    """
    peak = float(np.max(np.abs(b)))
    if peak == 0.0:
        return np.zeros_like(b), 0
    # power-of-two rescaling is exact and keeps inner products of tiny fields from underflowing
    scale = math.ldexp(1.0, math.frexp(peak)[1])
    b = b / scale
    bnorm = float(np.linalg.norm(b))

    def apply(x):
        return shift * x - diff * laplacian_neumann(x, grid)

    inv_diag = 1.0 / (shift + diff * _neighbour_weights(grid))
    x = np.array(x0, dtype=np.float64) / scale
    r = b - apply(x)
    rnorm = float(np.linalg.norm(r))
    iters = 0
    if rnorm > tol * bnorm:
        z = inv_diag * r
        d = z.copy()
        rz = float(np.vdot(r, z))
        while True:
            ad = apply(d)
            step = rz / float(np.vdot(d, ad))
            x += step * d
            r -= step * ad
            iters += 1
            rnorm = float(np.linalg.norm(r))
            if rnorm <= tol * bnorm:
                break
            if iters >= max_iter:
                raise SolverError(
                    f"CG did not converge in {iters} iterations (relative residual {rnorm / bnorm:.3e})",
                    residual=rnorm / bnorm, iterations=iters)
            z = inv_diag * r
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new
        r = b - apply(x)
    x += np.mean(r) / shift
    return x * scale, iters


def implicit_v_update(v: np.ndarray, u: np.ndarray, dt: float, d_coef: float, grid: GridSpec,
                      ctl: StepControl) -> tuple[np.ndarray, int]:
    """Backward Euler for ``v_t = D Lap v - v + u`` with ``u`` frozen at level n."""
    return solve_shifted_diffusion(v + dt * u, 1.0 + dt, dt * d_coef, grid, v,
                                   ctl.cg_tol, ctl.cg_max_iter)


def implicit_w_update(w: np.ndarray, sink: np.ndarray, dt: float, grid: GridSpec,
                      ctl: StepControl) -> tuple[np.ndarray, int]:
    """Backward Euler for ``w_t = Lap w - sink`` with an explicit sink."""
    return solve_shifted_diffusion(w - dt * sink, 1.0, dt, grid, w, ctl.cg_tol, ctl.cg_max_iter)


# -- one step ----------------------------------------------------------------

def _flush(arr: np.ndarray, name: str, tol: float) -> float:
    """Zero small negatives in place; return the removed (absolute) sum."""
    neg = arr < 0
    if not np.any(neg):
        return 0.0
    if np.any(arr <= -tol):
        bad = arr <= -tol
        raise PositivityError(f"{name} fell below -{tol:g} (min {float(np.min(arr)):.3e})", first_index(bad))
    removed = -float(np.sum(arr[neg]))
    arr[neg] = 0.0
    return removed


def step(state: FieldState, p: ModelParams, ctl: StepControl,
         dt_cap: Optional[float] = None) -> StepOutcome:
    """Advance ``state`` by one IMEX step of size ``min(stable_dt, dt_cap)``."""
    grid = state.grid
    u, v, w = state.u, state.v, state.w
    dt = stable_dt(state, p, ctl)
    if dt_cap is not None:
        dt = min(dt, dt_cap)

    uptake = u * p.response(w)
    rhs_u = motility_flux_divergence(u, v, grid, p) + p.beta * uptake
    if p.regularized:
        rhs_u += regularization_divergence(u, grid, p)
    u_new = u + dt * rhs_u

    w_new, iters_w = implicit_w_update(w, uptake, dt, grid, ctl)
    v_new, iters_v = implicit_v_update(v, u, dt, p.d_coef, grid, ctl)

    for name, arr in (("u", u_new), ("v", v_new), ("w", w_new)):
        if not np.all(np.isfinite(arr)):
            raise NumericsError(f"non-finite value in {name} at t={state.t + dt:.6g}")

    flushed = _flush(u_new, "u", ctl.negativity_tol) + p.beta * _flush(w_new, "w", ctl.negativity_tol)
    if np.any(v_new <= 0):
        raise PositivityError("v lost strict positivity", first_index(v_new <= 0))

    new_state = FieldState(u_new, v_new, w_new, grid, state.t + dt)
    return StepOutcome(new_state, dt, iters_v, iters_w, flushed * grid.cell_area,
                       float(np.sum(uptake)) * grid.cell_area)


# -- driver ------------------------------------------------------------------

def target_norms(state: FieldState, u_star: float) -> dict:
    nu = float(np.max(np.abs(state.u - u_star)))
    nv = float(np.max(np.abs(state.v - u_star)))
    nw = float(np.max(np.abs(state.w)))
    return {"u": nu, "v": nv, "w": nw, "total": nu + nv + nw}


Callback = Callable[[FieldState, Optional[StepOutcome]], None]


def run_until(state: FieldState, p: ModelParams, ctl: StepControl, stop: StopRule,
              callback: Optional[Callback] = None, stride: int = 50,
              on_step: Optional[Callable[[StepOutcome], None]] = None,
              stop_times: Sequence[float] = (), on_time: Optional[Callable[[FieldState], None]] = None,
              v_floor: Optional[float] = None, floor_after: float = 2.0) -> RunReport:
    """Step until convergence, budget exhaustion, or an error.

    ``callback(state, outcome)`` receives the initial state (``outcome=None``),
    every ``stride``-th state, and the final state; ``on_step(outcome)`` sees
    every accepted step. Steps are shortened to land
    exactly on each of ``stop_times`` (where ``on_time`` is invoked) and on
    ``stop.max_time``. Errors during stepping produce an ``aborted`` report.
    """
    state.validate()
    u_star = target_from_state(state, p.beta)
    pending = sorted(t for t in stop_times if t >= state.t)
    steps = 0
    flushed_total = 0.0
    floor_hits = 0
    dt_cap = ctl.dt_init
    last = None
    message = ""

    def emit_due_times(s):
        while pending and pending[0] <= s.t:
            pending.pop(0)
            if on_time is not None:
                on_time(s)

    if callback is not None:
        callback(state, None)
    emit_due_times(state)

    while True:
        norms = target_norms(state, u_star)
        if stop.tol_conv is not None and norms["total"] < stop.tol_conv:
            classification = CONVERGED
            break
        remaining = stop.max_time - state.t
        if remaining <= 0 or (stop.max_steps is not None and steps >= stop.max_steps):
            classification = BUDGET_EXHAUSTED
            break
        cap = min(dt_cap, ctl.dt_max, remaining)
        if pending:
            cap = min(cap, pending[0] - state.t)
        try:
            last = step(state, p, ctl, dt_cap=cap)
        except SimulationError as exc:
            classification = ABORTED
            message = f"{type(exc).__name__}: {exc}"
            logger.warning("run aborted at t=%.6g after %d steps: %s", state.t, steps, message)
            break
        steps += 1
        dt_cap = 2.0 * last.dt_used
        flushed_total += last.flushed_mass
        # snap onto target times to avoid round-off slivers
        t_new = last.state.t
        target = min([stop.max_time] + pending[:1])
        if abs(t_new - target) <= 1e-12 * max(1.0, abs(target)):
            last = replace(last, state=replace(last.state, t=target))
        state = last.state
        if on_step is not None:
            on_step(last)
        if v_floor is not None and state.t > floor_after and float(np.min(state.v)) < v_floor:
            floor_hits += 1
            if floor_hits == 1:
                logger.warning("min v %.3e below monitoring floor %.3e at t=%.6g",
                               float(np.min(state.v)), v_floor, state.t)
        emit_due_times(state)
        if callback is not None and steps % stride == 0:
            callback(state, last)

    if callback is not None and steps % stride != 0 and last is not None and last.state is state:
        callback(state, last)
    return RunReport(classification, u_star, target_norms(state, u_star), state.t, steps,
                     flushed_total, message, floor_hits, state)
