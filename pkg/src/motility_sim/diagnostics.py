"""Per-sample invariants, cumulative dissipation integrals, and monotonicity checks."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .core import FieldState, GridSpec, ModelParams
from .errors import DomainError
from .operators import grad_sq_integral, integral, weighted_power_integral
from .stepper import StepOutcome, target_norms

DELTA_FLOOR_FRACTION = 0.01


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_w: float
    mass_combined: float
    mass_v: float
    max_w: float
    min_v: float
    l2_u: float
    dirichlet_v: float
    dirichlet_u_pow: float
    duality_integrand: float
    consumption_rate: float
    lyapunov: float
    norm_to_target: float
    # not part of the CSV schema; feed the cumulative w-energy balance
    dirichlet_w: float = 0.0
    l2_w: float = 0.0
    weighted_consumption: float = 0.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def sample(state: FieldState, p: ModelParams, eta: float, u_star: float) -> DiagnosticsRecord:
    g = state.grid
    u, v, w = state.u, state.v, state.w
    uptake = u * p.response(w)
    mass_u = integral(u, g)
    mass_w = integral(w, g)
    l2_u = integral(u * u, g)
    dirichlet_v = grad_sq_integral(v, g)
    return DiagnosticsRecord(
        t=state.t,
        mass_u=mass_u,
        mass_w=mass_w,
        mass_combined=mass_u + p.beta * mass_w,
        mass_v=integral(v, g),
        max_w=float(np.max(w)),
        min_v=float(np.min(v)),
        l2_u=l2_u,
        dirichlet_v=dirichlet_v,
        dirichlet_u_pow=grad_sq_integral(np.power(u, 0.5 * (p.m + 1.0)), g),
        duality_integrand=weighted_power_integral(u, v, p.m + 1.0, p.alpha, g),
        consumption_rate=integral(uptake, g),
        lyapunov=l2_u + eta * dirichlet_v,
        norm_to_target=target_norms(state, u_star)["total"],
        dirichlet_w=grad_sq_integral(w, g),
        l2_w=integral(w * w, g),
        weighted_consumption=integral(uptake * w, g),
    )


@dataclass
class CumulativeIntegrals:
    consumption_total: float = 0.0
    dirichlet_v_total: float = 0.0
    dirichlet_w_total: float = 0.0
    dirichlet_u_pow_total: float = 0.0
    weighted_consumption_total: float = 0.0


class DiagnosticsAccumulator:
    """Running time integrals along one trajectory.

    Consumption is summed per step with the exact rate the stepper exchanged,
    so ``consumption_total == mass_w(0) - mass_w(t)`` holds to round-off. The
    Dirichlet integrals use the trapezoid rule between samples.
    """

    def __init__(self):
        self.totals = CumulativeIntegrals()
        self.history: list[DiagnosticsRecord] = []

    def add_step(self, outcome: StepOutcome) -> None:
        self.totals.consumption_total += outcome.dt_used * outcome.consumption

    def add_sample(self, rec: DiagnosticsRecord) -> None:
        if self.history:
            prev = self.history[-1]
            half_dt = 0.5 * (rec.t - prev.t)
            tot = self.totals
            tot.dirichlet_v_total += half_dt * (prev.dirichlet_v + rec.dirichlet_v)
            tot.dirichlet_w_total += half_dt * (prev.dirichlet_w + rec.dirichlet_w)
            tot.dirichlet_u_pow_total += half_dt * (prev.dirichlet_u_pow + rec.dirichlet_u_pow)
            tot.weighted_consumption_total += half_dt * (prev.weighted_consumption + rec.weighted_consumption)
        self.history.append(rec)


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    worst_violation: float
    time: Optional[float]


def check_monotone(history: Sequence[DiagnosticsRecord], ctl_tol: float) -> list[Verdict]:
    """Check the L1 identities and the max-norm monotonicity of w along ``history``.

    Each tolerance is ``ctl_tol`` times a scale: the initial combined mass for
    the mass checks, the initial ``max_w`` (or 1 if zero) for the w check.
    A positive ``worst_violation`` is the largest excess over the allowed bound.
    """
    if len(history) < 2:
        raise ValueError("check_monotone needs at least two samples")
    h0 = history[0]
    mass_scale = max(abs(h0.mass_combined), np.finfo(float).tiny)
    w_scale = h0.max_w if h0.max_w > 0 else 1.0
    v_bound = h0.mass_v + h0.mass_combined

    def verdict(name, excesses, times, tol):
        excesses = np.asarray(excesses)
        k = int(np.argmax(excesses))
        worst = float(excesses[k])
        return Verdict(name, worst <= tol, worst, float(times[k]))

    t = [r.t for r in history]
    later = history[1:]
    return [
        verdict("mass_combined_constant",
                [abs(r.mass_combined - h0.mass_combined) for r in history], t, ctl_tol * mass_scale),
        verdict("mass_u_nondecreasing",
                [a.mass_u - b.mass_u for a, b in zip(history, later)], t[1:], ctl_tol * mass_scale),
        verdict("max_w_nonincreasing",
                [b.max_w - a.max_w for a, b in zip(history, later)], t[1:], ctl_tol * w_scale),
        verdict("mass_v_bounded",
                [r.mass_v - v_bound for r in history], t, ctl_tol * mass_scale),
    ]


def delta_floor(u0_mass: float, grid: GridSpec, kappa: float = DELTA_FLOOR_FRACTION) -> float:
    """Monitoring floor for min v: ``kappa`` times the mean of u0."""
    if not u0_mass > 0:
        raise DomainError(f"u0 mass must be positive (got {u0_mass})")
    return kappa * u0_mass / grid.domain_area


def window_integral(history: Sequence[DiagnosticsRecord], attr: str, t0: float, t1: float) -> float:
    """Trapezoid integral of ``attr`` over ``[t0, t1]`` using linear interpolation at the ends."""
    t = np.array([r.t for r in history])
    y = np.array([getattr(r, attr) for r in history])
    t0, t1 = max(t0, t[0]), min(t1, t[-1])
    if t1 <= t0:
        return 0.0
    inside = (t > t0) & (t < t1)
    ts = np.concatenate(([t0], t[inside], [t1]))
    ys = np.concatenate(([np.interp(t0, t, y)], y[inside], [np.interp(t1, t, y)]))
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(ts)))


def duality_windows(history: Sequence[DiagnosticsRecord], width: float = 1.0) -> list[tuple[float, float]]:
    """Integrals of ``duality_integrand`` over consecutive windows ``[k, k + width]``."""
    if not history:
        return []
    t_end = history[-1].t
    out = []
    t0 = history[0].t
    while t0 + width <= t_end + 1e-12:
        out.append((t0, window_integral(history, "duality_integrand", t0, t0 + width)))
        t0 += width
    return out


def lyapunov_nonincreasing_fraction(history: Sequence[DiagnosticsRecord], t_after: float,
                                    tol: float) -> float:
    """Fraction of consecutive sample pairs after ``t_after`` where the functional does not grow."""
    tail = [r.lyapunov for r in history if r.t > t_after]
    if len(tail) < 2:
        return 1.0
    diffs = np.diff(tail)
    return float(np.mean(diffs <= tol))
