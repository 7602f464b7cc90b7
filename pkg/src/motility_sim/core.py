"""Domain types for the signal-suppressed motility system.

The model is

    u_t = eps * Lap (u + 1)^M + Lap(u (u + eps)^(m-1) v^-alpha) + beta u f(w)
    v_t = D Lap v - v + u
    w_t = Lap w - u f(w)

on a rectangle with homogeneous Neumann conditions. ``eps = 0`` gives the
unregularized system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DomainError, NumericsError, ParameterError, PositivityError, ShapeError


@dataclass(frozen=True)
class GridSpec:
    """Cell-centered rectangular mesh on ``[0, lx] x [0, ly]``.

    Fields are stored as arrays of shape ``(nx, ny)``; index ``[i, j]`` is the
    cell centered at ``((i + 1/2) hx, (j + 1/2) hy)``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        errors = []
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 4:
                errors.append(f"{name} must be an integer >= 4 (got {n!r})")
        for name in ("lx", "ly"):
            length = getattr(self, name)
            if not (isinstance(length, (int, float)) and math.isfinite(length) and length > 0):
                errors.append(f"{name} must be finite and > 0 (got {length!r})")
        if errors:
            raise ParameterError(errors)

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def domain_area(self) -> float:
        return self.lx * self.ly

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` coordinate arrays of cell centers, shape ``(nx, ny)``."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class SaturatingResponse:
    """f(w) = w^2 / (w^2 + lam)."""

    lam: float

    def __call__(self, w):
        w2 = np.square(w)
        return w2 / (w2 + self.lam)

    def max_ratio(self) -> float:
        # sup_{w>0} f(w)/w = sup w/(w^2+lam), attained at w = sqrt(lam)
        return 0.5 / math.sqrt(self.lam)


@dataclass(frozen=True)
class LinearResponse:
    """f(w) = w."""

    def __call__(self, w):
        return np.asarray(w, dtype=float) * 1.0

    def max_ratio(self) -> float:
        return 1.0


ResponseKind = Union[SaturatingResponse, LinearResponse]


def response_value(kind: ResponseKind, w):
    """Evaluate the response function on a scalar or array ``w >= 0``."""
    arr = np.asarray(w, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"response function requires w >= 0 (min {np.nanmin(arr)!r})")
    out = kind(arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    m: float
    alpha: float
    beta: float
    d_coef: float
    response: ResponseKind = field(default_factory=LinearResponse)
    eps: float = 0.0
    cap_m: Optional[float] = None

    @property
    def regularized(self) -> bool:
        return self.eps > 0


def validate_params(p: ModelParams) -> list[str]:
    """Return every violated admissibility constraint (empty list means ok)."""
    errors = []

    def num(name):
        value = getattr(p, name)
        if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
            errors.append(f"{name} must be a number (got {value!r})")
            return None
        if not math.isfinite(value):
            errors.append(f"{name} must be finite (got {value!r})")
            return None
        return float(value)

    m = num("m")
    if m is not None and m <= 1:
        errors.append(f"m must exceed 1 (got {m})")
    alpha = num("alpha")
    if alpha is not None and alpha <= 0:
        errors.append(f"alpha must exceed 0 (got {alpha})")
    beta = num("beta")
    if beta is not None and beta <= 0:
        errors.append(f"beta must exceed 0 (got {beta})")
    d = num("d_coef")
    if d is not None and d <= 0:
        errors.append(f"d_coef must exceed 0 (got {d})")
    eps = num("eps")
    if eps is not None:
        if eps < 0:
            errors.append(f"eps must be >= 0 (got {eps})")
        elif eps > 0:
            if p.cap_m is None:
                errors.append("M (cap_m) is required when eps > 0")
            else:
                cap_m = num("cap_m")
                if cap_m is not None and m is not None and cap_m <= m:
                    errors.append(f"M must exceed m (got M={cap_m}, m={m})")
    if p.cap_m is not None and (eps is None or eps == 0):
        num("cap_m")

    if isinstance(p.response, SaturatingResponse):
        lam = p.response.lam
        if isinstance(lam, bool) or not isinstance(lam, (int, float)) or not math.isfinite(lam):
            errors.append(f"lambda must be a finite number (got {lam!r})")
        elif lam <= 0:
            errors.append(f"lambda must exceed 0 (got {lam})")
    elif not isinstance(p.response, LinearResponse):
        errors.append(f"unknown response kind {p.response!r}")
    return errors


def check_params(p: ModelParams) -> None:
    errors = validate_params(p)
    if errors:
        raise ParameterError(errors)


def target_state(u0_mean: float, w0_mean: float, beta: float) -> float:
    """Uniform limit value: mean of u0 plus beta times mean of w0."""
    if not u0_mean > 0:
        raise DomainError(f"u0 mean must be positive (got {u0_mean})")
    if w0_mean < 0:
        raise DomainError(f"w0 mean must be nonnegative (got {w0_mean})")
    if not beta > 0:
        raise DomainError(f"beta must be positive (got {beta})")
    return u0_mean + beta * w0_mean


@dataclass(frozen=True, eq=False)
class FieldState:
    """The triple (u, v, w) on ``grid`` at time ``t``.

    Arrays are made read-only on construction; steppers return new states.
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    grid: GridSpec
    t: float = 0.0

    def __post_init__(self):
        for name in ("u", "v", "w"):
            arr = np.array(getattr(self, name), dtype=np.float64, order="C")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))

    def validate(self) -> None:
        """Raise if shapes, finiteness, or sign constraints are violated."""
        for name in ("u", "v", "w"):
            arr = getattr(self, name)
            if arr.shape != self.grid.shape:
                raise ShapeError(f"{name} has shape {arr.shape}, grid is {self.grid.shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericsError(f"non-finite entry in {name}")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise DomainError(f"time must be finite and >= 0 (got {self.t})")
        for name in ("u", "w"):
            arr = getattr(self, name)
            if np.any(arr < 0):
                raise PositivityError(f"{name} is negative", first_index(arr < 0))
        if np.any(self.v <= 0):
            raise PositivityError("v is not strictly positive", first_index(self.v <= 0))

    def mass(self, name: str) -> float:
        return float(np.sum(getattr(self, name))) * self.grid.cell_area

    def mean(self, name: str) -> float:
        return self.mass(name) / self.grid.domain_area


def first_index(mask: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argwhere(mask)[0])


def target_from_state(state: FieldState, beta: float) -> float:
    return target_state(state.mean("u"), state.mean("w"), beta)
