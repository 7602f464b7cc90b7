"""YAML run configuration: strict parsing, defaults, and serialization.

Schema (defaults in brackets)::

    grid:     {nx, ny, lx [1.0], ly [1.0]}
    params:   {m, alpha, beta, d_coef, eps [0.0], cap_m [null],
               response: {kind: saturating, lambda} | {kind: linear}}
    initial:  {kind: constants,  u0, v0, w0}
            | {kind: perturbed,  u0, v0, w0, amplitude, kx [1], ky [1]}
            | {kind: random,     u0, v0, w0, amplitude, seed [top-level seed]}
    control:  {dt_init [1e-4], dt_min [1e-12], dt_max [0.1], safety [0.5],
               cg_tol [1e-10], cg_max_iter [1000], negativity_tol [1e-12]}
    stop:     {max_time [100.0], tol_conv [null], max_steps [null]}
    sampling: [50]          steps between diagnostics rows
    eta:      [1.0]         weight of the gradient term in the Lyapunov functional
    output_dir: ["out"]
    snapshot_times: [[]]
    seed:     [0]
    v_floor:  [null]        monitoring floor for min v; null uses 0.01 * mean(u0)

Unknown keys anywhere are errors.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .core import FieldState, GridSpec, LinearResponse, ModelParams, SaturatingResponse, validate_params
from .errors import ConfigError, ParameterError
from .stepper import StepControl, StopRule

INITIAL_KINDS = ("constants", "perturbed", "random")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-4``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


@dataclass(frozen=True)
class InitialData:
    kind: str
    u0: float
    v0: float
    w0: float
    amplitude: float = 0.0
    kx: int = 1
    ky: int = 1
    seed: Optional[int] = None

    def build(self, grid: GridSpec, default_seed: int = 0) -> FieldState:
        """Materialize the fields at t = 0 (positivity is checked by the caller)."""
        shape = grid.shape
        u = np.full(shape, float(self.u0))
        v = np.full(shape, float(self.v0))
        w = np.full(shape, float(self.w0))
        if self.kind == "perturbed":
            x, y = grid.centers()
            mode = np.cos(self.kx * np.pi * x / grid.lx) * np.cos(self.ky * np.pi * y / grid.ly)
            u = u + self.amplitude * mode
        elif self.kind == "random":
            rng = np.random.default_rng(self.seed if self.seed is not None else default_seed)
            u = u * (1.0 + self.amplitude * rng.uniform(-1.0, 1.0, shape))
            v = v * (1.0 + self.amplitude * rng.uniform(-1.0, 1.0, shape))
            w = w * (1.0 + self.amplitude * rng.uniform(-1.0, 1.0, shape))
        return FieldState(u, v, w, grid, 0.0)


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: ModelParams
    initial: InitialData
    control: StepControl = field(default_factory=StepControl)
    stop: StopRule = field(default_factory=StopRule)
    sampling: int = 50
    eta: float = 1.0
    output_dir: str = "out"
    snapshot_times: tuple = ()
    seed: int = 0
    v_floor: Optional[float] = None

    def initial_state(self) -> FieldState:
        return self.initial.build(self.grid, self.seed)


# -- parsing -----------------------------------------------------------------

class _Section:
    """Pops typed keys from one mapping and records errors instead of raising."""

    def __init__(self, data, path: str, errors: list):
        self.path = path
        self.errors = errors
        if data is None:
            data = {}
        if not isinstance(data, dict):
            errors.append(f"{path or 'document'} must be a mapping")
            data = {}
        self.data = dict(data)

    def _key(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def number(self, key, default=..., integer=False, allow_none=False):
        if key not in self.data:
            if default is ...:
                self.errors.append(f"missing key: {self._key(key)}")
                return None
            return default
        value = self.data.pop(key)
        if value is None and allow_none:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.errors.append(f"{self._key(key)} must be a number (got {value!r})")
            return None
        if integer:
            if isinstance(value, float):
                if not value.is_integer():
                    self.errors.append(f"{self._key(key)} must be an integer (got {value!r})")
                    return None
                value = int(value)
            return value
        value = float(value)
        if not math.isfinite(value):
            self.errors.append(f"{self._key(key)} must be finite (got {value!r})")
            return None
        return value

    def raw(self, key, default=...):
        if key not in self.data:
            if default is ...:
                self.errors.append(f"missing key: {self._key(key)}")
                return None
            return default
        return self.data.pop(key)

    def finish(self):
        for key in self.data:
            self.errors.append(f"unknown key: {self._key(key)}")


def _parse_response(data, errors):
    sec = _Section(data, "params.response", errors)
    kind = sec.raw("kind")
    response = None
    if kind == "saturating":
        lam = sec.number("lambda")
        if lam is not None:
            response = SaturatingResponse(lam)
    elif kind == "linear":
        response = LinearResponse()
    elif kind is not None:
        errors.append(f"params.response.kind must be 'saturating' or 'linear' (got {kind!r})")
    sec.finish()
    return response


def _parse_initial(data, errors):
    sec = _Section(data, "initial", errors)
    kind = sec.raw("kind")
    if kind is not None and kind not in INITIAL_KINDS:
        errors.append(f"initial.kind must be one of {', '.join(INITIAL_KINDS)} (got {kind!r})")
        kind = None
    values = {k: sec.number(k) for k in ("u0", "v0", "w0")}
    extra = {}
    if kind in ("perturbed", "random"):
        extra["amplitude"] = sec.number("amplitude")
    if kind == "perturbed":
        extra["kx"] = sec.number("kx", 1, integer=True)
        extra["ky"] = sec.number("ky", 1, integer=True)
    if kind == "random":
        extra["seed"] = sec.number("seed", None, integer=True, allow_none=True)
    sec.finish()
    if kind is None or any(v is None for v in values.values()) or extra.get("amplitude", 0.0) is None:
        return None
    init = InitialData(kind, **values, **extra)
    if kind == "perturbed" and abs(init.amplitude) > init.u0:
        errors.append("initial.amplitude must not exceed u0 in magnitude (keeps u0 >= 0)")
    if kind == "random" and not 0 <= init.amplitude < 1:
        errors.append("initial.amplitude must lie in [0, 1) for random data (keeps signs)")
    return init


def config_from_dict(doc) -> RunConfig:
    errors: list[str] = []
    top = _Section(doc, "", errors)

    g = _Section(top.raw("grid"), "grid", errors)
    grid_args = dict(nx=g.number("nx", integer=True), ny=g.number("ny", integer=True),
                     lx=g.number("lx", 1.0), ly=g.number("ly", 1.0))
    g.finish()
    grid = None
    if all(v is not None for v in grid_args.values()):
        try:
            grid = GridSpec(**grid_args)
        except ParameterError as exc:
            errors.extend(f"grid: {e}" for e in exc.errors)

    ps = _Section(top.raw("params"), "params", errors)
    p_args = dict(m=ps.number("m"), alpha=ps.number("alpha"), beta=ps.number("beta"),
                  d_coef=ps.number("d_coef"), eps=ps.number("eps", 0.0),
                  cap_m=ps.number("cap_m", None, allow_none=True))
    response = _parse_response(ps.raw("response"), errors) if ps.has("response") else ps.raw("response")
    ps.finish()
    params = None
    if response is not None and all(p_args[k] is not None for k in ("m", "alpha", "beta", "d_coef", "eps")):
        params = ModelParams(response=response, **p_args)
        errors.extend(f"params: {e}" for e in validate_params(params))

    initial = _parse_initial(top.raw("initial"), errors)

    c = _Section(top.raw("control", None), "control", errors)
    d = StepControl()
    control = StepControl(
        dt_init=c.number("dt_init", d.dt_init), dt_min=c.number("dt_min", d.dt_min),
        dt_max=c.number("dt_max", d.dt_max), safety=c.number("safety", d.safety),
        cg_tol=c.number("cg_tol", d.cg_tol), cg_max_iter=c.number("cg_max_iter", d.cg_max_iter, integer=True),
        negativity_tol=c.number("negativity_tol", d.negativity_tol))
    c.finish()
    if all(getattr(control, k) is not None for k in vars(d)):
        errors.extend(control.validate())

    s = _Section(top.raw("stop", None), "stop", errors)
    stop = StopRule(max_time=s.number("max_time", StopRule.max_time),
                    tol_conv=s.number("tol_conv", None, allow_none=True),
                    max_steps=s.number("max_steps", None, integer=True, allow_none=True))
    s.finish()
    if stop.max_time is not None and stop.max_time < 0:
        errors.append("stop.max_time must be >= 0")
    if stop.tol_conv is not None and stop.tol_conv <= 0:
        errors.append("stop.tol_conv must be > 0")
    if stop.max_steps is not None and stop.max_steps < 0:
        errors.append("stop.max_steps must be >= 0")

    sampling = top.number("sampling", 50, integer=True)
    if sampling is not None and sampling < 1:
        errors.append("sampling must be >= 1")
    eta = top.number("eta", 1.0)
    if eta is not None and eta < 0:
        errors.append("eta must be >= 0")
    output_dir = top.raw("output_dir", "out")
    if not isinstance(output_dir, str):
        errors.append("output_dir must be a string")
    times = top.raw("snapshot_times", [])
    snapshot_times = ()
    if not isinstance(times, list) or any(isinstance(t, bool) or not isinstance(t, (int, float)) for t in times):
        errors.append("snapshot_times must be a list of numbers")
    else:
        snapshot_times = tuple(float(t) for t in times)
        if list(snapshot_times) != sorted(snapshot_times):
            errors.append("snapshot_times must be sorted ascending")
        if any(t < 0 for t in snapshot_times):
            errors.append("snapshot_times must be >= 0")
    seed = top.number("seed", 0, integer=True)
    v_floor = top.number("v_floor", None, allow_none=True)
    top.finish()

    if errors:
        raise ConfigError(errors)
    return RunConfig(grid=grid, params=params, initial=initial, control=control, stop=stop,
                     sampling=sampling, eta=eta, output_dir=output_dir,
                     snapshot_times=snapshot_times, seed=seed, v_floor=v_floor)


def parse_config(text: str) -> RunConfig:
    """Parse a YAML document into a :class:`RunConfig`, aggregating all errors."""
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "unknown line"
        raise ConfigError([f"syntax error at {where}: {getattr(exc, 'problem', exc)}"]) from None
    return config_from_dict(doc)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_dict(cfg: RunConfig) -> dict:
    p = cfg.params
    if isinstance(p.response, SaturatingResponse):
        response = {"kind": "saturating", "lambda": p.response.lam}
    else:
        response = {"kind": "linear"}
    ini = cfg.initial
    initial = {"kind": ini.kind, "u0": ini.u0, "v0": ini.v0, "w0": ini.w0}
    if ini.kind in ("perturbed", "random"):
        initial["amplitude"] = ini.amplitude
    if ini.kind == "perturbed":
        initial.update(kx=ini.kx, ky=ini.ky)
    if ini.kind == "random":
        initial["seed"] = ini.seed
    c = cfg.control
    return {
        "grid": {"nx": cfg.grid.nx, "ny": cfg.grid.ny, "lx": cfg.grid.lx, "ly": cfg.grid.ly},
        "params": {"m": p.m, "alpha": p.alpha, "beta": p.beta, "d_coef": p.d_coef,
                   "eps": p.eps, "cap_m": p.cap_m, "response": response},
        "initial": initial,
        "control": {"dt_init": c.dt_init, "dt_min": c.dt_min, "dt_max": c.dt_max, "safety": c.safety,
                    "cg_tol": c.cg_tol, "cg_max_iter": c.cg_max_iter, "negativity_tol": c.negativity_tol},
        "stop": {"max_time": cfg.stop.max_time, "tol_conv": cfg.stop.tol_conv, "max_steps": cfg.stop.max_steps},
        "sampling": cfg.sampling,
        "eta": cfg.eta,
        "output_dir": cfg.output_dir,
        "snapshot_times": list(cfg.snapshot_times),
        "seed": cfg.seed,
        "v_floor": cfg.v_floor,
    }


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
