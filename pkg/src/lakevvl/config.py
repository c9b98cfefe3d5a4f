"""Experiment configuration: TOML parsing, validation and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import tomli

from .dynamics import SchemeConfig, initial_vorticity

DEFAULT_EPSILON_INVISCID = 1e-3
INITIAL_KINDS = ("radial", "blob", "dipole", "zero")


class ConfigError(ValueError):
    """Collects every violation found in a configuration document."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class SweepSettings:
    mu_list: tuple = (1e-2, 3e-3, 1e-3, 3e-4)
    times: tuple = (0.25, 0.5, 1.0)
    epsilon_schedule: tuple = (1e-1, 3e-2, 1e-2, 3e-3)
    perturbation_scale: float = 1e-10


@dataclass(frozen=True)
class ProbeSettings:
    p_list: tuple = (3.0, 4.0, 6.0)
    samples: int = 5
    epsilon_list: tuple = (1e-1, 1e-2, 1e-3)
    degree: int = 4


@dataclass(frozen=True)
class SolverConfig:
    n_r: int = 64
    n_theta: int = 128
    a: float = 2.0
    epsilon: float = DEFAULT_EPSILON_INVISCID
    mu: float = 0.0
    q: float = 4.0
    initial: str = "blob"
    initial_params: tuple = ()
    T: float = 1.0
    snapshot_every: float | None = None
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    output_dir: str = "out"
    seed: int = 0
    sweep: SweepSettings = field(default_factory=SweepSettings)
    probe: ProbeSettings = field(default_factory=ProbeSettings)

    def problems(self):
        out = []
        if not (isinstance(self.n_r, int) and self.n_r >= 8):
            out.append(f"grid.n_r must be an integer >= 8, got {self.n_r!r}")
        if not (isinstance(self.n_theta, int) and self.n_theta >= 8 and self.n_theta % 2 == 0):
            out.append(f"grid.n_theta must be an even integer >= 8, got {self.n_theta!r}")
        if not self.a >= 2:
            out.append(f"physics.a must be >= 2, got {self.a}")
        if not self.mu >= 0:
            out.append(f"physics.mu must be >= 0, got {self.mu}")
        if not self.epsilon > 0:
            out.append(f"physics.epsilon must be > 0, got {self.epsilon}")
        if not self.q > 2:
            out.append(f"diagnostics.q must be > 2, got {self.q}")
        if not self.T >= 0:
            out.append(f"time.T must be >= 0, got {self.T}")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            out.append(f"time.snapshot_every must be > 0, got {self.snapshot_every}")
        if self.initial not in INITIAL_KINDS:
            out.append(f"initial.kind must be one of {', '.join(INITIAL_KINDS)}, got {self.initial!r}")
        mus = self.sweep.mu_list
        if any(not m > 0 for m in mus):
            out.append("sweep.mu_list entries must be > 0")
        if any(x <= y for x, y in zip(mus, mus[1:])):
            out.append("sweep.mu_list must be strictly decreasing")
        if any(not t >= 0 for t in self.sweep.times):
            out.append("sweep.times must be >= 0")
        eps = self.sweep.epsilon_schedule
        if any(not e > 0 for e in eps) or any(x < y for x, y in zip(eps, eps[1:])):
            out.append("sweep.epsilon_schedule must be positive and non-increasing")
        if not 0 <= self.sweep.perturbation_scale <= 1e-10:
            out.append("sweep.perturbation_scale must lie in [0, 1e-10]")
        if any(not p > 2 for p in self.probe.p_list):
            out.append("probe.p_list entries must be > 2")
        if not self.probe.samples >= 1:
            out.append("probe.samples must be >= 1")
        if any(not e > 0 for e in self.probe.epsilon_list):
            out.append("probe.epsilon_list entries must be > 0")
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self

    def initial_field(self, grid):
        return initial_vorticity(grid, self.initial, **dict(self.initial_params))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["initial_params"] = dict(self.initial_params)
        return d

    def hash(self):
        """Short sha256 of the canonical JSON form; ``output_dir`` is excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {
    "grid": {"n_r": "n_r", "n_theta": "n_theta"},
    "physics": {"a": "a", "epsilon": "epsilon", "mu": "mu"},
    "diagnostics": {"q": "q"},
    "time": {"T": "T", "snapshot_every": "snapshot_every"},
    "output": {"dir": "output_dir"},
    "probe": {"seed": "seed"},
}
_SCHEME_KEYS = {f.name for f in dataclasses.fields(SchemeConfig)}
_SWEEP_KEYS = {f.name for f in dataclasses.fields(SweepSettings)}
_PROBE_KEYS = {f.name for f in dataclasses.fields(ProbeSettings)}
_INITIAL_PARAMS = {"amplitude", "x0", "y0", "sigma", "separation"}


def _number(value, key, errs, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errs.append(f"{key} must be a number, got {value!r}")
        return None
    if integer and not isinstance(value, int):
        errs.append(f"{key} must be an integer, got {value!r}")
        return None
    if not math.isfinite(value):
        errs.append(f"{key} must be finite, got {value!r}")
        return None
    return value


def parse_config(text):
    """Parse a TOML document into a validated :class:`SolverConfig`.

    Every violation is collected; a :class:`ConfigError` lists them all.
    ``epsilon`` is mandatory when ``mu > 0`` or a sweep is configured and
    defaults to ``1e-3`` for inviscid runs.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"malformed TOML: {exc}"]) from None

    errs = []
    kw = {}
    known = set(_SECTIONS) | {"initial", "scheme", "sweep"}
    for name in doc:
        if name not in known:
            errs.append(f"unknown section or key {name!r}")

    for sec, keys in _SECTIONS.items():
        table = doc.get(sec, {})
        if not isinstance(table, dict):
            errs.append(f"{sec} must be a table")
            continue
        extra = set(keys)
        if sec == "probe":
            extra |= _PROBE_KEYS
        for k, v in table.items():
            if k not in extra:
                errs.append(f"unknown key {sec}.{k}")
                continue
            if k not in keys:
                continue
            attr = keys[k]
            if attr == "output_dir":
                if not isinstance(v, str):
                    errs.append(f"{sec}.{k} must be a string")
                else:
                    kw[attr] = v
                continue
            num = _number(v, f"{sec}.{k}", errs, integer=attr in ("n_r", "n_theta", "seed"))
            if num is not None:
                kw[attr] = float(num) if attr not in ("n_r", "n_theta", "seed") else num

    init = doc.get("initial", {})
    if isinstance(init, dict):
        kind = init.get("kind", "blob")
        if not isinstance(kind, str):
            errs.append("initial.kind must be a string")
        else:
            kw["initial"] = kind
        params = {}
        for k, v in init.items():
            if k == "kind":
                continue
            if k not in _INITIAL_PARAMS:
                errs.append(f"unknown key initial.{k}")
                continue
            num = _number(v, f"initial.{k}", errs)
            if num is not None:
                params[k] = float(num)
        kw["initial_params"] = tuple(sorted(params.items()))
    else:
        errs.append("initial must be a table")

    scheme = doc.get("scheme", {})
    skw = {}
    for k, v in scheme.items() if isinstance(scheme, dict) else ():
        if k not in _SCHEME_KEYS:
            errs.append(f"unknown key scheme.{k}")
        elif k == "scheme":
            skw[k] = v
        elif k == "dealias":
            if not isinstance(v, bool):
                errs.append("scheme.dealias must be true or false")
            else:
                skw[k] = v
        else:
            num = _number(v, f"scheme.{k}", errs)
            if num is not None:
                skw[k] = float(num)
    for k in ("cfl_advective", "cfl_diffusive"):
        if k in skw and not 0 < skw[k] <= 1:
            errs.append(f"scheme.{k} must lie in (0, 1], got {skw[k]}")
            skw.pop(k)
    if "dt_max" in skw and not skw["dt_max"] > 0:
        errs.append(f"scheme.dt_max must be > 0, got {skw['dt_max']}")
        skw.pop("dt_max")
    if "dt" in skw and not skw["dt"] > 0:
        errs.append(f"scheme.dt must be > 0, got {skw['dt']}")
        skw.pop("dt")
    try:
        kw["scheme"] = SchemeConfig(**skw)
    except ValueError as exc:
        errs.append(f"scheme: {exc}")

    sweep = doc.get("sweep", {})
    wkw = {}
    for k, v in sweep.items() if isinstance(sweep, dict) else ():
        if k not in _SWEEP_KEYS:
            errs.append(f"unknown key sweep.{k}")
        elif k == "perturbation_scale":
            num = _number(v, f"sweep.{k}", errs)
            if num is not None:
                wkw[k] = float(num)
        else:
            vals = _number_list(v, f"sweep.{k}", errs)
            if vals is not None:
                wkw[k] = vals
    kw["sweep"] = SweepSettings(**wkw)

    probe = doc.get("probe", {})
    pkw = {}
    for k, v in probe.items() if isinstance(probe, dict) else ():
        if k in ("p_list", "epsilon_list"):
            vals = _number_list(v, f"probe.{k}", errs)
            if vals is not None:
                pkw[k] = vals
        elif k in ("samples", "degree"):
            num = _number(v, f"probe.{k}", errs, integer=True)
            if num is not None:
                pkw[k] = num
    kw["probe"] = ProbeSettings(**pkw)

    phys = doc.get("physics", {}) if isinstance(doc.get("physics", {}), dict) else {}
    if "epsilon" not in phys:
        if kw.get("mu", 0.0) > 0:
            errs.append("physics.epsilon is required and must be > 0 when mu > 0")
        elif "sweep" in doc:
            errs.append("physics.epsilon is required and must be > 0 for a viscosity sweep")

    cfg = SolverConfig(**kw)
    errs.extend(p for p in cfg.problems() if p not in errs)
    if errs:
        raise ConfigError(errs)
    return cfg


def _number_list(value, key, errs):
    if not isinstance(value, list) or not value:
        errs.append(f"{key} must be a non-empty list of numbers")
        return None
    out = []
    for i, v in enumerate(value):
        num = _number(v, f"{key}[{i}]", errs)
        if num is None:
            return None
        out.append(float(num))
    return tuple(out)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
