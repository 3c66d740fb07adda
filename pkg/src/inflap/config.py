"""Run configuration from flat ``key = value`` sections.

Example file::

    [domain]
    shape = l_shape
    outer_side = 2
    notch_side = 1

    [run]
    h = 0.015625
    p_list = 2, 4, 8, 16, 32, 64, 128

    [solver]
    max_iters = 300

    [outputs]
    dir = results
    formats = csv, json, svg

Command-line flags override file values, and ``INFLAP_OUT`` overrides the
output directory from the file (an explicit ``--out`` still wins).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .asymptotics import DEFAULT_P_LIST
from .eigensolver import SolverConfig, check_exponent
from .exceptions import ConfigError, DegenerateSpec
from .geometry import DomainSpec

FORMATS = ("csv", "json", "svg")
ENV_OUT = "INFLAP_OUT"
DEFAULT_OUT = "inflap_out"
DEFAULT_H = 1 / 64
# names accepted on the command line for default-parameter shapes
SHAPE_ALIASES = {"square": "rectangle", "l": "l_shape", "L": "l_shape"}

_PAIR_KEYS = ("center", "corner_min", "corner_max")
_FLOAT_KEYS = ("radius", "outer_side", "notch_side", "r_in", "r_out")
_SOLVER_TYPES = {f.name: f.type for f in fields(SolverConfig)}


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec = field(default_factory=lambda: DomainSpec("disk"))
    h: float = DEFAULT_H
    p: float = 2.0
    p_list: tuple[float, ...] = tuple(float(p) for p in DEFAULT_P_LIST)
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: Path = Path(DEFAULT_OUT)
    formats: tuple[str, ...] = FORMATS
    reproducible: bool = True
    seed: int | None = None
    stencil: str = "forward"

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if not self.formats or any(f not in FORMATS for f in self.formats):
            raise ConfigError(f"formats must be a nonempty subset of {','.join(FORMATS)}")
        try:
            check_exponent(self.p)
            for p in self.p_list:
                check_exponent(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if any(b <= a for a, b in zip(self.p_list, self.p_list[1:])):
            raise ConfigError("p_list must be strictly ascending")
        if self.stencil not in ("forward", "corners"):
            raise ConfigError(f"unknown stencil {self.stencil!r}")


def parse_p_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError:
        raise ConfigError(f"cannot parse exponent list {text!r}") from None
    if not vals:
        raise ConfigError("empty exponent list")
    return vals


def parse_formats(text: str) -> tuple[str, ...]:
    out = tuple(t.strip().lower() for t in str(text).split(",") if t.strip())
    bad = [t for t in out if t not in FORMATS]
    if bad or not out:
        raise ConfigError(f"unknown output format(s) {bad or text!r}; choose from {','.join(FORMATS)}")
    return out


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {text!r}")
    return vals


def domain_from_section(sec) -> DomainSpec:
    kw = {}
    for key, raw in sec.items():
        if key == "shape":
            kw["shape"] = SHAPE_ALIASES.get(raw.strip(), raw.strip())
        elif key in _PAIR_KEYS:
            kw[key] = _floats(raw, 2)
        elif key in _FLOAT_KEYS:
            kw[key] = _floats(raw, 1)[0]
        elif key == "vertices":
            kw[key] = tuple(_floats(v, 2) for v in raw.split(";") if v.strip())
        else:
            raise ConfigError(f"unknown domain key {key!r}")
    if "shape" not in kw:
        raise ConfigError("domain section needs a shape")
    try:
        return DomainSpec(**kw)
    except DegenerateSpec as exc:
        raise ConfigError(str(exc)) from None


def solver_from_section(sec, base: SolverConfig | None = None) -> SolverConfig:
    kw = {}
    for key, raw in sec.items():
        if key not in _SOLVER_TYPES:
            raise ConfigError(f"unknown solver key {key!r}")
        kind = _SOLVER_TYPES[key]
        try:
            if "bool" in str(kind):
                kw[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif "int" in str(kind) and "float" not in str(kind):
                kw[key] = int(raw)
            elif "float" in str(kind):
                kw[key] = None if raw.strip().lower() == "none" else float(raw)
            else:
                kw[key] = raw.strip()
        except ValueError:
            raise ConfigError(f"bad value for solver.{key}: {raw!r}") from None
    try:
        return replace(base or SolverConfig(), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """Read ``path`` (optional), then apply environment and flag overrides.

    ``overrides`` uses ``RunConfig`` field names plus ``shape``; ``None`` values
    are ignored.
    """
    env = os.environ if env is None else env
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    kw: dict = {}
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}".splitlines()[0]) from None
        unknown = set(cp.sections()) - {"domain", "run", "solver", "outputs"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        if cp.has_section("domain"):
            kw["domain"] = domain_from_section(cp["domain"])
        if cp.has_section("solver"):
            kw["solver"] = solver_from_section(cp["solver"])
        if cp.has_section("run"):
            run = cp["run"]
            for key, raw in run.items():
                if key in ("h", "p"):
                    kw[key] = _floats(raw, 1)[0]
                elif key == "p_list":
                    kw["p_list"] = parse_p_list(raw)
                elif key == "reproducible":
                    kw["reproducible"] = run.getboolean(key)
                elif key == "seed":
                    kw["seed"] = run.getint(key)
                elif key == "stencil":
                    kw["stencil"] = raw.strip()
                else:
                    raise ConfigError(f"unknown run key {key!r}")
        if cp.has_section("outputs"):
            out = cp["outputs"]
            if "dir" in out:
                kw["out_dir"] = Path(out["dir"])
            if "formats" in out:
                kw["formats"] = parse_formats(out["formats"])
    if env.get(ENV_OUT):
        kw["out_dir"] = Path(env[ENV_OUT])
    if "shape" in overrides:
        name = overrides.pop("shape")
        kw["domain"] = DomainSpec(SHAPE_ALIASES.get(name, name))
    if "p_list" in overrides and isinstance(overrides["p_list"], str):
        overrides["p_list"] = parse_p_list(overrides["p_list"])
    if "formats" in overrides and isinstance(overrides["formats"], str):
        overrides["formats"] = parse_formats(overrides["formats"])
    if "out_dir" in overrides:
        overrides["out_dir"] = Path(overrides["out_dir"])
    kw.update(overrides)
    if "p_list" in kw:
        kw["p_list"] = tuple(float(p) for p in kw["p_list"])
    kw["solver"] = replace(kw.get("solver", SolverConfig()),
                           reproducible=kw.get("reproducible", True))
    return RunConfig(**kw)
