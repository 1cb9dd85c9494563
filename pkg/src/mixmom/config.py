"""Run configuration: INI-style text files, presets and command-line overrides.

Layout (every key optional except where noted)::

    [domain]      x_min x_max y_min y_max nx ny
    [time]        t_final cfl
    [model]       closure lb flux order slope_limiter
    [coefficients] sigma_s sigma_a Q
    [initial]     kind (gaussian|uniform) value sigma amplitude floor center_x center_y
    [boundary.<side>]  kind (isotropic|periodic) value
    [boundary.<side>.beam<k>]  segment_lo segment_hi direction sigma2 amplitude
    [quadrature]  n_mu n_phi boundary
    [entropy]     tol max_iter
    [table]       path resolution trace_cap
    [output]      directory snapshots cuts

Distributions are phase-space densities; the moment vectors are their
angular integrals against the basis.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

from .closures import CLOSURES, LB_MODES
from .solver import SIDES

PRESETS = ("linesource", "twobeams", "twobeams-rotated")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BeamConfig:
    segment_lo: float
    segment_hi: float
    direction: float
    sigma2: float = 0.05
    amplitude: float = 100.0 / (4.0 * math.pi)


@dataclass(frozen=True)
class SideConfig:
    kind: str = "isotropic"
    value: float = 0.0
    beams: tuple = ()


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "uniform"
    value: float = 1e-4 / (4.0 * math.pi)
    sigma: float = 0.03
    amplitude: float | None = None  # gaussian peak; None means 1 / (8 pi sigma^2)
    floor: float = 1e-4
    center_x: float = 0.0
    center_y: float = 0.0

    def peak(self):
        return self.amplitude if self.amplitude is not None else 1.0 / (8.0 * math.pi * self.sigma ** 2)


@dataclass(frozen=True)
class RunConfig:
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    nx: int = 50
    ny: int = 50
    t_final: float = 1.0
    cfl: float = 0.45
    closure: str = "mk1"
    lb: str | None = None
    flux: str = "kinetic"
    order: int = 1
    slope_limiter: str = "minmod"
    sigma_s: float = 0.0
    sigma_a: float = 0.0
    Q: float = 0.0
    initial: InitialConfig = field(default_factory=InitialConfig)
    boundary: dict = field(default_factory=lambda: {s: SideConfig() for s in SIDES})
    n_mu: int = 16
    n_phi: int = 16
    boundary_quadrature: int = 80
    tol: float = 1e-9
    max_iter: int = 200
    table_path: str | None = None
    table_resolution: int = 64
    trace_cap: float = 100.0
    output_dir: str = "output"
    snapshots: int = 0
    cuts: bool = True
    name: str = "run"

    def validate(self) -> "RunConfig":
        if not self.t_final > 0:
            raise ConfigError("t_final must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("nx and ny must be positive")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigError("domain bounds are empty")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.closure not in CLOSURES:
            raise ConfigError(f"closure must be one of {CLOSURES}")
        if self.lb is not None and self.lb not in LB_MODES[self.closure]:
            raise ConfigError(f"closure {self.closure} supports lb in {LB_MODES[self.closure]}")
        if self.closure == "qk1" and self.sigma_s > 0:
            raise ConfigError("closure qk1 is advection-only: sigma_s must be 0 (no scattering treatment exists)")
        if min(self.sigma_s, self.sigma_a, self.Q) < 0:
            raise ConfigError("coefficients must be non-negative")
        if self.flux not in ("kinetic", "lax-friedrichs"):
            raise ConfigError("flux must be kinetic or lax-friedrichs")
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.initial.kind not in ("gaussian", "uniform"):
            raise ConfigError("initial kind must be gaussian or uniform")
        if set(self.boundary) != set(SIDES):
            raise ConfigError(f"boundary must specify exactly the sides {SIDES}")
        for s, b in self.boundary.items():
            if b.kind not in ("isotropic", "periodic"):
                raise ConfigError(f"boundary.{s}: kind must be isotropic or periodic")
            if b.value < 0:
                raise ConfigError(f"boundary.{s}: value must be non-negative")
        for a, b in (("left", "right"), ("bottom", "top")):
            if (self.boundary[a].kind == "periodic") != (self.boundary[b].kind == "periodic"):
                raise ConfigError(f"periodic boundaries must pair {a} with {b}")
        if self.trace_cap <= 0:
            raise ConfigError("trace_cap must be positive")
        return self


# ---------------------------------------------------------------------------
# presets


def _twobeams(**kw) -> RunConfig:
    vac = 1e-4 / (4.0 * math.pi)
    sides = {s: SideConfig("isotropic", vac) for s in SIDES}
    sides["left"] = SideConfig("isotropic", vac, (BeamConfig(0.45, 0.55, 0.0),))
    sides["bottom"] = SideConfig("isotropic", vac, (BeamConfig(0.45, 0.55, 0.5 * math.pi),))
    base = dict(x_min=0.0, x_max=1.0, y_min=0.0, y_max=1.0, t_final=1.2,
                initial=InitialConfig("uniform", vac), boundary=sides, name="twobeams")
    base.update(kw)
    return RunConfig(**base)


def preset(name: str, nx: int = 100, ny: int | None = None, closure: str = "mk1") -> RunConfig:
    ny = nx if ny is None else ny
    if name == "linesource":
        floor = 1e-4
        return RunConfig(
            x_min=-0.5, x_max=0.5, y_min=-0.5, y_max=0.5, nx=nx, ny=ny, t_final=0.45, closure=closure,
            sigma_s=1.0, initial=InitialConfig("gaussian", sigma=0.03, floor=floor),
            boundary={s: SideConfig("isotropic", floor) for s in SIDES}, name="linesource",
        )
    if name == "twobeams":
        return _twobeams(nx=nx, ny=ny, closure=closure)
    if name == "twobeams-rotated":
        cfg = _twobeams(nx=nx, ny=ny, closure=closure, name="twobeams-rotated")
        vac = cfg.initial.value
        sides = {s: SideConfig("isotropic", vac) for s in SIDES}
        sides["left"] = SideConfig("isotropic", vac, (BeamConfig(0.9, 1.0, -0.25 * math.pi),
                                                      BeamConfig(0.0, 0.1, 0.25 * math.pi)))
        return replace(cfg, boundary=sides)
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")


# ---------------------------------------------------------------------------
# text round-trip

_SCALARS = {
    "domain": ("x_min", "x_max", "y_min", "y_max", "nx", "ny"),
    "time": ("t_final", "cfl"),
    "model": ("closure", "lb", "flux", "order", "slope_limiter"),
    "coefficients": ("sigma_s", "sigma_a", "Q"),
    "quadrature": ("n_mu", "n_phi", "boundary_quadrature"),
    "entropy": ("tol", "max_iter"),
    "table": ("table_path", "table_resolution", "trace_cap"),
    "output": ("output_dir", "snapshots", "cuts", "name"),
}
_KEY_ALIAS = {("quadrature", "boundary_quadrature"): "boundary", ("table", "table_path"): "path",
              ("table", "table_resolution"): "resolution", ("output", "output_dir"): "directory"}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(value: str, typ: str):
    v = value.strip()
    optional = "None" in typ
    if optional and v.lower() in ("none", ""):
        return None
    base = typ.replace(" | None", "").strip()
    try:
        if base == "int":
            return int(v)
        if base == "float":
            return float(v)
        if base == "bool":
            if v.lower() in ("yes", "true", "1", "on"):
                return True
            if v.lower() in ("no", "false", "0", "off"):
                return False
            raise ValueError(v)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {value!r} as {base}") from exc
    return v


def to_text(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, names in _SCALARS.items():
        cp[sec] = {_KEY_ALIAS.get((sec, n), n): _fmt(getattr(cfg, n)) for n in names}
    cp["initial"] = {f.name: _fmt(getattr(cfg.initial, f.name)) for f in fields(InitialConfig)}
    for s in SIDES:
        b = cfg.boundary[s]
        cp[f"boundary.{s}"] = {"kind": b.kind, "value": _fmt(b.value)}
        for k, beam in enumerate(b.beams):
            cp[f"boundary.{s}.beam{k}"] = {f.name: _fmt(getattr(beam, f.name)) for f in fields(BeamConfig)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def from_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kw = {}
    for sec, names in _SCALARS.items():
        if sec not in cp:
            continue
        lookup = {_KEY_ALIAS.get((sec, n), n): n for n in names}
        for key, value in cp[sec].items():
            if key not in lookup:
                raise ConfigError(f"unknown key {sec}.{key}")
            n = lookup[key]
            kw[n] = _parse(value, _TYPES[n])
    if "initial" in cp:
        ik = {}
        itypes = {f.name: f.type for f in fields(InitialConfig)}
        for key, value in cp["initial"].items():
            if key not in itypes:
                raise ConfigError(f"unknown key initial.{key}")
            ik[key] = _parse(value, itypes[key])
        kw["initial"] = InitialConfig(**ik)
    sides = {}
    btypes = {f.name: f.type for f in fields(BeamConfig)}
    for s in SIDES:
        sec = f"boundary.{s}"
        if sec not in cp:
            sides[s] = SideConfig()
            continue
        beams = []
        k = 0
        while f"{sec}.beam{k}" in cp:
            bk = {}
            for key, value in cp[f"{sec}.beam{k}"].items():
                if key not in btypes:
                    raise ConfigError(f"unknown key {sec}.beam{k}.{key}")
                bk[key] = _parse(value, btypes[key])
            try:
                beams.append(BeamConfig(**bk))
            except TypeError as exc:
                raise ConfigError(f"{sec}.beam{k}: {exc}") from exc
            k += 1
        unknown = set(cp[sec]) - {"kind", "value"}
        if unknown:
            raise ConfigError(f"unknown keys in {sec}: {sorted(unknown)}")
        sides[s] = SideConfig(cp[sec].get("kind", "isotropic"), float(cp[sec].get("value", "0")), tuple(beams))
    known = set(_SCALARS) | {"initial"} | {f"boundary.{s}" for s in SIDES}
    for sec in cp.sections():
        if sec not in known and not any(sec.startswith(f"boundary.{s}.beam") for s in SIDES):
            raise ConfigError(f"unknown section [{sec}]")
    kw["boundary"] = sides
    return RunConfig(**kw).validate()


def load(path) -> RunConfig:
    with open(path) as fh:
        return from_text(fh.read())


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply ``section.key=value`` (or bare ``key=value`` for scalar fields) overrides."""
    text = to_text(cfg)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (p.strip() for p in item.split("=", 1))
        if "." in key:
            sec, opt = key.rsplit(".", 1)
        else:
            matches = [s for s, names in _SCALARS.items() for n in names if _KEY_ALIAS.get((s, n), n) == key]
            if len(matches) != 1:
                raise ConfigError(f"override key {key!r} needs a section prefix")
            sec, opt = matches[0], key
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, opt, value)
    buf = io.StringIO()
    cp.write(buf)
    return from_text(buf.getvalue())
