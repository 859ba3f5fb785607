"""Case files: sectioned ``key = value`` text read with configparser.

Sections are ``[geometry]``, ``[physics]``, ``[solver]`` and ``[output]``.
All six dimensionless groups are required; everything else has a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .assembly import DimensionlessGroups
from .geometry import (CavityGeometry, InvalidGeometry, Trapezoid, rectangle_domain,
                       triangular_cavity_geometry)
from .solver import SolverOptions

GEOMETRY_KINDS = ("cavity", "square", "triangle")
PHYSICS_KEYS = ("Re", "Pr", "Ri", "Ha", "Br", "Le")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeshSpec:
    h_interior: float = 0.06
    h_boundary: float = 0.025
    grading_ratio: float = 1.3


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "results"
    prefix: str = "case"
    vtk: bool = True
    csv: bool = True


@dataclass(frozen=True)
class CaseConfig:
    groups: DimensionlessGroups
    kind: str = "cavity"
    geometry: object = field(default_factory=CavityGeometry)
    mesh: MeshSpec = field(default_factory=MeshSpec)
    solver: SolverOptions = field(default_factory=SolverOptions)
    output: OutputSpec = field(default_factory=OutputSpec)
    source: str = "<memory>"

    def with_groups(self, **kw) -> "CaseConfig":
        from dataclasses import replace
        return replace(self, groups=self.groups.replace(**kw))


def _number(section, key, raw, kind=float):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def _typed(section: str, values: dict, cls, renames: dict | None = None) -> dict:
    """Convert raw strings to the field types of dataclass ``cls``."""
    renames = renames or {}
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        name = renames.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        default = known[name].default
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ConfigError(f"[{section}] {key} = {raw!r} is not a boolean")
            out[name] = low in ("true", "yes", "1", "on")
        elif isinstance(default, int):
            out[name] = _number(section, key, raw, int)
        elif isinstance(default, float):
            out[name] = _number(section, key, raw)
        else:
            out[name] = raw.strip()
    return out


def parse_config(text: str, source: str = "<string>") -> CaseConfig:
    """Parse case-file text into a :class:`CaseConfig`.

    Raises
    ------
    ConfigError
        Syntax errors (with the line number), missing sections or keys
        (naming them) and invalid values.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str                  # keys are case-sensitive (Re, Pr, ...)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for sec in ("geometry", "physics", "solver", "output"):
        if not cp.has_section(sec):
            raise ConfigError(f"{source}: missing section [{sec}]")
    extra = set(cp.sections()) - {"geometry", "physics", "solver", "output"}
    if extra:
        raise ConfigError(f"{source}: unknown section(s) {sorted(extra)}")

    phys = dict(cp["physics"])
    for key in PHYSICS_KEYS:
        if key not in phys:
            raise ConfigError(f"{source}: missing key {key!r} in [physics]")
    unknown = set(phys) - set(PHYSICS_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {sorted(unknown)} in [physics]")
    try:
        groups = DimensionlessGroups(**{k: _number("physics", k, phys[k]) for k in PHYSICS_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    geo = dict(cp["geometry"])
    kind = geo.pop("kind", "cavity").strip()
    if kind not in GEOMETRY_KINDS:
        raise ConfigError(f"{source}: [geometry] kind must be one of {GEOMETRY_KINDS}")
    mesh_raw = {k: geo.pop(k) for k in list(geo) if k in ("h_interior", "h_boundary",
                                                           "grading_ratio")}
    mesh = MeshSpec(**_typed("geometry", mesh_raw, MeshSpec))
    try:
        geometry = _geometry(kind, geo)
    except InvalidGeometry as exc:
        raise ConfigError(f"{source}: invalid geometry: {exc}") from exc

    try:
        solver = SolverOptions(**_typed("solver", dict(cp["solver"]), SolverOptions))
        output = OutputSpec(**_typed("output", dict(cp["output"]), OutputSpec))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from exc
    return CaseConfig(groups, kind, geometry, mesh, solver, output, source)


def _geometry(kind: str, geo: dict):
    if kind == "square":
        vals = {k: _number("geometry", k, v) for k, v in geo.items()}
        bad = set(vals) - {"width", "height"}
        if bad:
            raise ConfigError(f"unknown key(s) {sorted(bad)} in [geometry]")
        return rectangle_domain(vals.get("width", 1.0), vals.get("height", 1.0))
    if kind == "triangle":
        vals = {k: _number("geometry", k, v) for k, v in geo.items()}
        bad = set(vals) - {"height"}
        if bad:
            raise ConfigError(f"unknown key(s) {sorted(bad)} in [geometry]")
        return triangular_cavity_geometry(vals.get("height", 1.0))
    trap_keys = {f.name for f in fields(Trapezoid)}
    trap = {k[len("trapezoid_"):]: v for k, v in geo.items() if k.startswith("trapezoid_")}
    rest = {k: v for k, v in geo.items() if not k.startswith("trapezoid_")}
    bad = set(trap) - trap_keys
    if bad:
        raise ConfigError(f"unknown key(s) {sorted('trapezoid_' + b for b in bad)} in [geometry]")
    kw = {}
    if "heater_centers" in rest:
        raw = rest.pop("heater_centers")
        try:
            kw["heater_centers"] = tuple(float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(f"[geometry] heater_centers = {raw!r} is not a list") from None
    for key in ("aspect_ratio", "heater_radius", "arc_chord_tolerance"):
        if key in rest:
            kw[key] = _number("geometry", key, rest.pop(key))
    if rest:
        raise ConfigError(f"unknown key(s) {sorted(rest)} in [geometry]")
    trapezoid = Trapezoid(**{k: _number("geometry", "trapezoid_" + k, v) for k, v in trap.items()})
    return CavityGeometry(trapezoid=trapezoid, **kw)


def load_config(path) -> CaseConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read case file {path}: {exc}") from exc
    return parse_config(text, str(path))
