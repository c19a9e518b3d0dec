"""Experiment configuration: schema (pydantic) and semantic resolution.

A config file holds one experiment object or ``{"experiments": [...]}``.
Every error is reported as :class:`ConfigError` with a pointer such as
``experiments[0].space.matrix``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ThermoformError
from .measures import (InvariantMeasure, MarkovMeasure, bernoulli, mix,
                       periodic_orbit_measure)
from .potential import ObservableFamily, Potential
from .pressure import BOX_CAP, STRIP_CAP, STRIP_MAX_WIDTH, equilibrium_state
from .shift import (DEFAULT_CAP, ShiftSpace, build_sft, count_admissible, count_periodic,
                    full_shift, golden_mean)

TASKS = ("pressure-sweep", "equilibrium", "rate-sweep", "ldp-report", "entropy-approx",
         "2d-pressure")


class ConfigError(ThermoformError):
    def __init__(self, pointer: str, message: str):
        self.pointer, self.message = pointer, message
        super().__init__(f"{pointer}: {message}" if pointer else message)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpaceSpec(_Model):
    preset: Literal["golden_mean", "full_shift"] | None = None
    k: int | None = Field(default=None, ge=1, le=64)
    matrix: list[list[int]] | None = None
    dimension: Literal[1, 2] = 1


class PotentialSpec(_Model):
    """Exactly one of ``values``, ``constant``, ``indicator``; empty means zero."""

    window: int | None = Field(default=None, ge=1, le=24)
    values: dict[str, float] | None = None
    constant: float | None = None
    indicator: str | None = None
    scale: float = 1.0

    @model_validator(mode="after")
    def _one_form(self):
        given = [n for n in ("values", "constant", "indicator") if getattr(self, n) is not None]
        if len(given) > 1:
            raise ValueError(f"give only one of values/constant/indicator, got {', '.join(given)}")
        if self.values is not None and self.window is None:
            raise ValueError("'window' is required with 'values'")
        return self


class MixturePart(_Model):
    weight: float = Field(gt=0)
    measure: "MeasureSpec"


class MeasureSpec(_Model):
    kind: Literal["markov", "equilibrium", "periodic_orbit", "bernoulli", "mixture"]
    order: int | None = Field(default=None, ge=1)
    transition: list[list[float]] | None = None
    stationary: list[float] | None = None
    potential: PotentialSpec | None = None
    word: str | None = None
    p: list[float] | None = None
    parts: list[MixturePart] | None = None

    @model_validator(mode="after")
    def _fields_for_kind(self):
        need = {"markov": ("order", "transition"), "equilibrium": (),
                "periodic_orbit": ("word",), "bernoulli": ("p",), "mixture": ("parts",)}
        for name in need[self.kind]:
            if getattr(self, name) is None:
                raise ValueError(f"measure of kind {self.kind!r} needs {name!r}")
        return self


class Tolerances(_Model):
    grad_tol: float = Field(default=1e-9, gt=0, le=1e-3)
    t_bound: float = Field(default=1e3, gt=0)
    eta: float = Field(default=1e-6, gt=0, lt=0.5)
    max_iter: int = Field(default=500, ge=1)


class CylinderFamilySpec(_Model):
    cylinders: int = Field(ge=1)


class BoxSpec(_Model):
    lo: list[float]
    hi: list[float]
    closed_lo: list[bool] | None = None
    closed_hi: list[bool] | None = None


class GridSpec(_Model):
    lo: float
    hi: float
    step: float = Field(gt=0)


class PressureSweepParams(_Model):
    n: list[int] = Field(min_length=1)
    routes: list[Literal["periodic", "separated"]] = ["periodic"]
    r: int = Field(default=0, ge=0)


class EquilibriumParams(_Model):
    pass


class RateSweepParams(_Model):
    points: list[list[float]] | None = None
    grid: GridSpec | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.points is None) == (self.grid is None):
            raise ValueError("give exactly one of 'points' or 'grid'")
        return self


class LdpParams(_Model):
    variant: Literal["periodic", "separated", "gibbs"]
    n: list[int] = Field(min_length=1)
    box: BoxSpec
    r: int = Field(default=0, ge=0)
    c: float = Field(default=1.0, gt=0)


class EntropyParams(_Model):
    max_window: int = Field(ge=1, le=24)
    target: MeasureSpec


class TwoDParams(_Model):
    nn: list[list[float]]
    strip_widths: list[int] = []
    boxes: list[tuple[int, int]] = []


Observables = Union[list[PotentialSpec], CylinderFamilySpec]


class _Base(_Model):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    space: SpaceSpec
    potential: PotentialSpec = PotentialSpec()
    observables: Observables | None = None
    tolerances: Tolerances = Tolerances()
    cap: int = Field(default=DEFAULT_CAP, ge=1, le=2**26)


class PressureSweep(_Base):
    task: Literal["pressure-sweep"]
    params: PressureSweepParams


class Equilibrium(_Base):
    task: Literal["equilibrium"]
    params: EquilibriumParams = EquilibriumParams()


class RateSweep(_Base):
    task: Literal["rate-sweep"]
    params: RateSweepParams


class LdpReportTask(_Base):
    task: Literal["ldp-report"]
    params: LdpParams


class EntropyApprox(_Base):
    task: Literal["entropy-approx"]
    params: EntropyParams


class TwoDPressure(_Base):
    task: Literal["2d-pressure"]
    params: TwoDParams


ExperimentConfig = Annotated[
    Union[PressureSweep, Equilibrium, RateSweep, LdpReportTask, EntropyApprox, TwoDPressure],
    Field(discriminator="task")]


class RunFile(_Model):
    experiments: list[ExperimentConfig] = Field(min_length=1)
    output_dir: str = "out"
    jobs: int = Field(default=1, ge=1, le=256)


# ------------------------------------------------------------ loading

def _pointer(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        elif part in TASKS or part in ("list[PotentialSpec]", "CylinderFamilySpec"):
            continue  # union tags add nothing for the reader
        else:
            out += f".{part}" if out else str(part)
    return out


def load_config(path) -> RunFile:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("", f"config file {str(path)!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(raw, dict) and "task" in raw:
        raw = {"experiments": [raw]}
    try:
        return RunFile.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = _pointer(err["loc"])
        raise ConfigError(loc, err["msg"]) from None


# ------------------------------------------------------------ resolution

@dataclass
class Resolved:
    """Semantically checked objects for one experiment (no heavy computation)."""

    config: _Base
    pointer: str
    space: ShiftSpace
    f: Potential | None = None
    S: ObservableFamily | None = None
    target: object = None
    box: object = None


class _At:
    """Context manager turning library errors into pointed config errors."""

    def __init__(self, pointer: str):
        self.pointer = pointer

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and isinstance(exc, ThermoformError) and not isinstance(exc, ConfigError):
            raise ConfigError(self.pointer, str(exc)) from None
        return False


def build_space(spec: SpaceSpec, at: str) -> ShiftSpace:
    with _At(at):
        if spec.preset == "golden_mean":
            if spec.k not in (None, 2) or spec.matrix is not None or spec.dimension != 1:
                raise ConfigError(at, "preset 'golden_mean' takes no k, matrix or dimension")
            return golden_mean()
        if spec.k is None and spec.matrix is not None and spec.dimension == 1:
            spec = spec.model_copy(update={"k": len(spec.matrix)})
        if spec.k is None:
            raise ConfigError(at + ".k", "alphabet size is required")
        if spec.dimension == 2 or spec.preset == "full_shift" or spec.matrix is None:
            if spec.matrix is not None:
                raise ConfigError(at + ".matrix", "a full shift takes no matrix")
            return full_shift(spec.k, spec.dimension)
    with _At(at + ".matrix"):
        return build_sft(spec.k, spec.matrix)


def build_potential(space: ShiftSpace, spec: PotentialSpec, at: str) -> Potential:
    with _At(at):
        if spec.values is not None:
            pot = Potential.from_values(space, spec.window, spec.values)
        elif spec.constant is not None:
            pot = Potential.constant(space, spec.constant, spec.window or 1)
        elif spec.indicator is not None:
            pot = Potential.indicator(space, spec.indicator)
            if spec.window is not None and spec.window != pot.window:
                pot = pot.lift(spec.window)
        else:
            pot = Potential.zero(space, spec.window or 1)
        return pot * spec.scale if spec.scale != 1.0 else pot


def build_family(space: ShiftSpace, spec, at: str, cap: int) -> ObservableFamily:
    from .convex import cylinder_family

    if spec is None:
        raise ConfigError(at, "this task needs an observable family")
    if isinstance(spec, CylinderFamilySpec):
        with _At(at + ".cylinders"):
            return cylinder_family(space, spec.cylinders, cap)
    if not spec:
        raise ConfigError(at, "observable family is empty")
    return ObservableFamily(build_potential(space, g, f"{at}[{i}]") for i, g in enumerate(spec))


def build_measure(space: ShiftSpace, spec: MeasureSpec, at: str):
    with _At(at):
        if spec.kind == "markov":
            return MarkovMeasure(space, spec.order, spec.transition, spec.stationary)
        if spec.kind == "equilibrium":
            pot = build_potential(space, spec.potential or PotentialSpec(), at + ".potential")
            return equilibrium_state(space, pot)
        if spec.kind == "periodic_orbit":
            return periodic_orbit_measure(space, spec.word)
        if spec.kind == "bernoulli":
            return bernoulli(space, spec.p)
    parts = [(p.weight, build_measure(space, p.measure, f"{at}.parts[{i}].measure"))
             for i, p in enumerate(spec.parts)]
    with _At(at + ".parts"):
        return mix(parts)


def _check_cap(at: str, what: str, count: int, cap: int):
    if count > cap:
        raise ConfigError(at, f"{what} needs {count} items, above the enumeration cap {cap}")


def resolve(cfg: _Base, at: str) -> Resolved:
    """Schema-checked config -> library objects, with caps checked up front."""
    space = build_space(cfg.space, at + ".space")
    res = Resolved(cfg, at, space)
    p = cfg.params
    if cfg.task == "2d-pressure":
        if space.dimension != 2:
            raise ConfigError(at + ".space.dimension", "2d-pressure needs a 2-D full shift")
        k = space.k
        if len(p.nn) != k or any(len(row) != k for row in p.nn):
            raise ConfigError(at + ".params.nn", f"nearest-neighbour table must be {k}x{k}")
        if not p.strip_widths and not p.boxes:
            raise ConfigError(at + ".params", "give at least one strip width or box")
        for i, w in enumerate(p.strip_widths):
            if not 2 <= w <= STRIP_MAX_WIDTH:
                raise ConfigError(f"{at}.params.strip_widths[{i}]",
                                  f"strip width must be in 2..{STRIP_MAX_WIDTH}, got {w}")
            _check_cap(f"{at}.params.strip_widths[{i}]", f"strip width {w}", k ** w, STRIP_CAP)
        for i, (a1, a2) in enumerate(p.boxes):
            if a1 < 1 or a2 < 1:
                raise ConfigError(f"{at}.params.boxes[{i}]", "box sides must be >= 1")
            _check_cap(f"{at}.params.boxes[{i}]", f"{a1}x{a2} box", k ** (a1 * a2),
                       min(cfg.cap, BOX_CAP))
        return res
    if space.dimension != 1:
        raise ConfigError(at + ".space.dimension", f"task {cfg.task!r} needs a 1-D space")
    if not space.is_primitive:
        raise ConfigError(at + ".space.matrix",
                          "transition matrix is not primitive; equilibrium states need not be unique")
    res.f = build_potential(space, cfg.potential, at + ".potential")
    if cfg.task == "pressure-sweep":
        for i, n in enumerate(p.n):
            ptr = f"{at}.params.n[{i}]"
            if n < 1:
                raise ConfigError(ptr, f"n must be >= 1, got {n}")
            if "periodic" in p.routes:
                _check_cap(ptr, f"period {n}", count_periodic(space, n), cfg.cap)
            if "separated" in p.routes:
                _check_cap(ptr, f"separated set at n={n}, r={p.r}",
                           count_admissible(space, n + p.r), cfg.cap)
    elif cfg.task in ("rate-sweep", "ldp-report"):
        res.S = build_family(space, cfg.observables, at + ".observables", cfg.cap)
        if cfg.task == "rate-sweep":
            if p.points is not None:
                for i, x in enumerate(p.points):
                    if len(x) != res.S.d:
                        raise ConfigError(f"{at}.params.points[{i}]",
                                          f"expected {res.S.d} coordinates, got {len(x)}")
            else:
                if res.S.d != 1:
                    raise ConfigError(at + ".params.grid", "grids are for d = 1 families")
                if p.grid.hi < p.grid.lo:
                    raise ConfigError(at + ".params.grid", "grid has hi < lo")
        else:
            if res.S.d > 2:
                raise ConfigError(at + ".observables", "ldp-report supports d <= 2")
            from .ldp import BoxQuery
            with _At(at + ".params.box"):
                res.box = BoxQuery(p.box.lo, p.box.hi, p.box.closed_lo, p.box.closed_hi)
            if res.box.d != res.S.d:
                raise ConfigError(at + ".params.box", f"box dimension {res.box.d} != family size {res.S.d}")
            for i, n in enumerate(p.n):
                ptr = f"{at}.params.n[{i}]"
                if n < 1:
                    raise ConfigError(ptr, f"n must be >= 1, got {n}")
                if p.variant == "periodic":
                    _check_cap(ptr, f"period {n}", count_periodic(space, n), cfg.cap)
                    if count_periodic(space, n) == 0:
                        raise ConfigError(ptr, f"there are no periodic points of period {n}")
                elif p.variant == "separated":
                    _check_cap(ptr, f"separated set at n={n}, r={p.r}",
                               count_admissible(space, n + p.r), cfg.cap)
    elif cfg.task == "entropy-approx":
        _check_cap(at + ".params.max_window", f"cylinders of length {p.max_window}",
                   count_admissible(space, p.max_window), cfg.cap)
        if count_admissible(space, 1) < 2:
            raise ConfigError(at + ".space", "a single-symbol space has no cylinder family")
        res.target = _TargetSpec(p.target, at + ".params.target")
        _validate_measure(space, p.target, at + ".params.target")
    return res


@dataclass
class _TargetSpec:
    spec: MeasureSpec
    pointer: str


def _validate_measure(space: ShiftSpace, spec: MeasureSpec, at: str):
    """Checks a measure spec without computing equilibrium states."""
    if spec.kind == "equilibrium":
        build_potential(space, spec.potential or PotentialSpec(), at + ".potential")
    elif spec.kind == "mixture":
        for i, part in enumerate(spec.parts):
            _validate_measure(space, part.measure, f"{at}.parts[{i}].measure")
        total = sum(p.weight for p in spec.parts)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(at + ".parts", f"mixture weights sum to {total!r}, not 1")
    else:
        build_measure(space, spec, at)


def resolve_all(run: RunFile) -> list[Resolved]:
    seen = {}
    out = []
    for i, cfg in enumerate(run.experiments):
        at = f"experiments[{i}]"
        if cfg.name in seen:
            raise ConfigError(at + ".name", f"name {cfg.name!r} already used by experiments[{seen[cfg.name]}]")
        seen[cfg.name] = i
        out.append(resolve(cfg, at))
    return out


def target_measure(res: Resolved) -> InvariantMeasure | MarkovMeasure:
    return build_measure(res.space, res.target.spec, res.target.pointer)


def config_json(cfg: _Base) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True)


__all__ = ["ConfigError", "ExperimentConfig", "RunFile", "Resolved", "load_config", "resolve",
           "resolve_all", "target_measure", "config_json"]
