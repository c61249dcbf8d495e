"""Run configuration: one JSON document describing model, data and engines.

Sections
--------
model
    ``{"kind": "appendix" | "exponential" | "biexponential" | "rational" |
    "consolidation", ...}``.  The consolidation kind takes ``version``,
    ``geometry`` (``H``, ``E_oed``), ``fixed``, ``K`` and ``bounds``.  Any kind
    accepts ``bounds`` as ``{name: [lo, hi]}``.
schedule
    ``{"times": [...]}`` or ``{"start", "stop", "num", "spacing"}``.
truth
    Generative parameter values by name (simulate only).
noise
    ``{"kind": "none" | "gaussian" | "uniform" | "custom-vector",
    "amplitude", "seed", "values"}``.
grid
    ``{"axes": [{"parameter", "lo", "hi", "num", "spacing"} | {"parameter",
    "values"}], "fixed": {name: value}, "workers": int}``.
solver
    Secant options plus ``start`` (a point) or ``initial`` (all trial points)
    and ``rel_step``/``abs_step`` for the automatic starting simplex.
analysis
    ``{"level": float | null, "probes": [{name: value}, ...], "grid": {...}}``.
    The optional grid is used for clever sections and error domains; it
    defaults to the top-level grid.
stages
    List of per-stage entries ``{"name", "data", "schedule", "truth",
    "noise", "grid"}`` for multistage workflows; missing keys fall back to the
    top-level sections.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from . import consolidation as cons
from . import toys
from .grid import GridSpec
from .model import DataSeries, ModelDefinition, SamplingSchedule
from .secant import SolverOptions

NOISE_KINDS = ("none", "gaussian", "uniform", "custom-vector")


class ConfigError(ValueError):
    """The configuration document is incomplete or inconsistent."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    amplitude: float = 0.0
    seed: int = 0
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not self.amplitude >= 0:
            raise ConfigError("noise amplitude must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("noise seed must be a 64-bit unsigned integer")
        if self.kind == "custom-vector" and self.values is None:
            raise ConfigError("custom-vector noise needs 'values'")

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "NoiseSpec":
        d = dict(d or {})
        unknown = set(d) - {"kind", "amplitude", "seed", "values"}
        if unknown:
            raise ConfigError(f"unknown noise keys: {sorted(unknown)}")
        vals = d.get("values")
        return cls(
            kind=str(d.get("kind", "none")),
            amplitude=float(d.get("amplitude", 0.0)),
            seed=int(d.get("seed", 0)),
            values=tuple(float(v) for v in vals) if vals is not None else None,
        )

    def sample(self, n: int) -> np.ndarray:
        """Noise vector of length ``n``; identical for identical specs."""
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "custom-vector":
            v = np.asarray(self.values, dtype=float)
            if v.size != n:
                raise ConfigError(f"custom noise has {v.size} entries, schedule has {n}")
            return v.copy()
        rng = np.random.default_rng(int(self.seed))
        if self.kind == "gaussian":
            return self.amplitude * rng.standard_normal(n)
        return rng.uniform(-self.amplitude, self.amplitude, n)


def _bounds_list(names, given: Optional[Mapping], defaults) -> list:
    given = dict(given or {})
    unknown = set(given) - set(names)
    if unknown:
        raise ConfigError(f"bounds for unknown parameters: {sorted(unknown)}")
    return [tuple(given.get(n, d)) for n, d in zip(names, defaults)]


def build_model(spec: Mapping) -> ModelDefinition:
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError("model section needs a 'kind'")
    kind = str(spec["kind"]).lower()
    bounds = spec.get("bounds")
    try:
        if kind == "appendix":
            m = toys.appendix_model(x=float(spec.get("x", 1.0)))
        elif kind == "exponential":
            m = toys.exponential_model()
        elif kind == "biexponential":
            m = toys.biexponential_model()
        elif kind == "rational":
            m = toys.rational_model()
        elif kind == "consolidation":
            geom = spec.get("geometry", {})
            g = cons.OedometerGeometry(H=float(geom["H"]), E_oed=float(geom.get("E_oed", 1.0)))
            return cons.build_model(
                spec.get("version", "HC"),
                g,
                fixed=spec.get("fixed"),
                K=int(spec.get("K", cons.DEFAULT_K)),
                bounds={k: tuple(v) for k, v in (bounds or {}).items()},
            )
        else:
            raise ConfigError(f"unknown model kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"model section is missing {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    if bounds:
        b = _bounds_list(m.names, bounds, [tuple(x) for x in m.bounds])
        m = ModelDefinition(m.names, m.evaluate, m.split, b, m.basis, m.label)
    return m


def build_schedule(spec: Optional[Mapping]) -> SamplingSchedule:
    if not spec:
        raise ConfigError("missing schedule section")
    unit = str(spec.get("unit", "s"))
    try:
        if "times" in spec:
            t = np.asarray(spec["times"], dtype=float)
        else:
            lo, hi, n = float(spec["start"]), float(spec["stop"]), int(spec["num"])
            spacing = spec.get("spacing", "linear")
            if spacing == "log":
                t = np.geomspace(lo, hi, n)
            elif spacing == "linear":
                t = np.linspace(lo, hi, n)
            else:
                raise ConfigError(f"unknown schedule spacing {spacing!r}")
        return SamplingSchedule(t, unit)
    except KeyError as exc:
        raise ConfigError(f"schedule section is missing {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid schedule: {exc}") from None


def build_grid(spec: Optional[Mapping], allow_empty: bool = True) -> GridSpec:
    if spec is None or (not allow_empty and not spec.get("axes")):
        raise ConfigError("grid section needs at least one axis")
    try:
        return GridSpec.from_dict({"axes": spec.get("axes") or []})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from None


_SOLVER_KEYS = {f for f in SolverOptions.__dataclass_fields__}


def build_solver(spec: Optional[Mapping], seed: Optional[int] = None) -> SolverOptions:
    spec = dict(spec or {})
    opts = {k: v for k, v in spec.items() if k in _SOLVER_KEYS}
    if seed is not None:
        opts["seed"] = int(seed)
    try:
        return SolverOptions(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver options: {exc}") from None


@dataclass
class RunConfig:
    raw: Dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls(raw, path.resolve().parent)

    def section(self, name: str, default=None):
        return self.raw.get(name, default)

    def model(self) -> ModelDefinition:
        return build_model(self.raw.get("model"))

    def schedule(self) -> SamplingSchedule:
        return build_schedule(self.raw.get("schedule"))

    def noise(self, seed: Optional[int] = None) -> NoiseSpec:
        spec = dict(self.raw.get("noise") or {})
        if seed is not None:
            spec["seed"] = seed
        return NoiseSpec.from_dict(spec)

    def grid(self) -> GridSpec:
        return build_grid(self.raw.get("grid"))

    def _section_grid_spec(self) -> Optional[Mapping]:
        spec = (self.raw.get("analysis") or {}).get("grid")
        return spec if spec is not None else self.raw.get("grid")

    def has_section_grid(self) -> bool:
        spec = self._section_grid_spec()
        return bool(spec and spec.get("axes"))

    def section_grid(self) -> GridSpec:
        """Grid for clever sections and error domains (``analysis.grid`` or ``grid``)."""
        return build_grid(self._section_grid_spec(), allow_empty=False)

    def section_grid_fixed(self) -> dict:
        return dict((self._section_grid_spec() or {}).get("fixed") or {})

    def grid_fixed(self) -> dict:
        return dict((self.raw.get("grid") or {}).get("fixed") or {})

    def grid_workers(self) -> int:
        return int((self.raw.get("grid") or {}).get("workers", 1))

    def solver(self, seed: Optional[int] = None) -> SolverOptions:
        return build_solver(self.raw.get("solver"), seed)

    def truth(self, model: ModelDefinition):
        t = self.raw.get("truth")
        if not t:
            raise ConfigError("missing truth section")
        try:
            return model.params(t)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"invalid truth: {exc}") from None

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def stages(self) -> List["RunConfig"]:
        """Per-stage configurations inheriting the top-level sections."""
        out = []
        for k, st in enumerate(self.raw.get("stages") or []):
            if not isinstance(st, Mapping):
                raise ConfigError("each stage must be a JSON object")
            merged = {key: v for key, v in self.raw.items() if key != "stages"}
            merged.update(st)
            merged.setdefault("name", f"stage{k + 1}")
            out.append(RunConfig(merged, self.base_dir))
        return out

    @property
    def name(self) -> str:
        return str(self.raw.get("name", "run"))


def simulate_series(model: ModelDefinition, truth, schedule: SamplingSchedule, noise: NoiseSpec) -> DataSeries:
    from .model import response

    clean = response(model, truth, schedule)
    return DataSeries(schedule, clean + noise.sample(len(schedule)))
