"""Model abstraction, residuals, merit and elimination of linear parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .linalg import DEFAULT_RANK_TOL, lstsq_min_norm


class ModelEvaluationError(ValueError):
    """Raised when a model returns a non-finite value."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class OutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingSchedule:
    times: np.ndarray
    unit: str = "s"

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        if t.size < 1:
            raise ValueError("schedule needs at least one sampling time")
        if not np.all(np.isfinite(t)):
            raise ValueError("sampling times must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sampling times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class DataSeries:
    schedule: SamplingSchedule
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != len(self.schedule):
            raise ValueError(
                f"{v.size} values for a schedule of {len(self.schedule)} times"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("data values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_arrays(cls, times, values, unit: str = "s") -> "DataSeries":
        return cls(SamplingSchedule(times, unit), values)

    @property
    def times(self) -> np.ndarray:
        return self.schedule.times


@dataclass(frozen=True)
class ParameterSplit:
    linear_indices: tuple
    nonlinear_indices: tuple

    def __post_init__(self):
        lin = tuple(int(i) for i in self.linear_indices)
        nl = tuple(int(i) for i in self.nonlinear_indices)
        if set(lin) & set(nl):
            raise ValueError("linear and nonlinear index sets overlap")
        allidx = sorted(lin + nl)
        if allidx != list(range(len(allidx))):
            raise ValueError("index sets must partition 0..M-1")
        object.__setattr__(self, "linear_indices", lin)
        object.__setattr__(self, "nonlinear_indices", nl)

    @property
    def size(self) -> int:
        return len(self.linear_indices) + len(self.nonlinear_indices)

    @classmethod
    def all_nonlinear(cls, m: int) -> "ParameterSplit":
        return cls((), tuple(range(m)))


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    split: ParameterSplit
    bounds: np.ndarray  # shape (M, 2)
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        b = np.array(self.bounds, dtype=float).reshape(-1, 2)
        if v.size < 1 or v.size != b.shape[0] or v.size != self.split.size:
            raise ValueError("values, bounds and split disagree in length")
        if self.check:
            bad = np.flatnonzero((v < b[:, 0]) | (v > b[:, 1]) | ~np.isfinite(v))
            if bad.size:
                i = int(bad[0])
                raise OutOfBoundsError(
                    f"parameter {i} = {v[i]!r} outside [{b[i, 0]}, {b[i, 1]}]"
                )
        v.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bounds", b)

    def __len__(self) -> int:
        return self.values.size

    @property
    def linear(self) -> np.ndarray:
        return self.values[list(self.split.linear_indices)]

    @property
    def nonlinear(self) -> np.ndarray:
        return self.values[list(self.split.nonlinear_indices)]

    @property
    def in_bounds(self) -> bool:
        return bool(np.all((self.values >= self.bounds[:, 0]) & (self.values <= self.bounds[:, 1])))

    def replace(self, values) -> "ParameterVector":
        return ParameterVector(values, self.split, self.bounds, self.check)


# evaluate(times, values) -> responses; basis(times, p2) -> (N, k) matrix
Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelDefinition:
    """A model response ``u(t, p)`` with optional partly-linear structure.

    When ``basis`` is given the model must satisfy
    ``evaluate(t, p) == basis(t, p2) @ p1`` where ``p1``/``p2`` follow ``split``.
    """

    names: tuple
    evaluate: Evaluator
    split: ParameterSplit
    bounds: np.ndarray
    basis: Optional[Evaluator] = None
    label: str = "model"

    def __post_init__(self):
        names = tuple(self.names)
        b = np.array(self.bounds, dtype=float).reshape(-1, 2)
        if len(names) != self.split.size or b.shape[0] != len(names):
            raise ValueError("names, bounds and split disagree in length")
        if np.any(b[:, 0] > b[:, 1]):
            raise ValueError("lower bound above upper bound")
        if self.basis is None and self.split.linear_indices:
            raise ValueError("linear parameters declared without a basis")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "bounds", b)

    @property
    def parameter_count(self) -> int:
        return len(self.names)

    @property
    def linear_count(self) -> int:
        return len(self.split.linear_indices)

    @property
    def nonlinear_count(self) -> int:
        return len(self.split.nonlinear_indices)

    def index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.parameter_count:
                raise IndexError(f"parameter index {name} out of range")
            return int(name)
        return self.names.index(name)

    def params(self, values, check: bool = True) -> ParameterVector:
        if isinstance(values, Mapping):
            v = np.full(self.parameter_count, np.nan)
            for k, x in values.items():
                v[self.index(k)] = x
            if np.any(np.isnan(v)):
                missing = [n for n, x in zip(self.names, v) if np.isnan(x)]
                raise ValueError(f"missing parameter values: {missing}")
            values = v
        return ParameterVector(values, self.split, self.bounds, check)

    def assemble(self, p1, p2, check: bool = False) -> ParameterVector:
        v = np.empty(self.parameter_count)
        v[list(self.split.linear_indices)] = np.asarray(p1, dtype=float).reshape(-1)
        v[list(self.split.nonlinear_indices)] = np.asarray(p2, dtype=float).reshape(-1)
        return ParameterVector(v, self.split, self.bounds, check)

    def as_dict(self, p: ParameterVector) -> dict:
        return {n: float(x) for n, x in zip(self.names, p.values)}


def _values(model: ModelDefinition, p) -> np.ndarray:
    if isinstance(p, ParameterVector):
        return p.values
    return model.params(p).values


def _times(schedule) -> np.ndarray:
    if isinstance(schedule, SamplingSchedule):
        return schedule.times
    if isinstance(schedule, DataSeries):
        return schedule.schedule.times
    return SamplingSchedule(schedule).times


def response(model: ModelDefinition, p, schedule) -> np.ndarray:
    """Model response vector at every sampling time."""
    t = _times(schedule)
    u = np.asarray(model.evaluate(t, _values(model, p)), dtype=float).reshape(-1)
    if u.size != t.size:
        raise ModelEvaluationError(f"model returned {u.size} values for {t.size} times")
    bad = np.flatnonzero(~np.isfinite(u))
    if bad.size:
        i = int(bad[0])
        raise ModelEvaluationError(f"non-finite model value at time index {i} (t={t[i]!r})", i)
    return u


def residual(model: ModelDefinition, p, data: DataSeries) -> np.ndarray:
    """Error vector ``h(p) = f - u(p)``."""
    return data.values - response(model, p, data.schedule)


def merit(model: ModelDefinition, p, data: DataSeries) -> float:
    """Real-life merit ``h(p)^T h(p)``."""
    h = residual(model, p, data)
    return float(h @ h)


def design_matrix(model: ModelDefinition, p2, schedule) -> np.ndarray:
    """``A(p2)`` with entry (i, j) = basis_j(t_i, p2)."""
    if model.basis is None:
        raise ValueError(f"model {model.label!r} has no linear basis")
    t = _times(schedule)
    p2 = np.asarray(p2, dtype=float).reshape(-1)
    a = np.asarray(model.basis(t, p2), dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape != (t.size, model.linear_count):
        raise ModelEvaluationError(
            f"basis returned shape {a.shape}, expected {(t.size, model.linear_count)}"
        )
    bad = np.argwhere(~np.isfinite(a))
    if bad.size:
        i = int(bad[0, 0])
        raise ModelEvaluationError(f"non-finite basis value at time index {i}", i)
    return a


@dataclass(frozen=True)
class Elimination:
    p1_star: np.ndarray
    section_value: float
    effective_rank: int
    parameters: ParameterVector
    residual: np.ndarray

    def __iter__(self):
        # unpacks as (p1_star, section_value, effective_rank)
        return iter((self.p1_star, self.section_value, self.effective_rank))


def eliminate_linear(
    model: ModelDefinition,
    p2,
    data: DataSeries,
    rank_tol: float = DEFAULT_RANK_TOL,
    fixed_linear: Optional[Mapping[int, float]] = None,
) -> Elimination:
    """Conditional minimization over the linear parameters at fixed ``p2``.

    ``fixed_linear`` pins some linear parameters (by global index) to given
    values; only the remaining ones are solved for.
    """
    p2 = np.asarray(p2, dtype=float).reshape(-1)
    if p2.size != model.nonlinear_count:
        raise ValueError(f"expected {model.nonlinear_count} nonlinear values, got {p2.size}")
    nl = list(model.split.nonlinear_indices)
    b = model.bounds[nl]
    out = np.flatnonzero((p2 < b[:, 0]) | (p2 > b[:, 1]))
    if out.size:
        i = nl[int(out[0])]
        raise OutOfBoundsError(f"parameter {model.names[i]!r} = {p2[out[0]]!r} out of bounds")

    lin = list(model.split.linear_indices)
    if not lin:
        p = model.assemble([], p2)
        h = residual(model, p, data)
        return Elimination(np.empty(0), float(h @ h), 0, p, h)

    a = design_matrix(model, p2, data.schedule)
    target = data.values.copy()
    free = np.ones(len(lin), dtype=bool)
    p1 = np.zeros(len(lin))
    if fixed_linear:
        for gi, val in fixed_linear.items():
            j = lin.index(int(gi))
            free[j] = False
            p1[j] = val
        target = target - a[:, ~free] @ p1[~free]
    rank = 0
    if np.any(free):
        sol = lstsq_min_norm(a[:, free], target, rank_tol)
        p1[free] = sol.solution
        rank = sol.effective_rank
    h = data.values - a @ p1
    p = model.assemble(p1, p2)
    return Elimination(p1, float(h @ h), rank, p, h)


class CountingModel:
    """Wraps a model and counts calls to ``evaluate`` and ``basis``.

    ``calls`` records the parameter values of every ``evaluate`` call.
    """

    def __init__(self, model: ModelDefinition, record: bool = False):
        self.inner = model
        self.evaluations = 0
        self.basis_evaluations = 0
        self.record = record
        self.calls: list = []
        basis = None
        if model.basis is not None:
            def basis(t, p2):
                self.basis_evaluations += 1
                return model.basis(t, p2)

        def evaluate(t, p):
            self.evaluations += 1
            if self.record:
                self.calls.append(np.array(p, dtype=float))
            return model.evaluate(t, p)

        self.model = ModelDefinition(
            model.names, evaluate, model.split, model.bounds, basis, model.label
        )


def partly_linear(
    names: Sequence[str],
    linear: Sequence[str],
    basis: Evaluator,
    bounds=None,
    label: str = "model",
) -> ModelDefinition:
    """Build a partly-linear model whose response is ``basis(t, p2) @ p1``."""
    names = tuple(names)
    lin_idx = tuple(names.index(n) for n in linear)
    nl_idx = tuple(i for i in range(len(names)) if i not in lin_idx)
    split = ParameterSplit(lin_idx, nl_idx)
    if bounds is None:
        bounds = [(-np.inf, np.inf)] * len(names)

    def evaluate(t, p):
        p = np.asarray(p, dtype=float)
        a = np.asarray(basis(t, p[list(nl_idx)]), dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        return a @ p[list(lin_idx)]

    return ModelDefinition(names, evaluate, split, bounds, basis, label)
