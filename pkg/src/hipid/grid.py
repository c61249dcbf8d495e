"""Global coordinate-grid scan with linear elimination and clever sections.

The grid spans the nonlinearly entering parameters (optionally also some
linear ones, which are then pinned instead of eliminated).  Every node stores
the conditional minimum over the remaining linear parameters; one-dimensional
clever sections are obtained by projecting the stored merit values along the
other axes.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .linalg import DEFAULT_RANK_TOL
from .model import (
    DataSeries,
    ModelDefinition,
    ModelEvaluationError,
    OutOfBoundsError,
    ParameterVector,
    eliminate_linear,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridAxis:
    parameter: object  # name or global index
    lo: float = 0.0
    hi: float = 0.0
    num: int = 1
    spacing: str = "linear"
    explicit: Optional[tuple] = None

    def __post_init__(self):
        if self.explicit is not None:
            vals = tuple(float(v) for v in self.explicit)
            if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("explicit axis values must be non-empty and increasing")
            object.__setattr__(self, "explicit", vals)
            return
        if self.lo > self.hi:
            raise ValueError(f"axis {self.parameter!r}: lo > hi")
        if self.num < 1:
            raise ValueError(f"axis {self.parameter!r}: needs at least one point")
        if self.spacing not in ("linear", "log"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "log" and self.lo <= 0:
            raise ValueError("logarithmic axis needs a positive range")
        if self.num > 1 and self.lo == self.hi:
            raise ValueError("repeated axis values")

    def values(self) -> np.ndarray:
        if self.explicit is not None:
            return np.array(self.explicit)
        if self.num == 1:
            return np.array([float(self.lo)])
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.num)
        return np.linspace(self.lo, self.hi, self.num)

    @property
    def size(self) -> int:
        return len(self.explicit) if self.explicit is not None else int(self.num)


@dataclass(frozen=True)
class GridSpec:
    axes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.axes else 1

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridSpec":
        axes = []
        for ax in d.get("axes", []):
            ax = dict(ax)
            explicit = ax.pop("values", None)
            axes.append(GridAxis(explicit=tuple(explicit) if explicit is not None else None, **ax))
        return cls(tuple(axes))


@dataclass
class GridScan:
    model: ModelDefinition
    grid: GridSpec
    axis_params: tuple
    axis_values: tuple
    merit: np.ndarray  # grid.shape; +inf at failed nodes
    p1_star: np.ndarray  # grid.shape + (L,)
    params: np.ndarray  # grid.shape + (M,)
    ranks: np.ndarray
    failed: np.ndarray
    evaluations: int
    source: str = "real-life"
    messages: dict = field(default_factory=dict)

    @property
    def global_min_node(self) -> int:
        flat = self.merit.reshape(-1)
        if not np.any(np.isfinite(flat)):
            raise RuntimeError("every grid node failed")
        # argmin returns the first minimum in C order: lowest lexicographic node
        return int(np.argmin(flat))

    def node_index(self, flat: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(flat, self.merit.shape)) if self.merit.ndim else ()

    def axis_of(self, parameter) -> int:
        gi = self.model.index(parameter)
        try:
            return self.axis_params.index(gi)
        except ValueError:
            raise IndexError(f"parameter {parameter!r} is not a grid axis") from None


@dataclass(frozen=True)
class CleverSection:
    parameter_index: int
    name: str
    x: np.ndarray
    values: np.ndarray
    complements: np.ndarray  # (S, M) full vectors at the conditional minimizer
    argmin_nodes: tuple
    basin_jumps: np.ndarray  # (S-1,) adjacent samples with a jump in the complement
    source: str
    model: Optional[ModelDefinition] = None

    def __len__(self) -> int:
        return self.x.size

    @property
    def minimizer(self) -> int:
        return int(np.argmin(self.values))


def _resolve_axes(model: ModelDefinition, grid: GridSpec, fixed: Mapping[int, float]):
    idx = tuple(model.index(a.parameter) for a in grid.axes)
    if len(set(idx)) != len(idx):
        raise ValueError("a parameter appears on more than one grid axis")
    covered = set(idx) | set(fixed)
    missing = [model.names[i] for i in model.split.nonlinear_indices if i not in covered]
    if missing:
        raise ValueError(f"nonlinear parameters without a grid axis or fixed value: {missing}")
    for i, ax in zip(idx, grid.axes):
        v = ax.values()
        lo, hi = model.bounds[i]
        if v[0] < lo or v[-1] > hi:
            raise OutOfBoundsError(f"grid axis {model.names[i]!r} exceeds bounds [{lo}, {hi}]")
    return idx


def scan(
    model: ModelDefinition,
    data: DataSeries,
    grid: GridSpec,
    rank_tol: float = DEFAULT_RANK_TOL,
    fixed: Optional[Mapping] = None,
    workers: int = 1,
    source: str = "real-life",
) -> GridScan:
    """Evaluate the conditional minimum at every node of ``grid``.

    Linear parameters not on an axis are eliminated at each node.  Nodes whose
    evaluation fails keep ``+inf`` and a failure flag.
    """
    fixed = {model.index(k): float(v) for k, v in (fixed or {}).items()}
    idx = _resolve_axes(model, grid, fixed)
    axis_values = tuple(a.values() for a in grid.axes)
    shape = grid.shape
    n_nodes = grid.node_count
    lin = list(model.split.linear_indices)
    nl = list(model.split.nonlinear_indices)
    m = model.parameter_count

    log.debug("scanning %d nodes over %s", n_nodes, [model.names[i] for i in idx])

    def node(multi):
        coords = {gi: axis_values[a][k] for a, (gi, k) in enumerate(zip(idx, multi))}
        coords_all = {**fixed, **coords}
        p2 = np.array([coords_all[i] for i in nl])
        pinned = {i: coords_all[i] for i in lin if i in coords_all}
        try:
            el = eliminate_linear(model, p2, data, rank_tol, fixed_linear=pinned)
        except (ModelEvaluationError, OutOfBoundsError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            return None, str(exc)
        return el, None

    nodes = list(itertools.product(*(range(s) for s in shape)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(node, nodes))
    else:
        results = [node(multi) for multi in nodes]

    merit_arr = np.full(n_nodes, np.inf)
    p1 = np.full((n_nodes, len(lin)), np.nan)
    params = np.full((n_nodes, m), np.nan)
    ranks = np.zeros(n_nodes, dtype=int)
    failed = np.zeros(n_nodes, dtype=bool)
    messages = {}
    for k, (multi, (el, err)) in enumerate(zip(nodes, results)):
        if el is None or not np.isfinite(el.section_value):
            failed[k] = True
            messages[multi] = err or "non-finite merit"
            for a, gi in enumerate(idx):
                params[k, gi] = axis_values[a][multi[a]]
            continue
        merit_arr[k] = el.section_value
        p1[k] = el.p1_star
        params[k] = el.parameters.values
        ranks[k] = el.effective_rank
    if messages:
        log.warning("%d of %d grid nodes failed", len(messages), n_nodes)

    return GridScan(
        model=model,
        grid=grid,
        axis_params=idx,
        axis_values=axis_values,
        merit=merit_arr.reshape(shape),
        p1_star=p1.reshape(shape + (len(lin),)),
        params=params.reshape(shape + (m,)),
        ranks=ranks.reshape(shape),
        failed=failed.reshape(shape),
        evaluations=len(nodes),
        source=source,
        messages=messages,
    )


def project(scan_: GridScan, keep: Sequence[int]) -> np.ndarray:
    """Minimum of the stored merit over every axis not in ``keep`` (axis numbers)."""
    drop = tuple(a for a in range(scan_.merit.ndim) if a not in keep)
    return np.min(scan_.merit, axis=drop) if drop else scan_.merit.copy()


def clever_section(scan_: GridScan, parameter) -> CleverSection:
    """One-dimensional clever section along the axis of ``parameter``."""
    ax = scan_.axis_of(parameter)
    gi = scan_.axis_params[ax]
    f = np.moveaxis(scan_.merit, ax, 0)
    prm = np.moveaxis(scan_.params, ax, 0)
    rest_shape = f.shape[1:]
    flat = f.reshape(f.shape[0], -1)
    arg = np.argmin(flat, axis=1)
    values = flat[np.arange(flat.shape[0]), arg]
    comps = prm.reshape(f.shape[0], -1, prm.shape[-1])[np.arange(flat.shape[0]), arg]
    argmin_nodes = tuple(
        tuple(int(i) for i in np.unravel_index(int(a), rest_shape)) if rest_shape else ()
        for a in arg
    )
    jumps = np.zeros(max(len(argmin_nodes) - 1, 0), dtype=bool)
    for k in range(jumps.size):
        a, b = argmin_nodes[k], argmin_nodes[k + 1]
        jumps[k] = any(abs(i - j) > 1 for i, j in zip(a, b))
    return CleverSection(
        parameter_index=gi,
        name=scan_.model.names[gi],
        x=np.array(scan_.axis_values[ax], dtype=float),
        values=np.asarray(values, dtype=float),
        complements=np.asarray(comps, dtype=float),
        argmin_nodes=argmin_nodes,
        basin_jumps=jumps,
        source=scan_.source,
        model=scan_.model,
    )


def global_min(scan_: GridScan) -> tuple:
    """Best node as ``(ParameterVector, merit)``."""
    k = scan_.global_min_node
    multi = np.unravel_index(k, scan_.merit.shape) if scan_.merit.ndim else ()
    values = scan_.params[multi] if scan_.merit.ndim else scan_.params.reshape(-1)
    p = scan_.model.params(values, check=False)
    return p, float(scan_.merit.reshape(-1)[k])


def resolve_degenerate(section: CleverSection, x_known: float) -> tuple:
    """Pick the section sample nearest ``x_known`` and return its full vector.

    Returns ``(ParameterVector, gap)`` where ``gap = |x_known - x_sample|``.
    """
    x = section.x
    if not x[0] <= x_known <= x[-1]:
        raise ValueError(f"{x_known!r} outside the sampled range [{x[0]}, {x[-1]}]")
    k = int(np.argmin(np.abs(x - x_known)))
    vals = section.complements[k]
    if section.model is not None:
        p = section.model.params(vals, check=False)
    else:
        p = vals.copy()
    return p, float(abs(x_known - x[k]))


def nesting_check(scan_: GridScan, inner: Sequence, outer: Sequence) -> bool:
    """Compare the direct projection onto ``inner`` with the projection via ``outer``."""
    inner_ax = sorted(scan_.axis_of(p) for p in inner)
    outer_ax = sorted(scan_.axis_of(p) for p in outer)
    if not set(inner_ax) <= set(outer_ax):
        raise ValueError("inner axes must be a subset of the outer axes")
    direct = project(scan_, inner_ax)
    via = project(scan_, outer_ax)
    # axes of `via` are outer_ax in order; drop the ones not in inner
    drop = tuple(k for k, a in enumerate(outer_ax) if a not in inner_ax)
    via = np.min(via, axis=drop) if drop else via
    return bool(np.array_equal(direct, via))


def propose_step(half_width: float, divisor: float = 5.0) -> float:
    """Grid step suggested from a pilot error-domain half-width."""
    if half_width <= 0:
        raise ValueError("half-width must be positive")
    return half_width / divisor
