"""Derivative-free secant iteration for nonlinear least squares.

Implements the simultaneous secant step on n+1 trial points, the modified
variant that adds a second trial point per iteration and rebuilds an
axis-aligned simplex around the new point, and a driver that can eliminate
linearly entering parameters before every residual evaluation.

Conventions: the base trial ``p_0`` is always the trial with the smallest
merit; ``q`` solves ``A_r q = -h(p_0)`` in the minimum-norm sense and the new
point is ``p_0 + A_p q``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .linalg import DEFAULT_RANK_TOL, lstsq_min_norm
from .model import (
    DataSeries,
    ModelDefinition,
    ModelEvaluationError,
    ParameterVector,
    eliminate_linear,
    response,
)

log = logging.getLogger(__name__)

ResidualFn = Callable[[np.ndarray], np.ndarray]


class DegenerateSimplexError(RuntimeError):
    def __init__(self, message, singular_values=None, null_direction=None):
        super().__init__(message)
        self.singular_values = singular_values
        self.null_direction = null_direction


class BoundViolationError(RuntimeError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SolverFailure(RuntimeError):
    """Raised when the iteration cannot continue; carries the best point found."""

    def __init__(self, message, best=None, best_merit=None, trace=None):
        super().__init__(message)
        self.best = best
        self.best_merit = best_merit
        self.trace = trace or []


@dataclass(frozen=True)
class SecantSimplex:
    points: np.ndarray  # (n+1, n)
    residuals: np.ndarray  # (n+1, m)
    merits: np.ndarray  # (n+1,)

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        r = np.array(self.residuals, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] + 1:
            raise ValueError(f"need n+1 points of dimension n, got shape {p.shape}")
        if r.ndim != 2 or r.shape[0] != p.shape[0]:
            raise ValueError("one residual vector per trial point is required")
        if r.shape[1] < p.shape[1]:
            raise ValueError("fewer residuals than parameters")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
            raise ValueError("simplex contains non-finite entries")
        merits = np.einsum("ij,ij->i", r, r)
        order = np.argsort(merits, kind="stable")
        p, r, merits = p[order], r[order], merits[order]
        for a in (p, r, merits):
            a.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "merits", merits)

    @classmethod
    def from_points(cls, points, residual_fn: ResidualFn) -> "SecantSimplex":
        points = np.asarray(points, dtype=float)
        res = np.array([np.asarray(residual_fn(x), dtype=float).reshape(-1) for x in points])
        return cls(points, res, np.zeros(len(points)))

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def base(self) -> np.ndarray:
        return self.points[0]

    @property
    def diameter(self) -> float:
        d = self.points[:, None, :] - self.points[None, :, :]
        return float(np.max(np.linalg.norm(d, axis=-1)))

    def replace(self, k: int, point, res) -> "SecantSimplex":
        p = self.points.copy()
        r = self.residuals.copy()
        p[k] = point
        r[k] = res
        return SecantSimplex(p, r, np.zeros(len(p)))


def initial_simplex(x0, residual_fn: ResidualFn, rel_step: float = 0.05, abs_step: float = 1e-3) -> SecantSimplex:
    """Axis-aligned starting simplex around ``x0``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    pts = [x0]
    for i in range(x0.size):
        x = x0.copy()
        x[i] += max(rel_step * abs(x0[i]), abs_step)
        pts.append(x)
    return SecantSimplex.from_points(np.array(pts), residual_fn)


@dataclass
class StepReport:
    iteration: int
    base: np.ndarray
    p_new: np.ndarray
    q: np.ndarray
    merit_before: float
    merit_after: float = float("nan")
    action: str = ""
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    p_second: Optional[np.ndarray] = None
    q2: Optional[np.ndarray] = None
    flags: List[str] = field(default_factory=list)

    @property
    def step_norm(self) -> float:
        return float(np.linalg.norm(self.p_new - self.base))

    @property
    def q_norm(self) -> float:
        return float(np.linalg.norm(self.q))


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    merit_tol: float = 1e-24
    stagnation_tol: float = 1e-12
    patience: int = 8
    step_tol: float = 1e-13
    rank_tol: float = DEFAULT_RANK_TOL
    bounds_policy: str = "project"  # or "reject"
    variant: str = "wolfe"  # or "modified"
    reject_worse: bool = False
    max_repairs: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        for name in ("merit_tol", "stagnation_tol", "step_tol", "rank_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.bounds_policy not in ("project", "reject"):
            raise ValueError(f"unknown bounds policy {self.bounds_policy!r}")
        if self.variant not in ("wolfe", "modified"):
            raise ValueError(f"unknown variant {self.variant!r}")


def _apply_bounds(x, bounds, policy, flags):
    if bounds is None:
        return x
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.all((x >= lo) & (x <= hi)):
        return x
    if policy == "reject":
        raise BoundViolationError("trial point outside bounds", x)
    flags.append("projected")
    return np.clip(x, lo, hi)


def wolfe_step(
    simplex: SecantSimplex,
    rank_tol: float = DEFAULT_RANK_TOL,
    bounds=None,
    bounds_policy: str = "project",
    iteration: int = 0,
):
    """One simultaneous secant step from ``simplex``.

    Returns
    -------
    p_new : ndarray
    report : StepReport
    """
    p0 = simplex.points[0]
    h0 = simplex.residuals[0]
    a_p = (p0[None, :] - simplex.points[1:]).T  # (n, n)
    a_r = (h0[None, :] - simplex.residuals[1:]).T  # (m, n)
    n = simplex.n
    if np.any(np.all(a_p == 0.0, axis=0)):
        raise DegenerateSimplexError("repeated trial point in simplex")
    sol = lstsq_min_norm(a_r, -h0, rank_tol)
    if sol.effective_rank < n:
        _, s, vt = np.linalg.svd(a_r, full_matrices=False)
        raise DegenerateSimplexError(
            f"secant residual matrix has rank {sol.effective_rank} < {n}",
            singular_values=s,
            null_direction=a_p @ vt[-1],
        )
    q = sol.solution
    flags: List[str] = []
    raw = p0 + a_p @ q
    p_new = _apply_bounds(raw, None if bounds is None else np.asarray(bounds, float), bounds_policy, flags)
    report = StepReport(
        iteration=iteration,
        base=p0.copy(),
        p_new=p_new,
        q=q,
        merit_before=float(simplex.merits[0]),
        singular_values=sol.singular_values,
        flags=flags,
    )
    return p_new, report


def modified_step(
    simplex: SecantSimplex,
    p_new,
    h_new,
    residual_fn: Optional[ResidualFn] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    bounds=None,
    bounds_policy: str = "project",
    iteration: int = 0,
):
    """Second trial point and the axis simplex around ``p_new``.

    ``q2`` is the minimum-norm solution of ``T_r A_r q2 = h(p_0)`` with
    ``T_r = diag(h(p_new) / h(p_0))``; the parameter row then gives ``p_second``
    componentwise.  When ``residual_fn`` is None the new simplex is not built.

    Returns
    -------
    p_second : ndarray
    new_simplex : SecantSimplex or None
    report : StepReport
    """
    p0 = simplex.points[0]
    h0 = simplex.residuals[0]
    p_new = np.asarray(p_new, dtype=float)
    h_new = np.asarray(h_new, dtype=float).reshape(-1)
    a_p = (p0[None, :] - simplex.points[1:]).T
    a_r = (h0[None, :] - simplex.residuals[1:]).T
    flags: List[str] = []
    report = StepReport(
        iteration=iteration,
        base=p0.copy(),
        p_new=p_new.copy(),
        q=np.full(simplex.n, np.nan),
        merit_before=float(simplex.merits[0]),
        merit_after=float(h_new @ h_new),
        flags=flags,
    )
    if np.any(h0 == 0.0):
        flags.append("fallback-wolfe")
        report.action = "fallback-wolfe"
        return p_new.copy(), None, report

    t_r = h_new / h0
    sol = lstsq_min_norm(t_r[:, None] * a_r, h0, rank_tol) if np.any(t_r) else None
    q2 = sol.solution if sol is not None else np.zeros(simplex.n)
    w = a_p @ q2
    disp = p0 - p_new
    p_second = p_new.copy()
    nz = w != 0.0
    if not np.all(nz):
        flags.append("zero-displacement")
    t_p = np.zeros_like(w)
    t_p[nz] = disp[nz] / w[nz]
    p_second[nz] = p_new[nz] - t_p[nz] * disp[nz]
    p_second = _apply_bounds(p_second, None if bounds is None else np.asarray(bounds, float), bounds_policy, flags)
    report.q2 = q2
    report.p_second = p_second
    report.singular_values = sol.singular_values if sol is not None else np.zeros(simplex.n)
    report.action = "modified"

    if residual_fn is None:
        return p_second, None, report

    step = p_second - p_new
    scale = np.maximum(np.abs(p_new), 1.0)
    tiny = np.abs(step) <= 1e-14 * scale
    if np.any(tiny):
        # axis points would coincide with p_new: reuse the last step component
        flags.append("axis-fallback")
        alt = np.where(disp != 0.0, disp, 1e-3 * scale)
        step = np.where(tiny, alt, step)
    pts = [p_new]
    for i in range(simplex.n):
        x = p_new.copy()
        x[i] += step[i]
        if bounds is not None:
            b = np.asarray(bounds, float)
            if not b[i, 0] <= x[i] <= b[i, 1]:
                x[i] = p_new[i] - step[i]
                x[i] = np.clip(x[i], b[i, 0], b[i, 1])
        pts.append(x)
    res = [h_new] + [np.asarray(residual_fn(x), dtype=float).reshape(-1) for x in pts[1:]]
    return p_second, SecantSimplex(np.array(pts), np.array(res), np.zeros(len(pts))), report


@dataclass
class SolveResult:
    solution: object  # ParameterVector for model-level drivers, ndarray otherwise
    merit: float
    trace: List[StepReport]
    evaluations: int
    converged: bool
    reason: str
    simplex: Optional[SecantSimplex] = None

    def __iter__(self):
        return iter((self.solution, self.trace))


class _Counted:
    def __init__(self, fn: ResidualFn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        h = np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float).reshape(-1)
        if not np.all(np.isfinite(h)):
            raise ModelEvaluationError("non-finite residual")
        return h


def solve(
    residual_fn: ResidualFn,
    initial: SecantSimplex,
    opts: SolverOptions = SolverOptions(),
    bounds=None,
) -> SolveResult:
    """Run the secant iteration on an arbitrary residual map."""
    fn = _Counted(residual_fn)
    rng = np.random.default_rng(opts.seed)
    bounds = None if bounds is None else np.asarray(bounds, dtype=float)
    simplex = initial
    best_x = simplex.points[0].copy()
    best_f = float(simplex.merits[0])
    trace: List[StepReport] = []
    repairs = 0
    stalled = 0
    reason = "max-iterations"
    converged = False

    def record_best(x, f):
        nonlocal best_x, best_f
        if f < best_f:
            best_x, best_f = np.array(x, dtype=float), float(f)

    for it in range(opts.max_iterations):
        if best_f <= opts.merit_tol:
            reason, converged = "merit", True
            break
        prev_best = best_f
        try:
            p_new, rep = wolfe_step(simplex, opts.rank_tol, bounds, opts.bounds_policy, it)
        except DegenerateSimplexError as exc:
            repairs += 1
            if repairs > opts.max_repairs:
                raise SolverFailure(f"degenerate simplex after {opts.max_repairs} repairs", best_x, best_f, trace)
            simplex = _repair(simplex, exc, fn, opts, rng, bounds)
            trace.append(StepReport(it, simplex.base.copy(), simplex.base.copy(), np.zeros(simplex.n),
                                    best_f, best_f, "repair", exc.singular_values if exc.singular_values is not None else np.empty(0)))
            continue
        except BoundViolationError:
            simplex = _shrink(simplex, fn)
            trace.append(StepReport(it, simplex.base.copy(), simplex.base.copy(), np.zeros(simplex.n),
                                    best_f, best_f, "shrink-bounds"))
            continue

        if rep.step_norm <= opts.step_tol * (1.0 + float(np.linalg.norm(rep.base))):
            rep.merit_after = best_f
            rep.action = "converged-step"
            trace.append(rep)
            reason, converged = "step", True
            break
        try:
            h_new = fn(p_new)
        except ModelEvaluationError:
            simplex = _shrink(simplex, fn)
            rep.action = "shrink-failed-evaluation"
            trace.append(rep)
            continue
        f_new = float(h_new @ h_new)
        rep.merit_after = f_new
        record_best(p_new, f_new)

        if opts.variant == "modified":
            try:
                p_second, new_simplex, rep2 = modified_step(
                    simplex, p_new, h_new, fn, opts.rank_tol, bounds, opts.bounds_policy, it
                )
            except (BoundViolationError, ModelEvaluationError):
                new_simplex, rep2 = None, None
            if new_simplex is not None:
                rep.p_second, rep.q2 = rep2.p_second, rep2.q2
                rep.flags.extend(rep2.flags)
                for x, r in zip(new_simplex.points, new_simplex.residuals):
                    record_best(x, float(r @ r))
                if opts.reject_worse and new_simplex.merits[0] > simplex.merits[0]:
                    rep.action = "reject-worse"
                    simplex = _plain_update(simplex, p_new, h_new, opts, rep, fn)
                else:
                    rep.action = "modified"
                    simplex = new_simplex
            else:
                rep.flags.append("fallback-wolfe")
                simplex = _plain_update(simplex, p_new, h_new, opts, rep, fn)
        else:
            simplex = _plain_update(simplex, p_new, h_new, opts, rep, fn)
        trace.append(rep)

        if best_f <= opts.merit_tol:
            reason, converged = "merit", True
            break
        if prev_best - best_f <= opts.stagnation_tol * max(prev_best, np.finfo(float).tiny):
            stalled += 1
            if stalled >= opts.patience:
                reason, converged = "stagnation", True
                break
        else:
            stalled = 0

    return SolveResult(best_x, best_f, trace, fn.calls, converged, reason, simplex)


def _plain_update(simplex: SecantSimplex, p_new, h_new, opts: SolverOptions, rep: StepReport, fn=None) -> SecantSimplex:
    """Drop the trial with the largest residual norm in favour of ``p_new``.

    The new point always enters; if it is the worst of all, the worst old
    trial is dropped instead of the new one (otherwise the iteration would
    repeat the same step).  With ``reject_worse`` such a point is refused and
    the worst trial is pulled halfway towards the base.
    """
    f_new = float(h_new @ h_new)
    worst = simplex.n  # simplex is sorted by merit
    if f_new >= simplex.merits[worst]:
        if opts.reject_worse and fn is not None:
            rep.action = rep.action or "reject-worse"
            x = simplex.base + 0.5 * (simplex.points[worst] - simplex.base)
            return simplex.replace(worst, x, fn(x))
        rep.flags.append("new-point-worst")
    rep.action = rep.action or "replace-worst"
    return simplex.replace(worst, p_new, h_new)


def _shrink(simplex: SecantSimplex, fn) -> SecantSimplex:
    base = simplex.base
    pts = [base] + [base + 0.5 * (x - base) for x in simplex.points[1:]]
    res = [simplex.residuals[0]] + [fn(x) for x in pts[1:]]
    return SecantSimplex(np.array(pts), np.array(res), np.zeros(len(pts)))


def _repair(simplex: SecantSimplex, exc: DegenerateSimplexError, fn, opts: SolverOptions, rng, bounds) -> SecantSimplex:
    base = simplex.base
    d = exc.null_direction
    if d is None or not np.any(d):
        d = rng.standard_normal(simplex.n)
    d = d / np.linalg.norm(d)
    scale = max(10.0 * opts.merit_tol, 0.1 * simplex.diameter, 1e-6 * (1.0 + float(np.linalg.norm(base))))
    x = base + rng.choice([-1.0, 1.0]) * scale * d
    if bounds is not None:
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
    log.debug("repairing degenerate simplex with step %.3g", scale)
    return simplex.replace(simplex.n, x, fn(x))


def iterate(
    model: ModelDefinition,
    data: DataSeries,
    initial,
    opts: SolverOptions = SolverOptions(),
) -> SolveResult:
    """Secant iteration over the full parameter vector of ``model``.

    ``initial`` is a SecantSimplex or an (M+1, M) array of trial points.
    """

    def residual_fn(x):
        return data.values - response(model, model.params(x, check=False), data.schedule)

    if not isinstance(initial, SecantSimplex):
        initial = SecantSimplex.from_points(initial, residual_fn)
    if opts.max_iterations == 0:
        x = initial.points[0]
        return SolveResult(model.params(x, check=False), float(initial.merits[0]), [], 0, False, "max-iterations", initial)
    res = solve(residual_fn, initial, opts, model.bounds)
    res.solution = model.params(res.solution, check=False)
    return res


def iterate_with_elimination(
    model: ModelDefinition,
    data: DataSeries,
    initial,
    opts: SolverOptions = SolverOptions(),
) -> SolveResult:
    """Secant iteration over the nonlinear parameters only.

    Every residual evaluation first eliminates the linear parameters at the
    trial's nonlinear coordinates.  ``initial`` lives in the nonlinear subspace.
    """
    nl = list(model.split.nonlinear_indices)
    if not nl:
        el = eliminate_linear(model, [], data, opts.rank_tol)
        return SolveResult(el.parameters, el.section_value, [], 1, True, "linear")

    def residual_fn(p2):
        return eliminate_linear(model, p2, data, opts.rank_tol).residual

    bounds = model.bounds[nl]
    if not isinstance(initial, SecantSimplex):
        initial = SecantSimplex.from_points(initial, residual_fn)
    if opts.max_iterations == 0:
        res = SolveResult(initial.points[0], float(initial.merits[0]), [], 0, False, "max-iterations", initial)
    else:
        res = solve(residual_fn, initial, opts, bounds)
    el = eliminate_linear(model, res.solution, data, opts.rank_tol)
    res.solution = el.parameters
    return res


def classical_secant(h0: float, h1: float, p0: float, p1: float) -> float:
    """Scalar secant update ``p1 - h1 (p1 - p0) / (h1 - h0)``."""
    return p1 - h1 * (p1 - p0) / (h1 - h0)
