"""Synthetic fixtures shared by the acceptance and workflow tests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from hipid import consolidation as C
from hipid import grid as G
from hipid import reliability as R
from hipid import secant as S
from hipid import toys
from hipid.model import DataSeries, response

# ---------------------------------------------------------------- multistage

GEOMETRY = C.OedometerGeometry(H=0.01, E_oed=5000.0)
C_GRID = np.geomspace(1e-9, 1e-7, 54)
C_TRUE = float(C_GRID[30])
# convex initial pore pressure (B > 0), held fixed for the long-stage scan
LONG_IC = {"A": 0.0, "B": 2.0e5, "C": 3000.0}
LONG_SIGMA_INF = 400.0
SHORT_STAGES = (
    {"A": 0.0, "B": 1.0e5, "C": 2000.0, "sigma_inf": 100.0},
    {"A": 0.0, "B": 1.0e5, "C": 4000.0, "sigma_inf": 200.0},
    {"A": 0.0, "B": 1.0e5, "C": 6000.0, "sigma_inf": 300.0},
)
LONG_TIMES = np.geomspace(4.0, 4.0e4, 60)
SHORT_TIMES = np.geomspace(0.1, 150.0, 40)


@dataclass
class StageFit:
    data: DataSeries
    section: G.CleverSection
    truth: dict


def hc_model():
    return C.build_model("HC", GEOMETRY)


def c_axis() -> G.GridSpec:
    return G.GridSpec((G.GridAxis("c", explicit=tuple(C_GRID)),))


def long_stage(model=None) -> StageFit:
    model = model or hc_model()
    truth = {**LONG_IC, "sigma_inf": LONG_SIGMA_INF, "c": C_TRUE}
    data = DataSeries.from_arrays(LONG_TIMES, response(model, model.params(truth), LONG_TIMES))
    sc = G.scan(model, data, c_axis(), fixed=LONG_IC)
    return StageFit(data, G.clever_section(sc, "c"), truth)


def short_stages(model=None) -> List[StageFit]:
    model = model or hc_model()
    out = []
    for st in SHORT_STAGES:
        truth = {**st, "c": C_TRUE}
        data = DataSeries.from_arrays(SHORT_TIMES, response(model, model.params(truth), SHORT_TIMES))
        out.append(StageFit(data, G.clever_section(G.scan(model, data, c_axis()), "c"), truth))
    return out


def local_minima(values) -> np.ndarray:
    """Interior sample indices where the finite difference changes sign - to +."""
    d = np.diff(np.asarray(values, dtype=float))
    return np.flatnonzero((d[:-1] < 0) & (d[1:] > 0)) + 1


# ---------------------------------------------------------------- structured noise

NOISE_BOUNDS = ((-1e3, 1e3), (1e-9, 10.0))
NOISE_TIMES = np.geomspace(1e-2, 1e10, 241)
NOISE_TRUTH = (1.0, 1.0)
NOISE_AMPLITUDE = 0.4
NOISE_AXIS = G.GridSpec((G.GridAxis("p2", 1e-9, 10.0, 1001, "log"),))


def noise_model():
    return toys.exponential_model(bounds=NOISE_BOUNDS)


def spurious_noise(rng: np.random.Generator) -> np.ndarray:
    """Decaying components one decade apart with alternating signs.

    Each positive component opens a basin of the eliminated section away from
    the true rate; the negative ones separate neighbouring basins.
    """
    ex = -np.arange(1.0, 9.0)
    rates = 10.0 ** (ex + rng.uniform(-0.1, 0.1, ex.size))
    amp = NOISE_AMPLITUDE * rng.uniform(0.8, 1.0, ex.size) * np.where(np.arange(ex.size) % 2 == 0, -1.0, 1.0)
    t = NOISE_TIMES
    return (amp[:, None] * np.exp(-rates[:, None] * t)).sum(0) + 0.005 * rng.standard_normal(t.size)


@dataclass
class NoiseRun:
    seed: int
    spurious: int
    interval: R.ErrorInterval
    start: float
    final: float
    reached: bool
    reason: str


def noise_run(seed: int, min_spurious: int = 3, opts: S.SolverOptions = S.SolverOptions()):
    """One seeded realisation; returns None when it has too few spurious minima."""
    m = noise_model()
    rng = np.random.default_rng(seed)
    clean = response(m, m.params(list(NOISE_TRUTH)), NOISE_TIMES)
    data = DataSeries.from_arrays(NOISE_TIMES, clean + spurious_noise(rng))
    real = G.scan(m, data, NOISE_AXIS)
    sec = G.clever_section(real, "p2")
    mins = local_minima(sec.values)
    spurious = int(np.sum(mins != sec.minimizer))
    if spurious < min_spurious:
        return None
    p_min, f_min = G.global_min(real)
    fm = R.FollowerModel.build(m, p_min, data.schedule)
    follower = G.clever_section(G.scan(m, fm.simulated_data, NOISE_AXIS, source="follower"), "p2")
    ei = R.error_domain_1d(follower, f_min)
    lo = ei.intervals[ei.primary][0]
    # start below the error domain, so spurious basins lie in between
    x0 = 10.0 ** rng.uniform(np.log10(NOISE_BOUNDS[1][0]) + 0.1, np.log10(lo / 1.5))
    res = S.iterate_with_elimination(m, data, np.array([[x0], [1.1 * x0]]), opts)
    x = float(res.solution.values[1])
    return NoiseRun(seed, spurious, ei, float(x0), x, ei.contains(x), res.reason)


def noise_runs(count: int = 10, max_seed: int = 400, **kw) -> List[NoiseRun]:
    runs = []
    for seed in range(max_seed):
        r = noise_run(seed, **kw)
        if r is not None:
            runs.append(r)
            if len(runs) == count:
                break
    return runs
