"""Closed-form 1-D coupled consolidation: oedometric relaxation (ORT) and
compression (OCT) tests, plus the partly-linear model versions used for
identification.

Units: lengths in m, time in s, stresses and pore pressure in kPa,
c in m^2/s.

The ORT pore pressure is written as

    u(t, y) = alpha_0(t) + sum_k alpha_k cos(k pi y / H) exp(-k^2 pi^2 T)

with ``alpha_0(t) = -sum_{k>=1} alpha_k exp(-k^2 pi^2 T)`` summed to
convergence (it equals the mean pore pressure and, at t = 0, the exact mean
of the initial condition).  The cosine part is truncated at ``K`` terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .model import ModelDefinition, partly_linear

ORT = "ORT"
OCT = "OCT"
DEFAULT_K = 200
LOG_BASE = 10.0
# exp(-x) below 1e-16 relative is dropped from the mean series
_DECAY_CUTOFF = 37.0
_MEAN_TERMS_CAP = 200_000


def _check_test(test_type: str) -> str:
    tt = test_type.upper()
    if tt not in (ORT, OCT):
        raise ValueError(f"unknown test type {test_type!r}")
    return tt


@dataclass(frozen=True)
class OedometerGeometry:
    H: float
    E_oed: float = 1.0
    v0: Optional[float] = None
    sigma0: Optional[float] = None

    def __post_init__(self):
        if not self.H > 0:
            raise ValueError("H must be positive")
        if not self.E_oed > 0:
            raise ValueError("E_oed must be positive")


@dataclass(frozen=True)
class InitialCondition:
    """Cubic initial pore pressure ``A y^3 + B y^2 + C y``."""

    A: float = 0.0
    B: float = 0.0
    C: float = 0.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return ((self.A * y + self.B) * y + self.C) * y

    def mean(self, H: float) -> float:
        return self.A * H**3 / 4.0 + self.B * H**2 / 3.0 + self.C * H / 2.0


@dataclass(frozen=True)
class RelaxationParams:
    s: float = 0.0
    t1: float = 1.0
    t3: float = 0.0
    sk: Optional[float] = None  # when given, the term is sk * log((t+t1)/(t1+t3))
    log_base: float = LOG_BASE

    def __post_init__(self):
        if not self.t1 > 0:
            raise ValueError("t1 must be positive")
        if self.t3 < 0:
            raise ValueError("t3 must be nonnegative")
        if self.sk is None and math.isclose(self.s * self.b, 1.0, rel_tol=0.0, abs_tol=1e-14):
            raise ValueError("s*b = 1 makes the relaxation term singular")

    @property
    def b(self) -> float:
        return math.log((self.t1 + self.t3) / self.t1, self.log_base)


@dataclass(frozen=True)
class FourierSeries:
    test_type: str
    coefficients: np.ndarray  # alpha_k (ORT) or beta_k (OCT), k = 1..K
    displacement: np.ndarray  # a_k (ORT) or b_k (OCT)
    H: float
    mean: float = 0.0  # exact mean of the initial condition (ORT)
    initial: Optional[InitialCondition] = None  # for coefficients beyond K

    @property
    def K(self) -> int:
        return self.coefficients.size

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float)


@dataclass(frozen=True)
class ConsolidationParams:
    geometry: OedometerGeometry
    initial: InitialCondition
    c: float
    sigma_inf: Optional[float] = None
    relaxation: Optional[RelaxationParams] = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.sigma_inf is None:
            object.__setattr__(self, "sigma_inf", sigma_infinity(self.geometry))

    @property
    def D(self) -> float:
        """Mean initial pore water pressure."""
        return self.initial.mean(self.geometry.H)


def time_factor(c, t, H, test_type: str = ORT):
    """``c t / H^2`` (ORT) or ``c t / (4 H^2)`` (OCT)."""
    if np.any(np.asarray(c) <= 0):
        raise ValueError("c must be positive")
    if H <= 0:
        raise ValueError("H must be positive")
    tt = _check_test(test_type)
    T = np.asarray(c) * np.asarray(t, dtype=float) / H**2
    return T / 4.0 if tt == OCT else T


def sigma_infinity(geom: OedometerGeometry) -> float:
    """Asymptotic total stress ``E_oed v0 / H`` of a relaxation stage."""
    if geom.v0 is None:
        raise ValueError("displacement load v0 is required")
    return geom.E_oed * geom.v0 / geom.H


def _cos_moments(k, H):
    """Integrals of y^n cos(k pi y / H) over [0, H] for n = 1, 2, 3."""
    w = k * np.pi / H
    sgn = np.where(k % 2 == 0, 1.0, -1.0)
    i1 = (sgn - 1.0) / w**2
    i2 = 2.0 * H * sgn / w**2
    i3 = 3.0 * H**2 * sgn / w**2 - 6.0 * (sgn - 1.0) / w**4
    return i1, i2, i3


def _sin_moments(k, H):
    """Integrals of y^n sin((2k-1) pi y / (2H)) over [0, H] for n = 1, 2, 3."""
    lam = (2.0 * k - 1.0) * np.pi / (2.0 * H)
    s = np.where(k % 2 == 1, 1.0, -1.0)  # sin(lam H)
    j1 = s / lam**2
    j2 = 2.0 * H * s / lam**2 - 2.0 / lam**3
    j3 = 3.0 * H**2 * s / lam**2 - 6.0 * s / lam**4
    return j1, j2, j3


def fourier_coefficients(initial: InitialCondition, H: float, test_type: str = ORT, K: int = DEFAULT_K) -> FourierSeries:
    """Series coefficients of the cubic initial pore pressure.

    ORT: cosine coefficients ``alpha_k = (2/H) int u0 cos(k pi y/H) dy`` and
    ``a_k = alpha_k H / (k pi)``.  OCT: quarter-wave sine coefficients
    ``beta_k`` and ``b_k = -beta_k 2H / ((2k-1) pi)``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if H <= 0:
        raise ValueError("H must be positive")
    tt = _check_test(test_type)
    k = np.arange(1, K + 1, dtype=float)
    A, B, C = initial.A, initial.B, initial.C
    if tt == ORT:
        i1, i2, i3 = _cos_moments(k, H)
        alpha = (2.0 / H) * (A * i3 + B * i2 + C * i1)
        a = alpha * H / (k * np.pi)
        return FourierSeries(ORT, alpha, a, H, initial.mean(H), initial)
    j1, j2, j3 = _sin_moments(k, H)
    beta = (2.0 / H) * (A * j3 + B * j2 + C * j1)
    b = -beta * 2.0 * H / ((2.0 * k - 1.0) * np.pi)
    return FourierSeries(OCT, beta, b, H, initial.mean(H), initial)


def _alpha_tail(initial: InitialCondition, H: float, k: np.ndarray) -> np.ndarray:
    i1, i2, i3 = _cos_moments(k, H)
    return (2.0 / H) * (initial.A * i3 + initial.B * i2 + initial.C * i1)


def _mean_series(series: FourierSeries, T: np.ndarray) -> np.ndarray:
    """``-sum_{k>=1} alpha_k exp(-k^2 pi^2 T)`` summed to convergence."""
    T = np.atleast_1d(np.asarray(T, dtype=float))
    out = np.empty_like(T)
    k = series.k
    alpha = series.coefficients
    initial = series.initial
    for j, tj in enumerate(T):
        if tj <= 0.0:
            out[j] = series.mean
            continue
        kmax = int(min(_MEAN_TERMS_CAP, math.ceil(math.sqrt(_DECAY_CUTOFF / (np.pi**2 * tj)))))
        if kmax <= series.K or initial is None:
            out[j] = -np.sum(alpha * np.exp(-(k**2) * np.pi**2 * tj))
        else:
            kk = np.arange(1, kmax + 1, dtype=float)
            out[j] = -np.sum(_alpha_tail(initial, series.H, kk) * np.exp(-(kk**2) * np.pi**2 * tj))
    return out


def pore_pressure(params: ConsolidationParams, series: FourierSeries, t, y, test_type: str = ORT):
    """Pore water pressure ``u(t, y)``; broadcasts over ``t`` and ``y``."""
    tt = _check_test(test_type)
    H = series.H
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > H):
        raise ValueError(f"y must lie in [0, {H}]")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    tb, yb = np.broadcast_arrays(t, y)
    k = series.k
    T = time_factor(params.c, tb, H, tt)[..., None]
    if tt == ORT:
        decay = np.exp(-(k**2) * np.pi**2 * T)
        cos = np.cos(k * np.pi * yb[..., None] / H)
        body = np.sum(series.coefficients * cos * decay, axis=-1)
        alpha0 = _mean_series(series, T[..., 0].reshape(-1)).reshape(tb.shape)
        return body + alpha0
    m = 2.0 * k - 1.0
    decay = np.exp(-(m**2) * np.pi**2 * T)
    sin = np.sin(m * np.pi * yb[..., None] / (2.0 * H))
    return np.sum(series.coefficients * sin * decay, axis=-1)


def mean_pore_pressure(params: ConsolidationParams, series: FourierSeries, t):
    """ORT mean pore pressure over the sample, ``-sum alpha_k exp(-k^2 pi^2 T)``."""
    if series.test_type != ORT:
        raise ValueError("mean pore pressure is defined here for the relaxation test")
    t = np.asarray(t, dtype=float)
    T = time_factor(params.c, t, series.H, ORT)
    return _mean_series(series, T.reshape(-1)).reshape(t.shape)


def _log_shape(t, t1, t3, base=LOG_BASE):
    t = np.asarray(t, dtype=float)
    arg = (t + t1) / (t1 + t3)
    return np.where(t > t3, np.log(np.maximum(arg, 1e-300)) / math.log(base), 0.0)


def relaxation_term(relax: RelaxationParams, sigma0: float, t):
    """Empirical relaxation ``s sigma(0) / (1 - s b) log((t+t1)/(t1+t3))`` for t > t3, else 0."""
    shape = _log_shape(t, relax.t1, relax.t3, relax.log_base)
    if relax.sk is not None:
        return relax.sk * shape
    sb = relax.s * relax.b
    if sb == 1.0:
        raise ValueError("s*b = 1 makes the relaxation term singular")
    return relax.s * sigma0 / (1.0 - sb) * shape


def total_stress(params: ConsolidationParams, series: FourierSeries, t, version: str = "HC"):
    """ORT total stress ``sigma_inf + u_mean(t) - relaxation(t)``."""
    if series.test_type != ORT:
        raise ValueError("total stress is modelled for the relaxation test")
    sigma = params.sigma_inf + mean_pore_pressure(params, series, t)
    if version.upper() == "HC" or params.relaxation is None:
        return sigma
    sigma0 = params.sigma_inf + params.D
    return sigma - relaxation_term(params.relaxation, sigma0, t)


def displacement_field(params: ConsolidationParams, series: FourierSeries, t, y, test_type: str = ORT):
    """Displacement ``v(t, y)``: steady part plus the transient series.

    The transient series carries a ``1/E_oed`` factor so that ``dv/dy`` equals
    the transient strain.
    """
    tt = _check_test(test_type)
    g = params.geometry
    H = series.H
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > H):
        raise ValueError(f"y must lie in [0, {H}]")
    tb, yb = np.broadcast_arrays(np.asarray(t, dtype=float), y)
    k = series.k
    T = time_factor(params.c, tb, H, tt)[..., None]
    if tt == ORT:
        if g.v0 is None:
            raise ValueError("displacement load v0 is required for the relaxation test")
        steady = g.v0 * (1.0 - yb / H)
        decay = np.exp(-(k**2) * np.pi**2 * T)
        trans = np.sum(series.displacement * np.sin(k * np.pi * yb[..., None] / H) * decay, axis=-1)
    else:
        if g.sigma0 is None:
            raise ValueError("stress load sigma0 is required for the compression test")
        steady = g.sigma0 / g.E_oed * (H - yb)
        m = 2.0 * k - 1.0
        decay = np.exp(-(m**2) * np.pi**2 * T)
        trans = np.sum(series.displacement * np.cos(m * np.pi * yb[..., None] / (2.0 * H)) * decay, axis=-1)
    return steady + trans / g.E_oed


def strain_field(params: ConsolidationParams, series: FourierSeries, t, y, test_type: str = ORT):
    """Transient strain: ``-(u_mean - u)/E_oed`` (ORT) or ``u/E_oed`` (OCT)."""
    tt = _check_test(test_type)
    E = params.geometry.E_oed
    u = pore_pressure(params, series, t, y, tt)
    if tt == OCT:
        return u / E
    um = mean_pore_pressure(params, series, np.broadcast_to(np.asarray(t, float), np.shape(u)))
    return -(um - u) / E


# --- model versions -----------------------------------------------------------

VERSIONS = {
    "H": {"linear": ("A", "B", "C", "sigma_inf"), "nonlinear": ("c", "s", "t3", "t1"), "pinned": ()},
    "HCRT": {"linear": ("A", "B", "C", "sigma_inf", "sk"), "nonlinear": ("c", "t3"), "pinned": ("t1",)},
    "HCR": {"linear": ("A", "B", "C", "sigma_inf", "sk"), "nonlinear": ("c",), "pinned": ("t1", "t3")},
    "HC": {"linear": ("A", "B", "C", "sigma_inf"), "nonlinear": ("c",), "pinned": ()},
}

DEFAULT_BOUNDS = {
    "A": (-np.inf, np.inf),
    "B": (-np.inf, np.inf),
    "C": (-np.inf, np.inf),
    "sigma_inf": (-np.inf, np.inf),
    "sk": (-np.inf, np.inf),
    "c": (1e-16, 1e2),
    "s": (-10.0, 10.0),
    "t3": (0.0, 1e9),
    "t1": (1e-9, 1e9),
}


@dataclass(frozen=True)
class ModelVersion:
    tag: str

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in VERSIONS:
            raise ValueError(f"unknown model version {self.tag!r}")
        object.__setattr__(self, "tag", tag)

    @property
    def linear(self) -> tuple:
        return VERSIONS[self.tag]["linear"]

    @property
    def nonlinear(self) -> tuple:
        return VERSIONS[self.tag]["nonlinear"]

    @property
    def pinned(self) -> tuple:
        return VERSIONS[self.tag]["pinned"]

    @property
    def names(self) -> tuple:
        return self.linear + self.nonlinear


def _unit_series(H: float, K: int):
    return tuple(
        fourier_coefficients(InitialCondition(**{n: 1.0}), H, ORT, K) for n in ("A", "B", "C")
    )


def build_model(
    version,
    geometry: OedometerGeometry,
    fixed: Optional[Mapping[str, float]] = None,
    K: int = DEFAULT_K,
    bounds: Optional[Mapping[str, tuple]] = None,
    log_base: float = LOG_BASE,
) -> ModelDefinition:
    """Partly-linear total-stress model ``sigma(t)`` for an ORT stage.

    Basis columns are the unit responses to A, B and C, the constant for
    ``sigma_inf`` and, for HCRT/HCR, ``-log((t+t1)/(t1+t3))`` for ``sk``.  In
    version H the relaxation multiplies ``sigma(0) = sigma_inf + D``, which
    keeps it linear in the initial-condition parameters.
    """
    v = version if isinstance(version, ModelVersion) else ModelVersion(str(version))
    fixed = dict(fixed or {})
    if v.tag == "HCR":
        fixed.setdefault("t3", 0.0)
    missing = [n for n in v.pinned if n not in fixed]
    if missing:
        raise ValueError(f"version {v.tag} needs fixed values for {missing}")
    H = geometry.H
    units = _unit_series(H, K)
    means = np.array([s.mean for s in units])
    names = v.names
    nl_names = v.nonlinear
    b = {**DEFAULT_BOUNDS, **(bounds or {})}
    bnds = [b[n] for n in names]

    def mean_columns(t, c):
        T = time_factor(c, t, H, ORT)
        return np.column_stack([_mean_series(s, T) for s in units])

    def basis(t, p2):
        t = np.asarray(t, dtype=float)
        q = dict(zip(nl_names, p2))
        cols = mean_columns(t, q["c"])
        one = np.ones((t.size, 1))
        if v.tag == "HC":
            return np.hstack([cols, one])
        if v.tag == "H":
            relax = RelaxationParams(s=q["s"], t1=q["t1"], t3=q["t3"], log_base=log_base)
            r = relax.s / (1.0 - relax.s * relax.b) * _log_shape(t, relax.t1, relax.t3, log_base)
            return np.hstack([cols - r[:, None] * means[None, :], (1.0 - r)[:, None]])
        t1 = fixed["t1"]
        t3 = q["t3"] if "t3" in q else fixed["t3"]
        shape = _log_shape(t, t1, t3, log_base)
        return np.hstack([cols, one, -shape[:, None]])

    return partly_linear(names, v.linear, basis, bnds, f"consolidation-{v.tag}")


def params_from_vector(version, geometry: OedometerGeometry, values: Mapping[str, float], fixed=None) -> ConsolidationParams:
    """Physical parameter bundle for a version's named parameter values."""
    v = version if isinstance(version, ModelVersion) else ModelVersion(str(version))
    fixed = dict(fixed or {})
    if v.tag == "HCR":
        fixed.setdefault("t3", 0.0)
    vals = {**fixed, **values}
    relax = None
    if v.tag == "H":
        relax = RelaxationParams(s=vals["s"], t1=vals["t1"], t3=vals["t3"])
    elif v.tag in ("HCRT", "HCR"):
        relax = RelaxationParams(t1=vals["t1"], t3=vals["t3"], sk=vals["sk"])
    return ConsolidationParams(
        geometry, InitialCondition(vals["A"], vals["B"], vals["C"]), vals["c"], vals["sigma_inf"], relax
    )
