"""Small reference models used by the worked example, tests and the CLI."""
from __future__ import annotations

import numpy as np

from .model import DataSeries, ModelDefinition, ParameterSplit, partly_linear

# worked example: u(t, x) = a t^2 x observed at x = 1
APPENDIX_TIMES = (1.0, 2.0, 3.0)
APPENDIX_DATA = (2.1, 7.8, 18.2)
APPENDIX_NOISE = (0.1, -0.2, 0.2)
APPENDIX_TRUE_A = 2.0


def appendix_model(x: float = 1.0, bounds=((-1e6, 1e6),)) -> ModelDefinition:
    """Single linear parameter ``a`` with basis ``t^2 x``."""
    return partly_linear(
        ["a"], ["a"], lambda t, p2: (np.asarray(t) ** 2 * x)[:, None], bounds, "appendix"
    )


def appendix_data() -> DataSeries:
    return DataSeries.from_arrays(APPENDIX_TIMES, APPENDIX_DATA, unit="1")


def exponential_model(bounds=((-1e3, 1e3), (1e-3, 10.0))) -> ModelDefinition:
    """``u = p1 exp(-p2 t)``; p1 linear, p2 nonlinear."""

    def basis(t, p2):
        return np.exp(-p2[0] * np.asarray(t))[:, None]

    return partly_linear(["p1", "p2"], ["p1"], basis, bounds, "exponential")


def biexponential_model(bounds=None) -> ModelDefinition:
    """``u = p1 exp(-p3 t) + p2 exp(-p4 t)``; two linear, two nonlinear."""
    if bounds is None:
        bounds = [(-1e3, 1e3), (-1e3, 1e3), (1e-3, 10.0), (1e-3, 10.0)]

    def basis(t, p2):
        t = np.asarray(t)
        return np.column_stack([np.exp(-p2[0] * t), np.exp(-p2[1] * t)])

    return partly_linear(["p1", "p2", "p3", "p4"], ["p1", "p2"], basis, bounds, "biexponential")


def rational_model(bounds=((-1e3, 1e3), (0.05, 20.0))) -> ModelDefinition:
    """Purely nonlinear toy ``u = p1 t / (p2 + t)`` (no basis declared)."""

    def evaluate(t, p):
        t = np.asarray(t)
        return p[0] * t / (p[1] + t)

    return ModelDefinition(("p1", "p2"), evaluate, ParameterSplit.all_nonlinear(2), bounds, None, "rational")
