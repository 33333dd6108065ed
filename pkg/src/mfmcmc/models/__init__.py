"""Experiment models exposing fidelity sequences."""

from __future__ import annotations

import numpy as np

from .base import ConstantSequence, Model
from .gp import GPRegressionModel, generate_gp_data, gp_loglik
from .heat import HeatPDEProblem, analytic_solution, heat_objective, heat_solve
from .lgcp import LGCPModel, lgcp_loglik
from .lotka_volterra import LotkaVolterraModel, generate_lv_data, lv_loglik
from .toy import ToyConjugateModel, generate_toy_data, toy_loglik, toy_posterior_closed_form


def synth_generate(kind: str, params: dict | None, rng: np.random.Generator) -> dict:
    """Synthetic dataset for ``kind`` in ``{"toy", "lv", "gp"}`` as a dict of arrays."""
    params = dict(params or {})
    if kind == "toy":
        data, theta0 = generate_toy_data(rng, **params)
        return {"data": data, "theta0": theta0}
    if kind == "lv":
        t_obs = np.asarray(params.pop("t_obs", np.linspace(0.015, 3.0, 200)), dtype=float)
        return {"t_obs": t_obs, "y": generate_lv_data(rng, t_obs, **params)}
    if kind == "gp":
        X, y = generate_gp_data(rng, **params)
        return {"X": X, "y": y}
    raise ValueError(f"no synthetic generator for {kind!r}")


__all__ = [
    "ConstantSequence", "GPRegressionModel", "HeatPDEProblem", "LGCPModel", "LotkaVolterraModel",
    "Model", "ToyConjugateModel", "analytic_solution", "generate_gp_data", "generate_lv_data",
    "generate_toy_data", "gp_loglik", "heat_objective", "heat_solve", "lgcp_loglik", "lv_loglik",
    "synth_generate", "toy_loglik", "toy_posterior_closed_form",
]
