"""Retrieval-efficiency decay model, motional-lifetime estimate, and fitting.

The decay model is R(t) = R0 * (exp(-t^2/tau0^2) + exp(-t/tau0)) / 2, a
half-Gaussian/half-exponential mix whose 1/e point sits exactly at t = tau0.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import (DegenerateDataError, FitConvergenceError, ParameterError)
from .params import (BOLTZMANN_K, DecayParams, EnsembleGeometry,
                     coupling_angle)

# Fitter defaults: coarse grid seed, then derivative-free simplex descent.
GRID_POINTS = 25
FIT_MAX_ITER = 10_000
FIT_REL_TOL = 1e-12
# Grid cells whose objectives agree within this relative margin are tied;
# ties resolve to the smallest tau0 for determinism.
GRID_TIE_REL = 1e-9


def retrieval_decay(p: DecayParams, t):
    """Retrieval efficiency after storage time ``t`` (scalar or array), s."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ParameterError("storage time must be >= 0")
    x = t / p.tau0
    out = p.r0 * (np.exp(-x * x) + np.exp(-x)) / 2.0
    return float(out) if out.ndim == 0 else out


def motional_lifetime(geom: EnsembleGeometry) -> float:
    """Memory lifetime limited by thermal atomic motion, seconds.

    tau_a = 1 / (|dk| * v_a) with |dk| = 2 k sin(theta/2) the spin-wave
    wave-vector magnitude and v_a = sqrt(kB T / m) the thermal speed.
    """
    theta = coupling_angle(geom)
    k = 2.0 * math.pi / geom.wavelength
    dk = 2.0 * k * math.sin(theta / 2.0)
    v_a = math.sqrt(BOLTZMANN_K * geom.temperature / geom.atomic_mass)
    return 1.0 / (dk * v_a)


def _as_sample_arrays(samples) -> Tuple[np.ndarray, np.ndarray,
                                        Optional[np.ndarray]]:
    rows = list(samples)
    if len(rows) < 3:
        raise ParameterError("need at least 3 samples to fit the decay model")
    widths = {len(row) for row in rows}
    if widths == {2}:
        sigma = None
    elif widths == {3}:
        sigma = np.array([row[2] for row in rows], dtype=float)
        if np.any(sigma <= 0.0):
            raise ParameterError("sample uncertainties must be > 0")
    else:
        raise ParameterError(
            "samples must be uniformly (t, R) or (t, R, sigma)")
    t = np.array([row[0] for row in rows], dtype=float)
    r = np.array([row[1] for row in rows], dtype=float)
    if np.any(t < 0.0):
        raise ParameterError("storage times must be >= 0")
    if np.any(r < 0.0):
        raise ParameterError("efficiencies must be >= 0")
    if np.unique(t).size < 3:
        raise DegenerateDataError(
            "samples need at least 3 distinct storage times")
    return t, r, sigma


def _nelder_mead(fun, x0, *, rel_tol=FIT_REL_TOL, max_iter=FIT_MAX_ITER,
                 steps=(0.02, 0.1)):
    """Minimal Nelder-Mead simplex descent for a handful of parameters.

    Converges when the simplex objective spread falls below ``rel_tol``
    relative to the best value; raises if the iteration budget runs out.
    A simplex collapsed to machine precision also counts as converged
    (an exact fit drives the objective to rounding noise, where no
    relative criterion can ever be met).
    """
    n = len(x0)
    simplex = [np.array(x0, dtype=float)]
    for i in range(n):
        v = simplex[0].copy()
        v[i] += steps[i]
        simplex.append(v)
    f = [fun(v) for v in simplex]

    for _ in range(max_iter):
        order = np.argsort(f, kind="stable")
        simplex = [simplex[i] for i in order]
        f = [f[i] for i in order]
        if f[-1] - f[0] <= rel_tol * (abs(f[0]) + 1e-300):
            return simplex[0], f[0]
        spread = max(float(np.max(np.abs(v - simplex[0])))
                     for v in simplex[1:])
        if spread <= 1e-14 * (1.0 + float(np.max(np.abs(simplex[0])))):
            return simplex[0], f[0]

        centroid = np.mean(simplex[:-1], axis=0)
        reflected = centroid + (centroid - simplex[-1])
        f_r = fun(reflected)
        if f_r < f[0]:
            expanded = centroid + 2.0 * (centroid - simplex[-1])
            f_e = fun(expanded)
            if f_e < f_r:
                simplex[-1], f[-1] = expanded, f_e
            else:
                simplex[-1], f[-1] = reflected, f_r
        elif f_r < f[-2]:
            simplex[-1], f[-1] = reflected, f_r
        else:
            contracted = centroid + 0.5 * (simplex[-1] - centroid)
            f_c = fun(contracted)
            if f_c < f[-1]:
                simplex[-1], f[-1] = contracted, f_c
            else:
                best = simplex[0]
                simplex = [best] + [best + 0.5 * (v - best)
                                    for v in simplex[1:]]
                f = [f[0]] + [fun(v) for v in simplex[1:]]
    raise FitConvergenceError(
        f"decay fit did not converge within {max_iter} iterations")


def fit_decay(samples: Sequence[Sequence[float]], *,
              max_iter: int = FIT_MAX_ITER,
              rel_tol: float = FIT_REL_TOL) -> Tuple[DecayParams, float]:
    """Least-squares fit of (t, R[, sigma]) samples to the decay model.

    Returns the fitted parameters and the minimized (weighted) sum of
    squared residuals. Seeded by a coarse grid over r0 in [max R, 1] and
    tau0 in [t_max/10, 10 t_max]; refined in (r0, log tau0) space.
    """
    t, r, sigma = _as_sample_arrays(samples)
    w = np.ones_like(r) if sigma is None else 1.0 / (sigma * sigma)
    t_max = float(np.max(t))
    if t_max <= 0.0:
        raise DegenerateDataError("samples need a positive storage time")

    def objective(x):
        r0, log_tau = x
        if not 0.0 <= r0 <= 1.0:
            return math.inf
        tau = math.exp(log_tau)
        u = t / tau
        model = r0 * (np.exp(-u * u) + np.exp(-u)) / 2.0
        return float(np.sum(w * (model - r) ** 2))

    r0_lo = min(float(np.max(r)), 1.0)
    r0_grid = np.linspace(r0_lo, 1.0, GRID_POINTS)
    tau_grid = np.geomspace(t_max / 10.0, 10.0 * t_max, GRID_POINTS)
    best_f, best_x = math.inf, None
    for tau in tau_grid:  # tau ascending: ties keep the smallest tau0
        for r0 in r0_grid:
            x = (r0, math.log(tau))
            fval = objective(x)
            if fval < best_f * (1.0 - GRID_TIE_REL) or best_x is None:
                best_f, best_x = fval, x

    x_opt, f_opt = _nelder_mead(objective, best_x, rel_tol=rel_tol,
                                max_iter=max_iter)
    r0_fit = min(max(float(x_opt[0]), 0.0), 1.0)
    return DecayParams(r0_fit, math.exp(float(x_opt[1]))), f_opt
