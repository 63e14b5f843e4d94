"""Inner and outer stability-region envelopes.

For a fixed primary arrival rate the outer envelope maximizes the outer
bound on the secondary service rate over the admission probability ``f``;
the inner envelope maximizes the inner bound over ``f`` and the queue
selection probability ``beta``. For fixed ``f`` the inner problem is linear
in ``beta`` and the optimum is the largest beta that keeps the relaying
queue stable, available in closed form (:func:`optimal_beta`).

Both searches run over a uniform f-grid. Grid ties go to the smaller ``f``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .phy import outages_from_snr
from .rates import TOL, EnergyModel, ScenarioParams, bound_table

DEFAULT_F_STEP = 1e-3
DEFAULT_LAMBDA_P_POINTS = 200


class Side(str, enum.Enum):
    INNER = "inner"
    OUTER = "outer"


@dataclass(frozen=True)
class EnvelopePoint:
    lambda_p: float
    lambda_s_max: float
    f_opt: Optional[float]
    beta_opt: Optional[float]
    feasible: bool
    bound_side: Side


@dataclass(frozen=True)
class Envelope:
    side: Side
    points: tuple[EnvelopePoint, ...]

    @property
    def lambda_p(self) -> np.ndarray:
        return np.array([p.lambda_p for p in self.points])

    @property
    def lambda_s(self) -> np.ndarray:
        return np.array([p.lambda_s_max for p in self.points])

    @property
    def max_feasible_lambda_p(self) -> Optional[float]:
        feas = [p.lambda_p for p in self.points if p.feasible]
        return max(feas) if feas else None

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def f_grid(step: float = DEFAULT_F_STEP) -> np.ndarray:
    """Uniform grid on [0, 1] whose spacing does not exceed ``step``."""
    if not 0 < step <= 1:
        raise ValueError("f grid step must lie in (0, 1]")
    n = int(np.ceil(1.0 / step - 1e-9))
    return np.linspace(0.0, 1.0, n + 1)


def _grid(f_grid_step: float, f_values) -> np.ndarray:
    if f_values is not None:
        fs = np.atleast_1d(np.asarray(f_values, dtype=float))
        if np.any((fs < 0) | (fs > 1)):
            raise ValueError("f values must lie in [0, 1]")
        return fs
    if not 0 < f_grid_step <= 0.01:
        raise ValueError("f_grid_step must lie in (0, 0.01]")
    return f_grid(f_grid_step)


def primary_edge(base: ScenarioParams) -> float:
    """Largest primary service rate reachable by any f (the f = 1 outer bound)."""
    return (1.0 - base.p_out_ps_pd) + base.p_out_ps_pd * (1.0 - base.p_out_ps_ss)


def min_admission(base: ScenarioParams, lambda_p: float) -> float:
    """Smallest f keeping ``lambda_p <= mu_p^(o)``; ``inf`` if none exists."""
    direct = 1.0 - base.p_out_ps_pd
    gain = base.p_out_ps_pd * (1.0 - base.p_out_ps_ss)
    if lambda_p <= direct:
        return 0.0
    if gain <= 0:
        return float("inf")
    return (lambda_p - direct) / gain


def _best(fs, objective, feasible):
    if not feasible.any():
        return None
    masked = np.where(feasible, objective, -np.inf)
    return int(np.argmax(masked))  # first maximum -> smallest f


def outer_envelope_point(base: ScenarioParams, lambda_p: float,
                         f_grid_step: float = DEFAULT_F_STEP,
                         f_values: Sequence[float] | None = None) -> EnvelopePoint:
    fs = _grid(f_grid_step, f_values)
    if min_admission(base, lambda_p) > 1.0 + TOL:
        return EnvelopePoint(lambda_p, 0.0, None, None, False, Side.OUTER)
    t = bound_table(base, f=fs, lambda_p=lambda_p)
    feasible = t.primary_ok & (t.lam_ps_i <= t.mu_ps_o + TOL)
    k = _best(fs, t.mu_s_o, feasible)
    if k is None:
        return EnvelopePoint(lambda_p, 0.0, None, None, False, Side.OUTER)
    return EnvelopePoint(lambda_p, float(t.mu_s_o[k]), float(fs[k]), None, True, Side.OUTER)


def _beta_star(t):
    """Closed-form largest feasible beta per grid entry; NaN where infeasible.

    ``t`` must be evaluated with beta = 1 (``mu_ps_i`` then is not used).
    """
    # lam_ps_o <= (1 - beta) * den + TOL, the same slack the grid checks use
    excess = np.maximum(t.lam_ps_o - TOL, 0.0)
    den = t.mu_ps_i_at_zero
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        beta = np.where(den > 0, 1.0 - excess / np.where(den > 0, den, 1.0),
                        np.where(excess > 0, -np.inf, 1.0))
    ok = t.inner_ok & (beta >= -TOL)
    return np.where(ok, np.clip(beta, 0.0, 1.0), np.nan)


class _InnerTerms:
    def __init__(self, base, fs, lambda_p):
        t = bound_table(base, f=fs, beta=1.0, lambda_p=lambda_p)
        self.lam_ps_o = t.lam_ps_o
        self.mu_ps_i_at_zero = (1.0 - base.p_out_ss_pd) * (1.0 - t.rho_i) * t.energy_lo
        self.inner_ok = t.inner_ok
        self.mu_s_i_at_one = t.mu_s_i
        self.mu_p_i = t.mu_p_i


def optimal_beta(base: ScenarioParams, lambda_p: float, f: float) -> Optional[float]:
    """Largest beta keeping the relaying queue stable in the inner problem.

    Returns ``None`` when no beta in [0, 1] is feasible at this ``f``.
    """
    beta = _beta_star(_InnerTerms(base, np.array([f]), lambda_p))[0]
    return None if np.isnan(beta) else float(beta)


def inner_envelope_point(base: ScenarioParams, lambda_p: float,
                         f_grid_step: float = DEFAULT_F_STEP,
                         f_values: Sequence[float] | None = None) -> EnvelopePoint:
    fs = _grid(f_grid_step, f_values)
    terms = _InnerTerms(base, fs, lambda_p)
    beta = _beta_star(terms)
    feasible = ~np.isnan(beta)
    objective = terms.mu_s_i_at_one * np.nan_to_num(beta)
    k = _best(fs, objective, feasible)
    if k is None:
        return EnvelopePoint(lambda_p, 0.0, None, None, False, Side.INNER)
    return EnvelopePoint(lambda_p, float(objective[k]), float(fs[k]), float(beta[k]),
                         True, Side.INNER)


def lambda_p_grid(base: ScenarioParams, points: int = DEFAULT_LAMBDA_P_POINTS) -> np.ndarray:
    if points < 2:
        raise ValueError("need at least two lambda_p grid points")
    return np.linspace(0.0, primary_edge(base), points)


def sweep_envelope(base: ScenarioParams, side: Side | str,
                   lambda_p_points: int | Sequence[float] = DEFAULT_LAMBDA_P_POINTS,
                   f_grid_step: float = DEFAULT_F_STEP,
                   f_values: Sequence[float] | None = None) -> Envelope:
    """Envelope over a lambda_p grid running from 0 to the f = 1 primary edge.

    ``lambda_p_points`` is either a point count or an explicit grid. The edge
    does not depend on lambda_e, beta or the energy model, so sweeps of one
    scenario family share a grid and can be compared pointwise.
    """
    side = Side(side)
    if np.ndim(lambda_p_points) == 0:
        grid = lambda_p_grid(base, int(lambda_p_points))
    else:
        grid = np.sort(np.asarray(lambda_p_points, dtype=float))
    solve = inner_envelope_point if side is Side.INNER else outer_envelope_point
    pts = tuple(solve(base, float(lp), f_grid_step, f_values) for lp in grid)
    return Envelope(side, pts)


@dataclass(frozen=True)
class PrimaryRatePoint:
    spectral_efficiency: float
    inner: float
    outer: float
    non_cooperative: float
    f_inner: float
    f_outer: float
    # whether the maximized rate also satisfies lambda_p <= mu_p
    inner_stable: bool
    outer_stable: bool


def max_primary_rate(snr: dict, sensing_fraction: float, r_grid: Sequence[float],
                     lambda_p: float, lambda_e: float,
                     f_grid_step: float = DEFAULT_F_STEP,
                     energy_model: EnergyModel | str = EnergyModel.COUPLED,
                     f_values: Sequence[float] | None = None) -> list[PrimaryRatePoint]:
    """Maximum inner/outer primary service rate against spectral efficiency.

    For each ``R`` the link outages come from the Rayleigh model, then the
    inner (outer) bound on the primary service rate is maximized over ``f``
    subject to the relaying-queue constraint of the inner (outer) problem.
    ``f = 0`` always satisfies that constraint, so both maxima dominate the
    non-cooperative rate. Whether the maximum also clears ``lambda_p`` is
    reported separately.
    """
    fs = _grid(f_grid_step, f_values)
    out = []
    for r in r_grid:
        links = outages_from_snr(float(r), sensing_fraction, snr)
        base = ScenarioParams.from_outages(links, lambda_p=lambda_p, lambda_e=lambda_e,
                                           energy_model=energy_model)
        t = bound_table(base, f=fs)
        outer_ok = t.lam_ps_i <= t.mu_ps_o + TOL
        # rho clamps at 1 when lambda_p > mu_p, which closes the relaying
        # constraint for every f > 0
        ko = _best(fs, t.mu_p_o, outer_ok)
        terms = _InnerTerms(base, fs, lambda_p)
        terms.inner_ok = np.ones_like(terms.inner_ok)
        inner_ok = ~np.isnan(_beta_star(terms))
        ki = _best(fs, t.mu_p_i, inner_ok)
        if ko is None or ki is None:
            raise ValueError(f"no feasible f on the supplied grid at R={r}")
        mu_o, mu_i = float(t.mu_p_o[ko]), float(t.mu_p_i[ki])
        out.append(PrimaryRatePoint(
            spectral_efficiency=float(r),
            inner=mu_i,
            outer=mu_o,
            non_cooperative=1.0 - links.ps_pd,
            f_inner=float(fs[ki]),
            f_outer=float(fs[ko]),
            inner_stable=lambda_p <= mu_i + TOL,
            outer_stable=lambda_p <= mu_o + TOL,
        ))
    return out
