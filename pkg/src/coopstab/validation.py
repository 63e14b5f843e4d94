"""Simulation-backed checks of the analytic bounds at sampled operating points.

Inside points sit a margin below the inner envelope, along the ray to the
origin, and are simulated with the envelope's optimal ``(f, beta)``; they
should keep every data queue stable. Outside points sit the same margin
beyond the outer envelope and should leave at least one data queue
unstable. Runs that come back inconclusive are repeated once at four times
the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rates import ScenarioParams, bound_rates, bound_table
from .region import inner_envelope_point, outer_envelope_point, sweep_envelope
from .sim import (RateCheck, SimReport, Verdict, empirical_rate_check,
                  occupancy_check, run)

MARGIN = 0.05
RERUN_FACTOR = 4


@dataclass(frozen=True)
class PointResult:
    kind: str  # "inside" or "outside"
    params: ScenarioParams
    verdicts: dict
    reran: bool
    passed: bool
    rate_checks: Optional[dict] = None
    occupancy_checks: Optional[dict] = None

    @property
    def inconclusive(self) -> bool:
        return any(v is Verdict.INCONCLUSIVE for v in self.verdicts.values())


def inside_point(base: ScenarioParams, lambda_p: float, margin: float = MARGIN,
                 f_grid_step: float = 1e-3) -> Optional[ScenarioParams]:
    pt = inner_envelope_point(base, lambda_p, f_grid_step)
    if not pt.feasible:
        return None
    k = 1.0 - margin
    return base.replace(lambda_p=k * lambda_p, lambda_s=k * pt.lambda_s_max,
                        f=pt.f_opt, beta=pt.beta_opt)


def outside_point(base: ScenarioParams, lambda_p: float, margin: float = MARGIN,
                  f_grid_step: float = 1e-3) -> Optional[ScenarioParams]:
    """Point beyond the outer envelope, with the outer optimum's ``f``.

    ``beta`` is the largest value whose relaying share still covers the
    lower bound on relaying arrivals under the outer-bound service rate,
    i.e. the policy most favourable to the SU's own queue.
    """
    pt = outer_envelope_point(base, lambda_p, f_grid_step)
    if not pt.feasible:
        return None
    t = bound_table(base.replace(f=pt.f_opt), lambda_p=lambda_p)
    beta = float(np.clip(1.0 - t.lam_ps_i / t.mu_ps_o, 0.0, 1.0)) if t.mu_ps_o > 0 else 1.0
    k = 1.0 + margin
    return base.replace(lambda_p=min(1.0, k * lambda_p),
                        lambda_s=min(1.0, k * pt.lambda_s_max),
                        f=pt.f_opt, beta=beta)


def _simulate(params, horizon, burn_in, seed) -> tuple[SimReport, bool]:
    rep = run(params, horizon, burn_in, seed)
    if any(v is Verdict.INCONCLUSIVE for v in rep.verdict_per_queue.values()):
        return run(params, RERUN_FACTOR * horizon, RERUN_FACTOR * burn_in, seed), True
    return rep, False


def check_inside(params: ScenarioParams, horizon=10**6, burn_in=10**5, seed=0,
                 check_rates: bool = True) -> PointResult:
    rep, reran = _simulate(params, horizon, burn_in, seed)
    v = rep.verdict_per_queue
    ok = all(x is Verdict.STABLE for x in v.values())
    rc = oc = None
    if ok and check_rates:
        b = bound_rates(params)
        rc = empirical_rate_check(rep, b)
        oc = occupancy_check(rep, b)
        ok = all(x is RateCheck.WITHIN for x in (*rc.values(), *oc.values()))
    return PointResult("inside", params, v, reran, ok, rc, oc)


def check_outside(params: ScenarioParams, horizon=10**6, burn_in=10**5, seed=0) -> PointResult:
    rep, reran = _simulate(params, horizon, burn_in, seed)
    v = rep.verdict_per_queue
    ok = any(x is Verdict.UNSTABLE for x in v.values())
    return PointResult("outside", params, v, reran, ok)


def sample_points(base: ScenarioParams, lambda_e_values, n: int, seed: int,
                  margin: float = MARGIN, f_grid_step: float = 1e-3):
    """``n`` inside and ``n`` outside points, cycling over ``lambda_e_values``.

    Primary rates are drawn uniformly over each envelope's feasible range.
    """
    rng = np.random.default_rng(seed)
    inside, outside = [], []
    envs = {}
    for le in lambda_e_values:
        b = base.replace(lambda_e=le)
        envs[le] = (b, sweep_envelope(b, "inner", f_grid_step=f_grid_step).max_feasible_lambda_p,
                    sweep_envelope(b, "outer", f_grid_step=f_grid_step).max_feasible_lambda_p)
    for i in range(n):
        b, edge_i, edge_o = envs[lambda_e_values[i % len(lambda_e_values)]]
        lp_i = rng.uniform(0.0, edge_i or 0.0)
        lp_o = rng.uniform(0.0, edge_o or 0.0)
        pi = inside_point(b, lp_i, margin, f_grid_step)
        po = outside_point(b, lp_o, margin, f_grid_step)
        if pi is not None:
            inside.append(pi)
        if po is not None:
            outside.append(po)
    return inside, outside
