"""Mean arrival/service rates of the four interacting queues.

Two families of expressions live here:

* :func:`exact_rates` evaluates the coupled rate expressions given the
  (generally unknown) queue-occupancy probabilities. It is used to check the
  simulator and the bounds against each other.
* :func:`bound_rates` evaluates the decoupled inner/outer bounds on every
  rate, for either energy-queue model.

Conventions shared by all bound code:

* ``lambda / mu`` for a data queue is its nonempty probability; ``0/0`` is 0
  (no arrivals, always empty) and ``x/0`` with ``x > 0`` saturates at 1.
* The energy factor ``min(lambda_e / mu_e, 1)`` saturates at 1 whenever
  ``mu_e == 0``. On the lower-bound side ``0/0`` is 0 instead, because an
  energy queue with no arrivals is certainly empty.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TOL = 1e-12


class InfeasiblePrimary(ValueError):
    """Raised when lambda_p exceeds the outer bound on the primary service rate."""


class EnergyModel(str, enum.Enum):
    COUPLED = "coupled"
    MD1_UNITY = "md1_unity"


@dataclass(frozen=True)
class ScenarioParams:
    p_out_ps_pd: float
    p_out_ps_ss: float
    p_out_ss_sd: float
    p_out_ss_pd: float
    lambda_p: float = 0.0
    lambda_s: float = 0.0
    lambda_e: float = 1.0
    f: float = 0.0
    beta: float = 1.0
    energy_model: EnergyModel = EnergyModel.COUPLED

    def __post_init__(self):
        for fld in dataclasses.fields(self):
            if fld.name == "energy_model":
                continue
            v = float(getattr(self, fld.name))
            if not 0.0 <= v <= 1.0:  # also rejects NaN
                raise ValueError(f"{fld.name} must lie in [0, 1], got {v!r}")
            object.__setattr__(self, fld.name, v)
        object.__setattr__(self, "energy_model", EnergyModel(self.energy_model))

    def replace(self, **changes) -> "ScenarioParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_outages(cls, outages, **kw) -> "ScenarioParams":
        """Build from a :class:`~coopstab.phy.LinkOutages`-like tuple."""
        return cls(outages.ps_pd, outages.ps_ss, outages.ss_sd, outages.ss_pd, **kw)

    @property
    def md1(self) -> bool:
        return self.energy_model is EnergyModel.MD1_UNITY


class Bound(NamedTuple):
    inner: float
    outer: float


@dataclass(frozen=True)
class RateBounds:
    mu_p: Bound
    mu_s: Bound
    mu_ps: Bound
    mu_e: Bound
    lambda_ps: Bound
    # False when lambda_p > mu_p^(i): the inner-side values are then clamped
    # and do not describe a stable decoupled system.
    inner_feasible: bool = True

    def as_dict(self) -> dict[str, Bound]:
        return {k: getattr(self, k) for k in ("mu_p", "mu_s", "mu_ps", "mu_e", "lambda_ps")}


def load_ratio(lam, mu):
    """``min(lam/mu, 1)`` with ``0/0 -> 0`` and ``x/0 -> 1``; broadcasts."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    pos = mu > 0
    with np.errstate(over="ignore"):
        r = np.minimum(lam / np.where(pos, mu, 1.0), 1.0)
    return np.where(pos, r, np.where(lam > 0, 1.0, 0.0))


def energy_factor(lam_e, mu_e, zero_over_zero: float):
    """``min(lam_e/mu_e, 1)`` with ``x/0 -> 1`` and ``0/0 -> zero_over_zero``."""
    lam_e = np.asarray(lam_e, dtype=float)
    mu_e = np.asarray(mu_e, dtype=float)
    pos = mu_e > 0
    with np.errstate(over="ignore"):
        r = np.minimum(lam_e / np.where(pos, mu_e, 1.0), 1.0)
    return np.where(pos, r, np.where(lam_e > 0, 1.0, zero_over_zero))


class BoundTable(NamedTuple):
    """Array-valued bound expressions plus the intermediate occupancy terms."""

    mu_p_i: np.ndarray
    mu_p_o: np.ndarray
    mu_e_i: np.ndarray
    mu_e_o: np.ndarray
    mu_s_i: np.ndarray
    mu_s_o: np.ndarray
    mu_ps_i: np.ndarray
    mu_ps_o: np.ndarray
    lam_ps_i: np.ndarray
    lam_ps_o: np.ndarray
    rho_o: np.ndarray  # lambda_p / mu_p^(o)
    rho_i: np.ndarray  # min(lambda_p / mu_p^(i), 1)
    energy_lo: np.ndarray  # min(lambda_e / mu_e^(o), 1)
    energy_hi: np.ndarray  # min(lambda_e / mu_e^(i), 1)
    primary_ok: np.ndarray  # lambda_p <= mu_p^(o)
    inner_ok: np.ndarray  # lambda_p <= mu_p^(i)


def bound_table(params: ScenarioParams, f=None, beta=None, lambda_p=None, lambda_e=None) -> BoundTable:
    """Evaluate every bound for ``params``, optionally overriding some fields.

    Overrides may be numpy arrays; the result broadcasts over them. Nothing
    raises here: infeasible entries are flagged through ``primary_ok`` and
    ``inner_ok`` and the occupancy ratios are clamped to 1.
    """
    f = params.f if f is None else np.asarray(f, dtype=float)
    beta = params.beta if beta is None else np.asarray(beta, dtype=float)
    lam_p = params.lambda_p if lambda_p is None else np.asarray(lambda_p, dtype=float)
    lam_e = params.lambda_e if lambda_e is None else np.asarray(lambda_e, dtype=float)

    p_pd = params.p_out_ps_pd
    ok_pd = 1.0 - p_pd
    ok_ss = 1.0 - params.p_out_ps_ss
    ok_sd = 1.0 - params.p_out_ss_sd
    ok_spd = 1.0 - params.p_out_ss_pd
    relay_gain = f * p_pd * ok_ss

    mu_p_o = ok_pd + relay_gain
    rho_o = load_ratio(lam_p, mu_p_o)
    if params.md1:
        mu_e_i = np.ones_like(rho_o)
        mu_e_o = np.ones_like(rho_o)
    else:
        mu_e_i = f * rho_o
        mu_e_o = 1.0 - (1.0 - f) * rho_o
    e_lo = energy_factor(lam_e, mu_e_o, 0.0)
    e_hi = energy_factor(lam_e, mu_e_i, 1.0)

    mu_p_i = ok_pd + relay_gain * e_lo
    rho_i = load_ratio(lam_p, mu_p_i)

    mu_s_o = ok_sd * (1.0 - rho_o) * e_hi
    mu_s_i = ok_sd * beta * (1.0 - rho_i) * e_lo
    mu_ps_o = ok_spd * (1.0 - rho_o) * e_hi
    mu_ps_i = ok_spd * (1.0 - beta) * (1.0 - rho_i) * e_lo
    lam_ps_i = relay_gain * e_lo * rho_o
    lam_ps_o = relay_gain * e_hi * rho_i

    arr = np.broadcast_arrays(
        mu_p_i, mu_p_o, mu_e_i, mu_e_o, mu_s_i, mu_s_o, mu_ps_i, mu_ps_o,
        lam_ps_i, lam_ps_o, rho_o, rho_i, e_lo, e_hi,
        np.asarray(lam_p) <= mu_p_o + TOL, np.asarray(lam_p) <= mu_p_i + TOL,
    )
    return BoundTable(*arr)


def bound_rates(params: ScenarioParams) -> RateBounds:
    """Inner/outer bounds on every mean rate for the configured (f, beta).

    Raises :class:`InfeasiblePrimary` if ``lambda_p`` exceeds the outer bound
    on the primary service rate, since no outer-side expression is defined.
    """
    t = bound_table(params)
    if not t.primary_ok:
        raise InfeasiblePrimary(
            f"lambda_p={params.lambda_p} exceeds mu_p^(o)={float(t.mu_p_o):.6g}"
        )
    b = lambda i, o: Bound(float(i), float(o))
    return RateBounds(
        mu_p=b(t.mu_p_i, t.mu_p_o),
        mu_s=b(t.mu_s_i, t.mu_s_o),
        mu_ps=b(t.mu_ps_i, t.mu_ps_o),
        mu_e=b(t.mu_e_i, t.mu_e_o),
        lambda_ps=b(t.lam_ps_i, t.lam_ps_o),
        inner_feasible=bool(t.inner_ok),
    )


def occupancy_bounds(lam: float, mu_inner: float, mu_outer: float,
                     saturated: bool = False) -> tuple[float, float]:
    """Bounds ``(lower, upper)`` on the probability that a queue is nonempty.

    For a data queue, ``lam/mu_outer <= Pr{Q != 0} <= min(lam/mu_inner, 1)``
    and ``lam <= mu_outer`` is required. With ``saturated=True`` (the energy
    queue) both sides are ``min(., 1)`` and overload is allowed.
    """
    if lam < 0 or mu_inner < 0 or mu_outer < 0:
        raise ValueError("rates must be non-negative")
    if saturated:
        return (float(energy_factor(lam, mu_outer, 0.0)),
                float(energy_factor(lam, mu_inner, 1.0)))
    if mu_outer == 0 and lam > 0:
        raise ValueError("mu_outer = 0 with positive arrivals")
    if lam > mu_outer + TOL:
        raise ValueError(f"arrival rate {lam} exceeds outer service bound {mu_outer}")
    return float(load_ratio(lam, mu_outer)), float(load_ratio(lam, mu_inner))


@dataclass(frozen=True)
class Occupancy:
    """Queue-state probabilities entering the coupled rate expressions.

    ``idle`` means the primary queue is empty (a sensed free slot).
    """

    e: float  # Pr{Qe != 0}
    p: float  # Pr{Qp != 0}
    p_e: float  # Pr{Qp != 0, Qe != 0}
    idle_s_empty_e: float  # Pr{Qp = 0, Qs = 0, Qe != 0}
    idle_s_busy_e: float  # Pr{Qp = 0, Qs != 0, Qe != 0}
    idle_ps_empty_e: float  # Pr{Qp = 0, Qps = 0, Qe != 0}
    idle_ps_busy_e: float  # Pr{Qp = 0, Qps != 0, Qe != 0}
    idle_only_ps: float  # Pr{Qp = 0, Qs = 0, Qps != 0}
    idle_only_s: float  # Pr{Qp = 0, Qs != 0, Qps = 0}
    idle_both: float  # Pr{Qp = 0, Qs != 0, Qps != 0}

    def __post_init__(self):
        for fld in dataclasses.fields(self):
            v = getattr(self, fld.name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{fld.name} must lie in [0, 1], got {v!r}")


class ExactRates(NamedTuple):
    mu_p: float
    mu_s: float
    mu_ps: float
    mu_e: float
    lambda_ps: float


def exact_rates(params: ScenarioParams, occ: Occupancy) -> ExactRates:
    """Coupled-system mean rates for given occupancy probabilities."""
    relay = params.f * params.p_out_ps_pd * (1.0 - params.p_out_ps_ss)
    mu_p = (1.0 - params.p_out_ps_pd) + relay * occ.e
    lambda_ps = relay * occ.p_e
    mu_ps = (1.0 - params.p_out_ss_pd) * (
        occ.idle_s_empty_e + (1.0 - params.beta) * occ.idle_s_busy_e)
    mu_s = (1.0 - params.p_out_ss_sd) * (
        occ.idle_ps_empty_e + params.beta * occ.idle_ps_busy_e)
    if params.md1:
        mu_e = 1.0
    else:
        mu_e = params.f * occ.p + occ.idle_only_ps + occ.idle_only_s + occ.idle_both
    return ExactRates(mu_p, mu_s, mu_ps, mu_e, lambda_ps)


def is_stable(lam: float, mu: float) -> bool:
    """Loynes test with the boundary excluded: stable iff ``lam < mu``."""
    return lam < mu - TOL
