"""Slot-exact Monte Carlo simulation of the cooperative MAC protocol.

Each slot, with queue sizes measured at the start of the slot:

1. Primary busy: the primary transmits its head packet. The direct link
   succeeds w.p. ``1 - P_ps,pd``. Independently, if the SU holds energy it
   tries to decode w.p. ``f``, spending one energy packet on the attempt,
   and decodes w.p. ``1 - P_ps,ss``. The packet leaves the primary queue on
   direct success (the destination ACK wins; nothing enters the relaying
   queue) or, failing that, when the SU decoded it, in which case it joins
   the relaying queue at the end of the slot.
2. Primary idle (sensed perfectly): if the SU holds energy and has data it
   spends one energy packet and sends from its own queue w.p. ``beta`` when
   both data queues are backlogged, otherwise from whichever is not empty.
3. Bernoulli arrivals to the primary, secondary and energy queues are
   appended after departures.

Under the ``md1_unity`` energy model one energy packet is drained every slot
in which the energy queue is nonempty, whatever the SU does. With
``dummy_packets=True`` the SU transmits in every idle slot it holds energy
for, choosing its own queue w.p. ``beta`` regardless of which queues hold
data; an empty chosen queue sends a dummy packet.

Randomness comes from six independent PCG64 streams spawned from one seed:
the three arrival processes, the decode/queue-selection coin, the link used
by the transmitting node and the ps->ss link. Every stream is advanced
exactly once per slot, so a trace depends only on (seed, params, horizon).

Trace format (``write_trace``): whitespace-free CSV with header
``slot,q_p,q_s,q_ps,q_e,action,outcome`` where queue sizes are taken at the
start of the slot, ``action`` is one of :data:`ACTIONS` and ``outcome`` one
of :data:`OUTCOMES`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit

from .rates import Occupancy, RateBounds, ScenarioParams, occupancy_bounds

N_STREAMS = 6
CHUNK = 1 << 16
N_BATCHES = 50
N_WINDOWS = 10

ACTIONS = ("idle", "pu_tx", "pu_tx_decode", "su_own", "su_relay", "su_dummy")
OUTCOMES = ("none", "delivered", "relayed", "failed")

# per-batch counters
(C_SLOTS, C_NZ_P, C_NZ_S, C_NZ_PS, C_NZ_E, C_DEP_P, C_DEP_S, C_DEP_PS,
 C_CONS_E, C_ADMIT, C_P_E, C_IDLE_S0_E, C_IDLE_S1_E, C_IDLE_PS0_E,
 C_IDLE_PS1_E, C_IDLE_ONLY_PS, C_IDLE_ONLY_S, C_IDLE_BOTH, C_LEN_P, C_LEN_S,
 C_LEN_PS, C_LEN_E, C_ATTEMPTS, C_SEC_TX, C_VIA_SU, C_ARR_P, C_ARR_S,
 C_ARR_E) = range(28)
N_COUNTERS = 28


@njit(cache=True)
def _slot(q, u, ok_pd, ok_ss, ok_sd, ok_spd, lam_p, lam_s, lam_e, f, beta,
          md1, dummy):
    """Advance ``q = [q_p, q_s, q_ps, q_e]`` in place by one slot.

    ``u`` holds this slot's six uniforms. Returns (action, outcome,
    energy_used, admitted, arrivals_p, arrivals_s, arrivals_e).
    """
    q_p, q_s, q_ps, q_e = q[0], q[1], q[2], q[3]
    action = 0
    outcome = 0
    energy = 0
    admitted = 0
    if q_p > 0:
        action = 1
        direct = u[4] < ok_pd
        decoded = False
        if q_e > 0 and u[3] < f:
            action = 2
            energy = 1
            decoded = u[5] < ok_ss
        if direct:
            q[0] -= 1
            outcome = 1
        elif decoded:
            q[0] -= 1
            admitted = 1
            outcome = 2
        else:
            outcome = 3
    elif q_e > 0:
        own = -1
        if dummy:
            own = 1 if u[3] < beta else 0
        elif q_s > 0 and q_ps > 0:
            own = 1 if u[3] < beta else 0
        elif q_s > 0:
            own = 1
        elif q_ps > 0:
            own = 0
        if own >= 0:
            energy = 1
            if own == 1:
                if q_s > 0:
                    action = 3
                    if u[4] < ok_sd:
                        q[1] -= 1
                        outcome = 1
                    else:
                        outcome = 3
                else:
                    action = 5
            else:
                if q_ps > 0:
                    action = 4
                    if u[4] < ok_spd:
                        q[2] -= 1
                        outcome = 1
                    else:
                        outcome = 3
                else:
                    action = 5
    if md1 and q_e > 0:
        energy = 1
    q[3] -= energy
    q[2] += admitted
    a_p = 1 if u[0] < lam_p else 0
    a_s = 1 if u[1] < lam_s else 0
    a_e = 1 if u[2] < lam_e else 0
    q[0] += a_p
    q[1] += a_s
    q[3] += a_e
    return action, outcome, energy, admitted, a_p, a_s, a_e


@njit(cache=True)
def _run_chunk(q, u, t0, rates, md1, dummy, burn_in, measured, counts,
               trace, want_trace):
    ok_pd, ok_ss, ok_sd, ok_spd, lam_p, lam_s, lam_e, f, beta = (
        rates[0], rates[1], rates[2], rates[3], rates[4], rates[5], rates[6],
        rates[7], rates[8])
    nb = counts.shape[0]
    n = u.shape[1]
    for j in range(n):
        t = t0 + j
        q_p, q_s, q_ps, q_e = q[0], q[1], q[2], q[3]
        action, outcome, energy, admitted, a_p, a_s, a_e = _slot(
            q, u[:, j], ok_pd, ok_ss, ok_sd, ok_spd, lam_p, lam_s, lam_e, f,
            beta, md1, dummy)
        if want_trace:
            trace[j, 0] = t
            trace[j, 1] = q_p
            trace[j, 2] = q_s
            trace[j, 3] = q_ps
            trace[j, 4] = q_e
            trace[j, 5] = action
            trace[j, 6] = outcome
        if t < burn_in:
            continue
        b = (t - burn_in) * nb // measured
        c = counts[b]
        c[0] += 1
        if q_p > 0:
            c[1] += 1
            if q_e > 0:
                c[10] += 1
        else:
            if q_e > 0:
                if q_s == 0:
                    c[11] += 1
                else:
                    c[12] += 1
                if q_ps == 0:
                    c[13] += 1
                else:
                    c[14] += 1
            if q_s == 0 and q_ps > 0:
                c[15] += 1
            elif q_s > 0 and q_ps == 0:
                c[16] += 1
            elif q_s > 0 and q_ps > 0:
                c[17] += 1
        if q_s > 0:
            c[2] += 1
        if q_ps > 0:
            c[3] += 1
        if q_e > 0:
            c[4] += 1
        if outcome == 1 or outcome == 2:
            if action == 1 or action == 2:
                c[5] += 1
            elif action == 3:
                c[6] += 1
            elif action == 4:
                c[7] += 1
        c[8] += energy
        c[9] += admitted
        c[18] += q_p
        c[19] += q_s
        c[20] += q_ps
        c[21] += q_e
        if action == 2:
            c[22] += 1
        if action >= 3:
            c[23] += 1
        if outcome == 2:
            c[24] += 1
        c[25] += a_p
        c[26] += a_s
        c[27] += a_e


class SlotStreams:
    """Six independent uniform streams, consumed one value per slot each."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(N_STREAMS)
        self._gens = [np.random.Generator(np.random.PCG64(s)) for s in children]
        self._buf = np.empty((N_STREAMS, 0))
        self._pos = 0

    def take(self, n: int) -> np.ndarray:
        """Uniforms for the next ``n`` slots, shape ``(6, n)``."""
        left = self._buf[:, self._pos:self._pos + n]
        self._pos += left.shape[1]
        need = n - left.shape[1]
        if need == 0:
            return np.ascontiguousarray(left)
        fresh = np.stack([g.random(need) for g in self._gens])
        return np.ascontiguousarray(np.concatenate([left, fresh], axis=1))

    def next_slot(self) -> np.ndarray:
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([g.random(CHUNK) for g in self._gens])
            self._pos = 0
        col = self._buf[:, self._pos]
        self._pos += 1
        return np.ascontiguousarray(col)


@dataclass
class NetworkState:
    q_p: int = 0
    q_s: int = 0
    q_ps: int = 0
    q_e: int = 0
    slot_index: int = 0
    streams: Optional[SlotStreams] = field(default=None, repr=False)

    @classmethod
    def empty(cls, seed: int) -> "NetworkState":
        return cls(streams=SlotStreams(seed))

    def queues(self) -> np.ndarray:
        return np.array([self.q_p, self.q_s, self.q_ps, self.q_e], dtype=np.int64)


class SlotEvent(NamedTuple):
    slot: int
    q_p: int
    q_s: int
    q_ps: int
    q_e: int
    action: str
    outcome: str
    energy_used: int
    admitted: int
    arrivals: tuple[int, int, int]


def _rate_vector(params: ScenarioParams) -> np.ndarray:
    return np.array([
        1.0 - params.p_out_ps_pd, 1.0 - params.p_out_ps_ss,
        1.0 - params.p_out_ss_sd, 1.0 - params.p_out_ss_pd,
        params.lambda_p, params.lambda_s, params.lambda_e, params.f, params.beta,
    ])


def step(state: NetworkState, params: ScenarioParams,
         dummy_packets: bool = False) -> SlotEvent:
    """Run one slot on ``state`` (mutated) and return what happened."""
    u = state.streams.next_slot()
    r = _rate_vector(params)
    q = state.queues()
    start = (int(q[0]), int(q[1]), int(q[2]), int(q[3]))
    action, outcome, energy, admitted, a_p, a_s, a_e = _slot(
        q, u, r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8],
        params.md1, dummy_packets)
    state.q_p, state.q_s, state.q_ps, state.q_e = (int(x) for x in q)
    ev = SlotEvent(state.slot_index, *start, ACTIONS[action], OUTCOMES[outcome],
                   int(energy), int(admitted), (int(a_p), int(a_s), int(a_e)))
    state.slot_index += 1
    return ev


class Estimate(NamedTuple):
    value: float
    se: float


class Verdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INCONCLUSIVE = "inconclusive"


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> Estimate:
    """Ratio of totals with a batch-means (delta method) standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    total = den.sum()
    if total == 0:
        return Estimate(float("nan"), float("nan"))
    r = num.sum() / total
    b = len(num)
    resid = num - r * den
    se = math.sqrt(float(np.sum(resid ** 2)) / (b * (b - 1))) / (total / b)
    return Estimate(float(r), se)


T_CRIT = 3.0
GROWTH_FACTOR = 2.0
GROWTH_FLOOR = 10.0


def stability_verdict(window_means) -> Verdict:
    """Finite-horizon stability call from per-window mean queue lengths.

    A least-squares trend is fitted across the windows. The queue is called
    unstable when the slope is positive with t-statistic above ``T_CRIT`` and
    the last window's mean is at least ``GROWTH_FACTOR`` times the first's and
    ``GROWTH_FLOOR`` packets above it; stable when there is no significant
    upward trend; inconclusive when the trend is significant but the growth
    is not.
    """
    y = np.asarray(window_means, dtype=float)
    x = np.arange(len(y), dtype=float)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    s2 = float(resid @ resid) / (len(y) - 2)
    if slope <= 0:
        return Verdict.STABLE
    tstat = math.inf if s2 == 0 else slope / math.sqrt(s2 / sxx)
    if tstat <= T_CRIT:
        return Verdict.STABLE
    first, last = y[0], y[-1]
    if last >= GROWTH_FACTOR * first and last - first >= GROWTH_FLOOR:
        return Verdict.UNSTABLE
    return Verdict.INCONCLUSIVE


DATA_QUEUES = ("p", "s", "ps")


@dataclass(frozen=True)
class SimReport:
    params: ScenarioParams
    seed: int
    slots_run: int
    burn_in: int
    dummy_packets: bool
    counts: np.ndarray = field(repr=False)  # (N_BATCHES, N_COUNTERS) after burn-in

    def _col(self, c):
        return self.counts[:, c]

    def _rate(self, num, den) -> Estimate:
        return ratio_estimate(self._col(num), self._col(den))

    # empirical service rates: departures per slot with the queue nonempty
    @property
    def emp_mu_p(self) -> Estimate:
        return self._rate(C_DEP_P, C_NZ_P)

    @property
    def emp_mu_s(self) -> Estimate:
        return self._rate(C_DEP_S, C_NZ_S)

    @property
    def emp_mu_ps(self) -> Estimate:
        return self._rate(C_DEP_PS, C_NZ_PS)

    @property
    def emp_mu_e(self) -> Estimate:
        return self._rate(C_CONS_E, C_NZ_E)

    @property
    def emp_lambda_ps(self) -> Estimate:
        return self._rate(C_ADMIT, C_SLOTS)

    def rates(self) -> dict[str, Estimate]:
        return {"mu_p": self.emp_mu_p, "mu_s": self.emp_mu_s,
                "mu_ps": self.emp_mu_ps, "mu_e": self.emp_mu_e,
                "lambda_ps": self.emp_lambda_ps}

    @property
    def occupancy(self) -> dict[str, Estimate]:
        cols = {"p": C_NZ_P, "s": C_NZ_S, "ps": C_NZ_PS, "e": C_NZ_E,
                "p_e": C_P_E, "idle_s_empty_e": C_IDLE_S0_E,
                "idle_s_busy_e": C_IDLE_S1_E, "idle_ps_empty_e": C_IDLE_PS0_E,
                "idle_ps_busy_e": C_IDLE_PS1_E, "idle_only_ps": C_IDLE_ONLY_PS,
                "idle_only_s": C_IDLE_ONLY_S, "idle_both": C_IDLE_BOTH}
        return {k: self._rate(c, C_SLOTS) for k, c in cols.items()}

    def occupancy_point(self) -> Occupancy:
        occ = self.occupancy
        return Occupancy(**{k: v.value for k, v in occ.items() if k not in ("s", "ps")})

    @property
    def mean_lengths(self) -> dict[str, float]:
        n = self.counts[:, C_SLOTS].sum()
        return {k: float(self.counts[:, c].sum() / n)
                for k, c in (("p", C_LEN_P), ("s", C_LEN_S), ("ps", C_LEN_PS), ("e", C_LEN_E))}

    def window_means(self, queue: str) -> np.ndarray:
        col = {"p": C_LEN_P, "s": C_LEN_S, "ps": C_LEN_PS, "e": C_LEN_E}[queue]
        w = self.counts.reshape(N_WINDOWS, -1, N_COUNTERS).sum(axis=1)
        return w[:, col] / w[:, C_SLOTS]

    @property
    def verdict_per_queue(self) -> dict[str, Verdict]:
        return {k: stability_verdict(self.window_means(k)) for k in DATA_QUEUES}

    def totals(self) -> dict[str, int]:
        s = self.counts.sum(axis=0)
        names = {"admitted": C_ADMIT, "departed_via_su": C_VIA_SU,
                 "energy_consumed": C_CONS_E, "decode_attempts": C_ATTEMPTS,
                 "secondary_tx": C_SEC_TX, "arrivals_p": C_ARR_P,
                 "arrivals_s": C_ARR_S, "arrivals_e": C_ARR_E,
                 "departed_p": C_DEP_P, "departed_s": C_DEP_S,
                 "departed_ps": C_DEP_PS, "slots": C_SLOTS}
        return {k: int(s[c]) for k, c in names.items()}


def run(params: ScenarioParams, horizon: int = 10**6, burn_in: int = 10**5,
        seed: int = 0, dummy_packets: bool = False,
        trace_path=None) -> SimReport:
    """Simulate ``horizon`` slots from the all-empty state.

    Statistics cover slots ``burn_in .. horizon-1``; ``trace_path``, when
    given, receives every slot including the burn-in.
    """
    horizon, burn_in = int(horizon), int(burn_in)
    if not 0 <= burn_in < horizon:
        raise ValueError("need 0 <= burn_in < horizon")
    measured = horizon - burn_in
    if measured < N_BATCHES:
        raise ValueError(f"need at least {N_BATCHES} measured slots")
    streams = SlotStreams(seed)
    q = np.zeros(4, dtype=np.int64)
    counts = np.zeros((N_BATCHES, N_COUNTERS), dtype=np.int64)
    rates = _rate_vector(params)
    want_trace = trace_path is not None
    trace = np.zeros((CHUNK if want_trace else 1, 7), dtype=np.int64)
    fh = writer = None
    if want_trace:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "q_p", "q_s", "q_ps", "q_e", "action", "outcome"])
    try:
        t = 0
        while t < horizon:
            n = min(CHUNK, horizon - t)
            u = streams.take(n)
            _run_chunk(q, u, t, rates, params.md1, dummy_packets, burn_in,
                       measured, counts, trace, want_trace)
            if want_trace:
                for row in trace[:n]:
                    writer.writerow([*(int(x) for x in row[:5]),
                                     ACTIONS[row[5]], OUTCOMES[row[6]]])
            t += n
    finally:
        if fh is not None:
            fh.close()
    return SimReport(params, int(seed), horizon, burn_in, dummy_packets, counts)


class RateCheck(str, enum.Enum):
    WITHIN = "within"
    BELOW_INNER = "below_inner"
    ABOVE_OUTER = "above_outer"


class UnstableRun(RuntimeError):
    """Service-rate estimates from a run with an unstable data queue are biased."""


def empirical_rate_check(report: SimReport, bounds: RateBounds,
                         n_se: float = 3.0) -> dict[str, RateCheck]:
    """Place each empirical rate relative to its [inner, outer] bound pair.

    A rate counts as within when it lies in ``[inner - n_se*SE, outer +
    n_se*SE]``. Raises :class:`UnstableRun` unless every data queue was
    judged stable.
    """
    bad = {k: v for k, v in report.verdict_per_queue.items() if v is not Verdict.STABLE}
    if bad:
        raise UnstableRun(f"data queues not stable: {bad}")
    out = {}
    for name, est in report.rates().items():
        lo, hi = getattr(bounds, name)
        out[name] = _place(est, lo, hi, n_se)
    return out


def occupancy_check(report: SimReport, bounds: RateBounds,
                    n_se: float = 3.0) -> dict[str, RateCheck]:
    """Nonempty probabilities of Q_p and Q_s against their ratio bounds."""
    p = report.params
    out = {}
    for name, lam, b in (("p", p.lambda_p, bounds.mu_p), ("s", p.lambda_s, bounds.mu_s)):
        if lam > b.outer:
            out[name] = RateCheck.ABOVE_OUTER
            continue
        lo, hi = occupancy_bounds(lam, b.inner, b.outer)
        out[name] = _place(report.occupancy[name], lo, hi, n_se)
    return out


def _place(est: Estimate, lo: float, hi: float, n_se: float) -> RateCheck:
    value, se = est
    if math.isnan(value):
        # queue never nonempty: no evidence against the bounds
        return RateCheck.WITHIN
    if value < lo - n_se * se - 1e-12:
        return RateCheck.BELOW_INNER
    if value > hi + n_se * se + 1e-12:
        return RateCheck.ABOVE_OUTER
    return RateCheck.WITHIN
