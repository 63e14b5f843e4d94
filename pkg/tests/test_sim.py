import csv

import numpy as np
import pytest

from coopstab import sim
from coopstab.presets import FIG1
from coopstab.rates import ScenarioParams, bound_rates
from coopstab.sim import (NetworkState, RateCheck, UnstableRun, Verdict,
                          empirical_rate_check, occupancy_check, ratio_estimate,
                          run, stability_verdict, step)


class Fixed:
    """Stand-in stream that replays one column of uniforms every slot."""

    def __init__(self, arr_p=1, arr_s=1, arr_e=1, coin=0.5, link=0.5, ps_ss=0.5):
        self.u = np.array([arr_p, arr_s, arr_e, coin, link, ps_ss], dtype=float)

    def next_slot(self):
        return self.u.copy()


def state(q_p=0, q_s=0, q_ps=0, q_e=0, **u):
    return NetworkState(q_p, q_s, q_ps, q_e, streams=Fixed(**u))


P = ScenarioParams(p_out_ps_pd=0.2, p_out_ps_ss=0.1, p_out_ss_sd=0.2, p_out_ss_pd=0.1,
                   f=1.0, beta=0.5, lambda_e=0.5)


def test_no_decode_without_energy():
    s = state(q_p=1, coin=0.0, link=0.95, ps_ss=0.0)
    ev = step(s, P)
    assert (ev.action, ev.outcome, ev.energy_used, ev.admitted) == ("pu_tx", "failed", 0, 0)
    assert (s.q_p, s.q_ps, s.q_e) == (1, 0, 0)


def test_decode_moves_packet_to_relay_queue():
    s = state(q_p=1, q_e=1, coin=0.0, link=0.95, ps_ss=0.0)
    ev = step(s, P)
    assert (ev.action, ev.outcome, ev.admitted) == ("pu_tx_decode", "relayed", 1)
    assert (s.q_p, s.q_ps, s.q_e) == (0, 1, 0)


def test_destination_ack_wins():
    s = state(q_p=1, q_e=1, coin=0.0, link=0.0, ps_ss=0.0)
    ev = step(s, P)
    assert (ev.action, ev.outcome, ev.admitted, ev.energy_used) == (
        "pu_tx_decode", "delivered", 0, 1)
    assert (s.q_p, s.q_ps, s.q_e) == (0, 0, 0)


def test_decode_respects_admission_probability():
    s = state(q_p=1, q_e=1, coin=0.7, link=0.95)
    ev = step(s, P.replace(f=0.6))
    assert ev.action == "pu_tx" and ev.energy_used == 0 and s.q_e == 1


def test_idle_slot_without_energy_stays_silent():
    s = state(q_s=1, q_ps=1, coin=0.0, link=0.0)
    ev = step(s, P)
    assert ev.action == "idle" and (s.q_s, s.q_ps) == (1, 1)


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_single_backlogged_queue_is_always_served(beta):
    s = state(q_s=2, q_e=1, coin=0.999, link=0.0)
    assert step(s, P.replace(beta=beta)).action == "su_own"
    assert (s.q_s, s.q_e) == (1, 0)
    s = state(q_ps=2, q_e=1, coin=0.0, link=0.0)
    assert step(s, P.replace(beta=beta)).action == "su_relay"
    assert s.q_ps == 1


def test_queue_selection_coin_when_both_backlogged():
    assert step(state(q_s=1, q_ps=1, q_e=1, coin=0.4), P).action == "su_own"
    assert step(state(q_s=1, q_ps=1, q_e=1, coin=0.6), P).action == "su_relay"


def test_secondary_outage_keeps_packet():
    s = state(q_s=1, q_e=1, link=0.9)
    ev = step(s, P)
    assert (ev.action, ev.outcome, ev.energy_used) == ("su_own", "failed", 1)
    assert (s.q_s, s.q_e) == (1, 0)


def test_md1_drains_energy_every_slot():
    s = state(q_e=3)
    ev = step(s, P.replace(energy_model="md1_unity"))
    assert ev.action == "idle" and ev.energy_used == 1 and s.q_e == 2
    s = state(q_e=3)
    assert step(s, P).energy_used == 0 and s.q_e == 3
    # a decode attempt consumes the same single packet
    s = state(q_p=1, q_e=3, coin=0.0, link=0.0)
    assert step(s, P.replace(energy_model="md1_unity")).energy_used == 1 and s.q_e == 2


def test_dummy_packets_spend_energy():
    s = state(q_ps=1, q_e=1, coin=0.0)
    ev = step(s, P.replace(beta=1.0), dummy_packets=True)
    assert (ev.action, ev.energy_used) == ("su_dummy", 1)
    assert (s.q_ps, s.q_e) == (1, 0)
    s = state(q_e=1, coin=0.9)
    assert step(s, P, dummy_packets=True).action == "su_dummy"


def test_arrivals_after_departures():
    s = state(q_p=1, arr_p=0.0, arr_s=0.0, arr_e=0.0, link=0.0)
    ev = step(s, P.replace(lambda_p=0.5, lambda_s=0.5))
    assert ev.arrivals == (1, 1, 1) and ev.outcome == "delivered"
    assert (s.q_p, s.q_s, s.q_e, s.slot_index) == (1, 1, 1, 1)


def _read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_step_reproduces_run_trace(tmp_path):
    p = FIG1.replace(lambda_p=0.5, lambda_s=0.1, f=0.4, beta=0.6)
    path = tmp_path / "t.csv"
    run(p, horizon=3000, burn_in=100, seed=11, trace_path=path)
    rows = _read_trace(path)
    assert rows[0] == ["slot", "q_p", "q_s", "q_ps", "q_e", "action", "outcome"]
    st = NetworkState.empty(11)
    for row in rows[1:]:
        ev = step(st, p)
        assert row == [str(x) for x in ev[:5]] + [ev.action, ev.outcome]
    assert len(rows) == 3001


def test_conservation_and_energy_accounting():
    p = FIG1.replace(lambda_p=0.4, lambda_s=0.1, f=0.7, beta=0.5)
    st = NetworkState.empty(3)
    arr = np.zeros(3, dtype=int)
    dep = {"p": 0, "s": 0, "ps": 0}
    admitted = energy = 0
    for _ in range(20_000):
        ev = step(st, p)
        arr += ev.arrivals
        admitted += ev.admitted
        energy += ev.energy_used
        if ev.outcome in ("delivered", "relayed"):
            dep[{"pu_tx": "p", "pu_tx_decode": "p", "su_own": "s", "su_relay": "ps"}[ev.action]] += 1
    assert st.q_p == arr[0] - dep["p"]
    assert st.q_s == arr[1] - dep["s"]
    assert st.q_ps == admitted - dep["ps"]
    assert st.q_e == arr[2] - energy


def test_report_totals_are_consistent():
    p = FIG1.replace(lambda_p=0.4, lambda_s=0.1, f=0.7, beta=0.5)
    t = run(p, horizon=50_000, burn_in=0, seed=5).totals()
    assert t["slots"] == 50_000
    assert t["admitted"] == t["departed_via_su"]
    assert t["admitted"] <= t["decode_attempts"]
    assert t["energy_consumed"] == t["decode_attempts"] + t["secondary_tx"]
    assert t["energy_consumed"] <= t["arrivals_e"]
    assert t["departed_p"] <= t["arrivals_p"]


def test_dummy_mode_spends_energy_in_every_idle_slot():
    p = FIG1.replace(lambda_p=0.4, lambda_s=0.05, f=0.5, beta=0.5)
    c = run(p, horizon=40_000, burn_in=0, seed=2, dummy_packets=True).counts.sum(axis=0)
    idle_with_energy = c[sim.C_IDLE_S0_E] + c[sim.C_IDLE_S1_E]
    assert c[sim.C_SEC_TX] == idle_with_energy
    assert c[sim.C_CONS_E] == c[sim.C_ATTEMPTS] + idle_with_energy


def test_same_seed_same_counts():
    p = FIG1.replace(lambda_p=0.4, lambda_s=0.1, f=0.5)
    a = run(p, horizon=20_000, burn_in=1000, seed=9)
    b = run(p, horizon=20_000, burn_in=1000, seed=9)
    c = run(p, horizon=20_000, burn_in=1000, seed=10)
    np.testing.assert_array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


def test_full_energy_rate_keeps_battery_nonempty():
    rep = run(FIG1.replace(lambda_p=0.5, lambda_s=0.1, f=1.0, lambda_e=1.0),
              horizon=20_000, burn_in=10, seed=1)
    assert rep.occupancy["e"].value == 1.0


def test_run_argument_checks():
    with pytest.raises(ValueError):
        run(P, horizon=100, burn_in=100)
    with pytest.raises(ValueError):
        run(P, horizon=60, burn_in=20)


def test_verdicts():
    rng = np.random.default_rng(0)
    assert stability_verdict(3 + 0.1 * rng.standard_normal(10)) is Verdict.STABLE
    assert stability_verdict(np.linspace(50, 10, 10)) is Verdict.STABLE
    # linear growth from a burn-in of 10% of the horizon
    assert stability_verdict(np.linspace(15, 95, 10)) is Verdict.UNSTABLE
    assert stability_verdict(np.linspace(1.0, 1.5, 10)) is Verdict.INCONCLUSIVE
    assert stability_verdict(np.full(10, 2.0)) is Verdict.STABLE


def test_ratio_estimate():
    e = ratio_estimate([2, 4, 6], [4, 8, 12])
    assert e == (0.5, 0.0)
    v, se = ratio_estimate([1, 3, 2, 2], [4, 4, 4, 4])
    assert v == 0.5 and se == pytest.approx(np.std([0.25, 0.75, 0.5, 0.5], ddof=1) / 2)
    assert np.isnan(ratio_estimate([0, 0], [0, 0]).value)


def test_rate_checks_on_stable_run():
    p = FIG1.replace(lambda_p=0.3, lambda_s=0.2, f=0.5, beta=0.7)
    rep = run(p, horizon=200_000, burn_in=20_000, seed=4)
    assert all(v is Verdict.STABLE for v in rep.verdict_per_queue.values())
    b = bound_rates(p)
    assert set(empirical_rate_check(rep, b).values()) == {RateCheck.WITHIN}
    assert set(occupancy_check(rep, b).values()) == {RateCheck.WITHIN}


def test_rate_check_refuses_unstable_run():
    p = FIG1.replace(lambda_p=0.3, lambda_s=0.9, f=0.5, beta=0.7)
    rep = run(p, horizon=200_000, burn_in=20_000, seed=4)
    assert rep.verdict_per_queue["s"] is Verdict.UNSTABLE
    with pytest.raises(UnstableRun):
        empirical_rate_check(rep, bound_rates(p))
