import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfodamp.metrics import (EVAL_REPORT_HEADER, EpisodeRecord, damping_report,
                             episodes_to_threshold, mean_overall_speed, moving_average_return,
                             overall_speed, read_training_log, smoothed_success, success_rate,
                             write_eval_report, write_training_log)


def recs(successes, returns=None):
    returns = returns if returns is not None else [0.0] * len(successes)
    return [EpisodeRecord(k, float(r), bool(s), 0.0) for k, (s, r) in enumerate(zip(successes, returns))]


# ------------------------------------------------------------- success rate

def test_success_rate_examples():
    assert success_rate(recs([1] * 20), 10) == 1.0
    assert success_rate(recs([1, 0] * 10), 10) == 0.5
    with pytest.raises(ValueError):
        success_rate(recs([1] * 5), 6)
    with pytest.raises(ValueError):
        success_rate(recs([1] * 5), 0)


# ------------------------------------------------------------- moving average

def test_moving_average_examples():
    assert np.array_equal(moving_average_return(recs([1] * 7, [-3.0] * 7)), [-3.0] * 7)
    assert list(moving_average_return(recs([1, 1], [0, -10]), 5)) == [0.0, -5.0]


@settings(max_examples=50, deadline=None)
@given(xs=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), w=st.integers(1, 12))
def test_moving_average_matches_loop(xs, w):
    got = moving_average_return(recs([1] * len(xs), xs), w)
    want = [sum(xs[max(0, k - w + 1):k + 1]) / len(xs[max(0, k - w + 1):k + 1]) for k in range(len(xs))]
    assert np.allclose(got, want, rtol=1e-9, atol=1e-9)
    assert np.all(got >= min(xs) - 1e-9) and np.all(got <= max(xs) + 1e-9)


# ------------------------------------------------------------- damping report

def test_flat_trace():
    t = np.arange(0, 20.01, 0.01)
    rep = damping_report(t, np.ones((len(t), 4)), 1.1)
    assert rep.peak_deviation == 0 and rep.settling_time == 1.1 and rep.tail_energy == 0
    assert rep.settled


def test_decaying_sinusoid_settles_at_envelope_crossing():
    dt = 0.01
    t = np.arange(0, 20 + dt / 2, dt)
    # envelope 0.01 exp(-s t) reaches 1e-3 at t* = 5.25 s, a peak of |sin(2 pi t)|
    s = math.log(10) / 5.25
    w = 1 + 0.01 * np.exp(-s * t) * np.sin(2 * math.pi * t)
    rep = damping_report(t, w, 0.0)
    assert rep.settled
    assert abs(rep.settling_time - 5.25) <= dt + 1e-9
    assert rep.peak_deviation == pytest.approx(0.01 * math.exp(-s * 0.25), rel=5e-3)


def test_undamped_sinusoid_tail_energy():
    t = np.arange(0, 20.001, 0.001)
    a = 0.004
    w = 1 + a * np.sin(2 * math.pi * 0.7 * t)
    rep = damping_report(t, w[:, None], 1.0)
    assert not rep.settled and rep.settling_time == math.inf
    assert rep.tail_energy == pytest.approx(a * a * 5 / 2, rel=0.02)


def test_sync_loss_and_short_trace():
    t = np.linspace(0, 10, 101)
    rep = damping_report(t, np.ones(101), 1.0, sync_lost=True)
    assert rep.tail_energy == math.inf and not rep.settled
    with pytest.raises(ValueError):
        damping_report(t[:20], np.ones(20), 0.0)


def test_tail_energy_zero_iff_tail_synchronous():
    t = np.arange(0, 10.01, 0.01)
    w = np.ones((len(t), 2))
    w[100, 0] = 1.01  # disturbance before the tail window only
    assert damping_report(t, w, 0.0).tail_energy == 0.0
    w[-3, 1] = 1.0001
    assert damping_report(t, w, 0.0).tail_energy > 0.0


# ------------------------------------------------------------- learning speed

def test_single_jump_speed():
    assert overall_speed([0, 0, 0, 1, 1]) == 1.0


def test_linear_climb_speed_and_threshold():
    n = 40
    curve = np.arange(n + 1) / n
    assert overall_speed(curve) == pytest.approx(n)
    assert episodes_to_threshold(curve, 0.8) == int(0.8 * n)


def test_flat_curve_speed_is_zero():
    assert overall_speed([0.5] * 10) == 0.0
    assert episodes_to_threshold([0.1] * 10, 0.8) is None
    with pytest.raises(ValueError):
        overall_speed([1.0])


def test_mean_overall_speed_uses_full_window():
    # first 60 episodes fail, then everything succeeds
    r = recs([0] * 60 + [1] * 100)
    v, ep = mean_overall_speed(r, 0.8, window=50)
    assert ep == 60 + 40 - 1
    assert v == pytest.approx(50.0)
    _, ep_all = mean_overall_speed(recs([1] * 80), 0.8, window=50)
    assert ep_all == 49


# ------------------------------------------------------------- persistence

def test_training_log_round_trip_recomputes_identically(tmp_path):
    rng = np.random.default_rng(0)
    records = [EpisodeRecord(k, float(rng.normal(-300, 50)), bool(rng.random() < 0.8),
                             float(rng.normal()), 0.0) for k in range(120)]
    p = tmp_path / "training_log.csv"
    write_training_log(p, records)
    assert p.read_text().splitlines()[0] == "episode,return,success,initial_q,wall_time_s"
    back = read_training_log(p)
    assert back == records
    assert np.array_equal(moving_average_return(back), moving_average_return(records))
    assert np.array_equal(smoothed_success(back), smoothed_success(records))
    assert mean_overall_speed(back) == mean_overall_speed(records)


def test_eval_report_sorted(tmp_path):
    rows = [("fault", "satellite", "rl", 1, True, 0.01, 3.2, 1e-6),
            ("fault", "fiber_optic", "pid", 0, False, 0.2, math.inf, math.inf)]
    p = tmp_path / "eval_report.csv"
    write_eval_report(p, rows)
    lines = p.read_text().splitlines()
    assert lines[0] == EVAL_REPORT_HEADER
    assert lines[1] == "fault,fiber_optic,pid,0,0,0.2,inf,inf"
    assert lines[2].startswith("fault,satellite,rl,1,1,")
