from __future__ import annotations

import json
import math

import numpy as np
import pytest

from arwsim import exact
from arwsim.chains import SINK, SleepRates, build_ball, build_interval, from_transitions
from arwsim.checks import coupling_check, recurrence_check
from arwsim.engine import Configuration, InstructionTape, stabilize
from arwsim.process import (
    DrivingSequence,
    exact_sample,
    exact_samples,
    idla_fill_times,
    is_recurrent,
    run_arw,
    run_idla,
    sampling_cost,
    simulate,
    strong_stationarity_check,
)
from arwsim.stats import frequencies, tv_distance

PI = [float(x) for x in exact.stationary_law(build_interval(2), [1, 1, 1])]


def _rates(chain, lam):
    return SleepRates.constant(lam, chain.num_vertices)


def test_sampling_cost():
    assert sampling_cost(build_interval(1)) == pytest.approx(1.0)
    assert sampling_cost(build_interval(2)) == pytest.approx(10.0)
    twin = from_transitions([[(SINK, 0.5), (1, 0.5)], [(0, 0.5), (SINK, 0.5)]] * 1)
    two = from_transitions([[(SINK, 0.5), (1, 0.5)], [(0, 0.5), (SINK, 0.5)],
                            [(SINK, 0.5), (3, 0.5)], [(2, 0.5), (SINK, 0.5)]])
    assert sampling_cost(two) == pytest.approx(2 * sampling_cost(twin))


def test_exact_sample_extremes():
    c = build_ball(2, 3)
    assert exact_sample(c, _rates(c, 0.0), 1) == Configuration.empty(25)
    assert exact_sample(c, _rates(c, math.inf), 1) == Configuration.sleeping(25)


def test_batch_samples_replay_single_draws():
    c = build_interval(3)
    r = _rates(c, 1.0)
    batch = exact_samples(c, r, 42, 50)
    for i in (0, 7, 49):
        assert batch.codes[i] == exact_sample(c, r, 42, i).code


def test_exact_samples_match_exact_law():
    c = build_interval(2)
    batch = exact_samples(c, _rates(c, 1.0), 3, 50_000)
    emp = frequencies(batch.codes)
    assert tv_distance(emp, dict(enumerate(PI))) < 0.015


def test_single_vertex_one_step():
    c = build_interval(1)
    batch = simulate(c, _rates(c, 1.0), DrivingSequence.central(0), 5, 20_000, [1], coupled=False)
    p = (batch.codes[:, 0] == 1).mean()
    assert abs(p - 0.5) < 4 * math.sqrt(0.25 / 20_000)


def test_simulate_replays_run_arw():
    c = build_interval(2)
    r = _rates(c, 1.0)
    d = DrivingSequence.uniform(9)
    times = list(range(11))
    batch = simulate(c, r, d, 5, 12, times, t_max=10)
    for i in range(12):
        tr = run_arw(c, r, d, 10, 5, trial=i)
        codes = [Configuration([0, 0, 0]).code] + [Configuration.from_string(s.config).code for s in tr.steps]
        assert batch.codes[i].tolist() == codes
        expected = -1 if tr.t_full is None else tr.t_full
        assert batch.t_full[i] == expected


def test_policy_does_not_change_trace():
    c = build_interval(3)
    r = _rates(c, 0.5)
    d = DrivingSequence.central(2)
    a = run_arw(c, r, d, 15, 4, policy="fifo")
    b = run_arw(c, r, d, 15, 4, policy="lowest")
    assert [s.config for s in a.steps] == [s.config for s in b.steps]
    assert [s.increment for s in a.steps] == [s.increment for s in b.steps]


def test_batch_equivalence():
    c = build_interval(3)
    r = _rates(c, 1.0)
    d = DrivingSequence.permutation(5, 2)
    s0 = Configuration.from_string("s..s.")
    tr = run_arw(c, r, d, 12, 8, sigma0=s0, trial=3)
    phi = np.zeros(5, dtype=np.int64)
    for step in tr.steps:
        phi[step.u] += 1
        once = stabilize(s0 + Configuration(phi), InstructionTape.from_seed(c, r, 8, 3)).config
        assert once.to_string() == step.config


def test_coupling_identity_random_traces():
    assert all(r["ok"] for r in coupling_check(60, seed=3))


def test_t_full_monotone_and_idla_full_after():
    c = build_interval(3)
    tr = run_arw(c, _rates(c, 1.0), DrivingSequence.central(2), 40, 1)
    assert tr.t_full is not None
    for s in tr.steps:
        if s.t >= tr.t_full:
            assert s.idla == "11111"
        else:
            assert s.idla != "11111"


def test_fresh_tape_variant_same_law():
    c = build_interval(2)
    r = _rates(c, 1.0)
    d = DrivingSequence.central(1)
    s0 = Configuration.from_string("...")
    n = 4000
    fresh = [Configuration.from_string(run_arw(c, r, d, 3, 6, s0, trial=i, fresh_tapes=True).steps[-1].config).code
             for i in range(n)]
    law = exact.evolve(c, [1, 1, 1], (0, 0, 0), [1, 1, 1])[-1]
    assert tv_distance(frequencies(fresh), {i: float(p) for i, p in enumerate(law)}) < 0.05


def test_permutation_driving_visits_each_once():
    d = DrivingSequence.permutation(7, 3)
    assert sorted(d.sequence) == list(range(7))
    assert [d.vertex_at(t, 7) for t in range(1, 8)] == list(d.sequence)
    with pytest.raises(ValueError):
        DrivingSequence("permutation", sequence=(0, 0, 1)).validate(3)
    with pytest.raises(ValueError):
        DrivingSequence.central(5).validate(3)


def test_uniform_driving_independent_of_tape_seed():
    d = DrivingSequence.uniform(4)
    seq = [d.vertex_at(t, 9, trial=2) for t in range(1, 50)]
    assert seq == [d.vertex_at(t, 9, trial=2) for t in range(1, 50)]
    assert set(seq) <= set(range(9))
    assert DrivingSequence.uniform(4).base_key != InstructionTape.from_seed(build_interval(5), _rates(build_interval(5), 1), 4).key


def test_adaptive_driving_flagged():
    c = build_interval(2)
    d = DrivingSequence.custom(rule=lambda t, cfg: int(np.argmin(cfg.values)))
    tr = run_arw(c, _rates(c, 1.0), d, 5, 1)
    assert not tr.in_theorem_scope
    assert not json.loads(tr.to_jsonl().splitlines()[0])["in_theorem_scope"]
    with pytest.raises(ValueError):
        simulate(c, _rates(c, 1.0), d, 1, 4, [1])


def test_trace_export():
    c = build_interval(2)
    tr = run_arw(c, _rates(c, 1.0), DrivingSequence.central(1), 4, 3)
    lines = tr.to_jsonl().splitlines()
    head = json.loads(lines[0])
    assert {"chain", "lambda", "driving", "seed", "version"} <= set(head)
    assert len(lines) == 5
    assert json.loads(lines[1])["t"] == 1


def test_run_idla():
    one = build_interval(1)
    t_full, _ = run_idla(one, DrivingSequence.central(0), 10, 1)
    assert t_full == 1
    c = build_ball(2, 3)
    for trial in range(5):
        t_full, _ = run_idla(c, DrivingSequence.uniform(2), 2000, 1, trial)
        assert t_full is not None and t_full >= c.num_vertices


def test_idla_fill_time_law():
    c = build_interval(2)
    times = idla_fill_times(c, DrivingSequence.central(1), 2, 30_000, 20)
    assert (times >= 3).all()
    p3 = (times == 3).mean()
    assert abs(p3 - 2 / 3) < 4 * math.sqrt(2 / 9 / 30_000)


def test_run_idla_matches_batch():
    c = build_ball(2, 2.5)
    d = DrivingSequence.uniform(5)
    times = idla_fill_times(c, d, 8, 6, 500)
    for i in range(6):
        t_full, _ = run_idla(c, d, 500, 8, trial=i)
        assert times[i] == t_full


def test_fill_up_eventually():
    c = build_ball(2, 4)
    times = idla_fill_times(c, DrivingSequence.central(c.origin()), 1, 300, 2000)
    assert (times < 0).mean() < 0.01


def test_workers_do_not_change_results():
    c = build_interval(2)
    r = _rates(c, 1.0)
    d = DrivingSequence.uniform(1)
    a = simulate(c, r, d, 7, 5000, [3, 8], workers=1)
    b = simulate(c, r, d, 7, 5000, [3, 8], workers=3)
    assert np.array_equal(a.codes, b.codes) and np.array_equal(a.t_full, b.t_full)
    assert np.array_equal(exact_samples(c, r, 2, 5000).codes, exact_samples(c, r, 2, 5000, workers=4).codes)


def test_is_recurrent():
    lam1 = SleepRates.constant(1.0, 3)
    assert is_recurrent(Configuration.from_string("s.s"), lam1)
    mixed = SleepRates((0.0, 1.0, math.inf))
    assert not is_recurrent(Configuration.from_string("s.s"), mixed)
    assert not is_recurrent(Configuration.from_string("...") , mixed)
    assert is_recurrent(Configuration.from_string(".ss"), mixed)
    with pytest.raises(ValueError):
        is_recurrent(Configuration.from_string("1.."), mixed)


def test_recurrent_class_closed():
    assert all(r["ok"] for r in recurrence_check(60, seed=4))


def test_sst_single_vertex():
    c = build_interval(1)
    rep = strong_stationarity_check(c, _rates(c, 1.0), DrivingSequence.central(0), 3, 20_000, 1)
    assert abs(rep.law.get(1, 0) - 0.5) < 0.02


def test_sst_interval():
    c = build_interval(2)
    rep = strong_stationarity_check(c, _rates(c, 1.0), DrivingSequence.central(1), 6, 100_000, 2,
                                    reference={i: p for i, p in enumerate(PI)})
    assert not rep.inconclusive
    assert rep.tv <= 3 * rep.radius


def test_sst_inconclusive_when_rare():
    c = build_interval(2)
    rep = strong_stationarity_check(c, _rates(c, 1.0), DrivingSequence.central(1), 2, 500, 2)
    assert rep.inconclusive and rep.conditioned == 0
