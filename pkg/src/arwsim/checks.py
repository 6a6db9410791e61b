"""Randomized invariant suites for the engine and the process."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import BaseChain, SleepRates, random_chain
from .engine import Configuration, InstructionTape, stabilize, stabilize_idla
from .process import DrivingSequence, is_recurrent, run_arw

LAMBDAS = (0.0, 0.3, 1.0, 3.0, math.inf)


def random_rates(rng: np.random.Generator, n: int, choices=LAMBDAS) -> SleepRates:
    if rng.random() < 0.5:
        return SleepRates.constant(choices[int(rng.integers(len(choices)))], n)
    return SleepRates(tuple(float(choices[i]) for i in rng.integers(len(choices), size=n)))


def random_config(rng: np.random.Generator, n: int, max_particles: int, sleepers: bool = True) -> Configuration:
    vals = np.zeros(n, dtype=np.int64)
    for _ in range(int(rng.integers(0, max_particles + 1))):
        v = int(rng.integers(n))
        vals[v] = 2 if vals[v] == -1 else vals[v] + 1
    if sleepers:
        lone = (vals == 0) & (rng.random(n) < 0.3)
        vals[lone] = -1
    return Configuration(vals)


@dataclass
class Instance:
    chain: BaseChain
    rates: SleepRates
    config: Configuration
    seed: int

    def row(self) -> dict:
        return {"vertices": self.chain.num_vertices, "lambda": self.rates.describe(),
                "config": self.config.to_string(), "tape_seed": self.seed}


def random_instance(rng: np.random.Generator, max_vertices: int = 8) -> Instance:
    n = int(rng.integers(1, max_vertices + 1))
    chain = random_chain(rng, n)
    return Instance(chain, random_rates(rng, n), random_config(rng, n, 2 * n),
                    int(rng.integers(2**62)))


def abelian_check(trials: int, seed: int, policies=("lowest", "highest")) -> list[dict]:
    """Stabilize random instances under two firing orders on one tape."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(trials):
        inst = random_instance(rng)
        a = stabilize(inst.config, InstructionTape.from_seed(inst.chain, inst.rates, inst.seed), policies[0])
        b = stabilize(inst.config, InstructionTape.from_seed(inst.chain, inst.rates, inst.seed), policies[1])
        match = a.config == b.config and np.array_equal(a.odometer, b.odometer)
        rows.append({"instance": i, **inst.row(), "final": a.config.to_string(),
                     "odometer_total": int(a.odometer.sum()), "match": bool(match)})
    return rows


def monotonicity_check(trials: int, seed: int) -> list[dict]:
    """A truncated legal execution never exceeds the complete odometer."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(trials):
        inst = random_instance(rng)
        full = stabilize(inst.config, InstructionTape.from_seed(inst.chain, inst.rates, inst.seed), "lowest")
        total = int(full.odometer.sum())
        cut = int(rng.integers(0, total + 1))
        policy = ("lowest", "highest", "fifo", "track")[i % 4]
        part = stabilize(inst.config, InstructionTape.from_seed(inst.chain, inst.rates, inst.seed),
                         policy, max_firings=cut)
        ok = bool((part.odometer <= full.odometer).all())
        rows.append({"instance": i, **inst.row(), "cut": cut, "total": total, "ok": ok})
    return rows


def coupling_check(trials: int, seed: int, max_vertices: int = 8, max_t: int = 30) -> list[dict]:
    """``sigma_t`` equals resumed stabilization of ``eta_t`` on the tape forked at the
    IDLA odometer, at every step of random traces."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(trials):
        n = int(rng.integers(1, max_vertices + 1))
        chain = random_chain(rng, n)
        rates = random_rates(rng, n)
        s0 = random_config(rng, n, 0)
        driving = DrivingSequence.custom(rng.integers(n, size=int(rng.integers(1, 2 * n + 1))))
        t_max = int(rng.integers(1, max_t + 1))
        tseed = int(rng.integers(2**62))
        tape = InstructionTape.from_seed(chain, rates, tseed)
        idla = tape.replay()
        state, eta = s0.copy(), s0.copy()
        ok = True
        for t in range(1, t_max + 1):
            bump = Configuration.delta(n, driving.vertex_at(t, n))
            state = stabilize(state + bump, tape).config
            eta = stabilize_idla(eta + bump, idla).config
            resumed = stabilize(eta, tape.fork(idla.consumed)).config
            batch = stabilize(s0 + _sum_deltas(n, driving, t), InstructionTape.from_seed(chain, rates, tseed)).config
            if resumed != state or batch != state:
                ok = False
                break
        rows.append({"trace": i, "vertices": n, "lambda": rates.describe(), "steps": t_max, "ok": ok})
    return rows


def _sum_deltas(n: int, driving: DrivingSequence, t: int) -> Configuration:
    vals = np.zeros(n, dtype=np.int64)
    for s in range(1, t + 1):
        vals[driving.vertex_at(s, n)] += 1
    return Configuration(vals)


def recurrence_check(trials: int, seed: int, max_vertices: int = 8, t_max: int = 50) -> list[dict]:
    """Traces started in the recurrent class stay there (rates mixing 0 and inf)."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(trials):
        n = int(rng.integers(2, max_vertices + 1))
        chain = random_chain(rng, n)
        lam = list(rng.choice(np.array(LAMBDAS), size=n))
        lam[0], lam[-1] = 0.0, math.inf
        rates = SleepRates(tuple(float(x) for x in lam))
        vals = np.where(rng.random(n) < 0.5, -1, 0)
        vals[np.asarray(rates.lam) == 0] = 0
        vals[np.isinf(rates.lam)] = -1
        s0 = Configuration(vals)
        driving = DrivingSequence.custom(rng.permutation(n))
        trace = run_arw(chain, rates, driving, t_max, int(rng.integers(2**62)), sigma0=s0)
        ok = is_recurrent(s0, rates) and all(is_recurrent(c, rates) for c in trace.configs())
        rows.append({"trace": i, "vertices": n, "lambda": rates.describe(), "steps": t_max, "ok": bool(ok)})
    return rows
