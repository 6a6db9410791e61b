"""The driven ARW process, its exact stationary sampler and the IDLA coupling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from . import _kernels as K
from .chains import BaseChain, SleepRates, check_thorough
from .engine import (
    DEFAULT_CAP,
    SLEEPING,
    Configuration,
    InstructionTape,
    sleep_modes,
    stabilize,
    stabilize_idla,
)
from .parallel import fan_out
from .rng import DRIVING, SAMPLER, TAPE, derive, uniform
from .stats import frequencies, tv_distance, tv_radius


@dataclass(frozen=True)
class DrivingSequence:
    """Where the ``t``-th particle is added.

    ``kind`` is one of ``central``, ``uniform``, ``permutation``, ``custom``.
    Randomness comes from ``seed`` only, never from the instruction tapes.
    A ``rule`` callable (custom only) may look at the current configuration;
    such runs fall outside the exact-sampling guarantees and are flagged.
    """

    kind: str
    vertex: int = 0
    sequence: tuple[int, ...] = ()
    seed: int = 0
    rule: Callable[[int, Configuration], int] | None = field(default=None, compare=False)

    @classmethod
    def central(cls, vertex: int) -> DrivingSequence:
        return cls("central", vertex=vertex)

    @classmethod
    def uniform(cls, seed: int) -> DrivingSequence:
        return cls("uniform", seed=seed)

    @classmethod
    def permutation(cls, n: int, seed: int) -> DrivingSequence:
        order = np.random.default_rng(int(seed)).permutation(n)
        return cls("permutation", sequence=tuple(int(x) for x in order), seed=seed)

    @classmethod
    def custom(cls, sequence: Iterable[int] = (), rule=None) -> DrivingSequence:
        return cls("custom", sequence=tuple(int(x) for x in sequence), rule=rule)

    @property
    def in_theorem_scope(self) -> bool:
        return self.rule is None

    def validate(self, n: int) -> None:
        if self.kind not in ("central", "uniform", "permutation", "custom"):
            raise ValueError(f"unknown driving kind {self.kind!r}")
        if self.kind == "central" and not 0 <= self.vertex < n:
            raise ValueError("central vertex outside V")
        if self.kind == "permutation" and sorted(self.sequence) != list(range(n)):
            raise ValueError("permutation driving must list every vertex once")
        if self.kind == "custom" and self.rule is None:
            if not self.sequence:
                raise ValueError("custom driving needs a sequence or a rule")
            if any(not 0 <= x < n for x in self.sequence):
                raise ValueError("custom driving visits a vertex outside V")

    def support(self, n: int) -> set[int]:
        """Vertices visited infinitely often (sequences repeat cyclically)."""
        if self.kind == "central":
            return {self.vertex}
        if self.kind == "uniform":
            return set(range(n))
        if self.kind == "custom" and self.rule is not None:
            return set(range(n))
        return set(self.sequence)

    def is_thorough(self, chain: BaseChain) -> bool:
        return check_thorough(chain, self.support(chain.num_vertices))

    def kernel_args(self, n: int) -> tuple[int, int, np.ndarray]:
        if self.rule is not None:
            raise ValueError("state-dependent driving has no batch form")
        self.validate(n)
        if self.kind == "central":
            return K.DRIVE_CENTRAL, self.vertex, np.zeros(1, dtype=np.int64)
        if self.kind == "uniform":
            return K.DRIVE_UNIFORM, 0, np.zeros(1, dtype=np.int64)
        return K.DRIVE_SEQUENCE, 0, np.asarray(self.sequence, dtype=np.int64)

    @property
    def base_key(self) -> np.uint64:
        return derive(self.seed, DRIVING)

    def vertex_at(self, t: int, n: int, trial: int = 0, config: Configuration | None = None) -> int:
        """Driving vertex at step ``t >= 1``."""
        if self.rule is not None:
            return int(self.rule(t, config))
        if self.kind == "central":
            return self.vertex
        if self.kind == "uniform":
            key = derive(self.seed, DRIVING, trial)
            return min(int(uniform(key, np.int64(t)) * n), n - 1)
        return self.sequence[(t - 1) % len(self.sequence)]

    def describe(self) -> str:
        if self.kind == "central":
            return f"central:{self.vertex}"
        if self.kind == "uniform":
            return f"uniform(seed={self.seed})"
        if self.kind == "permutation":
            return f"permutation(seed={self.seed})"
        return "custom(adaptive)" if self.rule else f"custom(len={len(self.sequence)})"


@dataclass
class StepRecord:
    t: int
    u: int
    increment: list[int]
    config: str
    idla: str


@dataclass
class ProcessTrace:
    chain: str
    rates: str
    driving: str
    seed: int
    trial: int
    initial: str
    steps: list[StepRecord] = field(default_factory=list)
    t_full: int | None = None
    in_theorem_scope: bool = True
    final: Configuration | None = None
    odometer: np.ndarray | None = None
    idla_state: Configuration | None = None
    idla_odometer: np.ndarray | None = None

    def configs(self) -> list[Configuration]:
        return [Configuration.from_string(s.config) for s in self.steps]

    def header(self) -> dict:
        return {
            "chain": self.chain,
            "lambda": self.rates,
            "driving": self.driving,
            "seed": self.seed,
            "trial": self.trial,
            "initial": self.initial,
            "t_full": self.t_full,
            "in_theorem_scope": self.in_theorem_scope,
            "version": __version__,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps(asdict(s), sort_keys=True) for s in self.steps]
        return "\n".join(lines) + "\n"


def _initial(chain: BaseChain, sigma0: Configuration | None) -> Configuration:
    if sigma0 is None:
        return Configuration.empty(chain.num_vertices)
    if len(sigma0) != chain.num_vertices:
        raise ValueError("initial configuration does not match the chain")
    return sigma0.copy()


def _is_full(eta: Configuration) -> bool:
    return bool((eta.values == 1).all())


def run_arw(chain: BaseChain, rates: SleepRates, driving: DrivingSequence, t_max: int, seed: int,
            sigma0: Configuration | None = None, trial: int = 0, fresh_tapes: bool = False,
            policy: str = "fifo") -> ProcessTrace:
    """Advance ``sigma_t = S[sigma_{t-1} + delta_{u_t}]`` for ``t_max`` steps.

    One tape serves the whole run (the cumulative odometer marks the future
    instructions) and the IDLA state ``eta_t`` is stabilized on the same tape
    with its own odometer.  ``t_full`` is the first ``t`` with ``eta_t = 1_V``.
    With ``fresh_tapes`` each step uses new independent instructions instead
    and no coupling is tracked.
    """
    n = chain.num_vertices
    driving.validate(n)
    state = _initial(chain, sigma0)
    tape = InstructionTape.from_seed(chain, rates, seed, trial)
    idla_tape = tape.replay()
    eta = state.copy()
    trace = ProcessTrace(chain.label, rates.describe(), driving.describe(), seed, trial,
                         state.to_string(), in_theorem_scope=driving.in_theorem_scope)
    if not fresh_tapes and _is_full(eta):
        trace.t_full = 0
    for t in range(1, t_max + 1):
        u = driving.vertex_at(t, n, trial, state)
        state = state + Configuration.delta(n, u)
        step_tape = InstructionTape.from_seed(chain, rates, seed, trial, t) if fresh_tapes else tape
        res = stabilize(state, step_tape, policy)
        state = res.config
        if not fresh_tapes:
            eta = stabilize_idla(eta + Configuration.delta(n, u), idla_tape, policy).config
            if trace.t_full is None and _is_full(eta):
                trace.t_full = t
        trace.steps.append(StepRecord(t, u, res.odometer.tolist(), state.to_string(), eta.to_string()))
    trace.final = state
    trace.odometer = tape.consumed.copy()
    trace.idla_state = eta
    trace.idla_odometer = idla_tape.consumed.copy()
    return trace


def run_idla(chain: BaseChain, driving: DrivingSequence, t_max: int, seed: int,
             trial: int = 0) -> tuple[int | None, ProcessTrace]:
    """Pure IDLA from the empty state; returns the fill time (``None`` on timeout)."""
    n = chain.num_vertices
    rates = SleepRates.constant(0.0, n)
    driving.validate(n)
    trace = ProcessTrace(chain.label, "idla", driving.describe(), seed, trial, "." * n,
                         in_theorem_scope=driving.in_theorem_scope)
    tape = InstructionTape.from_seed(chain, rates, seed, trial)
    eta = Configuration.empty(n)
    for t in range(1, t_max + 1):
        u = driving.vertex_at(t, n, trial, eta)
        res = stabilize_idla(eta + Configuration.delta(n, u), tape, "track")
        eta = res.config
        trace.steps.append(StepRecord(t, u, res.odometer.tolist(), eta.to_string(), eta.to_string()))
        if (eta.values >= 1).all():
            trace.t_full = t
            break
    trace.idla_state = eta
    trace.idla_odometer = tape.consumed.copy()
    return trace.t_full, trace


def exact_sample(chain: BaseChain, rates: SleepRates, seed: int, index: int = 0) -> Configuration:
    """A draw from the stationary law: stabilize one particle per site on a fresh tape."""
    tape = InstructionTape(chain, rates, derive(seed, SAMPLER, index))
    return stabilize(Configuration.ones(chain.num_vertices), tape).config


@dataclass
class SampleBatch:
    codes: np.ndarray
    sleepers: np.ndarray
    firings: np.ndarray


def exact_samples(chain: BaseChain, rates: SleepRates, seed: int, count: int,
                  workers: int = 1, cap: int = DEFAULT_CAP) -> SampleBatch:
    """``count`` independent exact samples; sample ``i`` matches ``exact_sample(..., index=i)``."""
    n = chain.num_vertices
    indptr, targets, cum = chain.csr
    codes = np.zeros(count, dtype=np.int64)
    sleepers = np.zeros(count, dtype=np.int64)
    firings = np.zeros(count, dtype=np.int64)
    base = derive(seed, SAMPLER)
    modes = sleep_modes(rates)
    init = np.ones(n, dtype=np.int64)

    def work(first, m):
        K.sample_batch(first, m, base, init, modes, rates.q, indptr, targets, cum, cap,
                       codes[first:first + m], sleepers[first:first + m], firings[first:first + m])

    fan_out(count, work, workers)
    if (firings < 0).any():
        raise RuntimeError("a sample hit the firing cap")
    return SampleBatch(codes, sleepers, firings)


@dataclass
class ProcessBatch:
    times: np.ndarray
    codes: np.ndarray  # [trial, record index]
    sleepers: np.ndarray
    t_full: np.ndarray  # -1 if not full by t_max


def simulate(chain: BaseChain, rates: SleepRates, driving: DrivingSequence, seed: int,
             trials: int, record: Sequence[int], sigma0: Configuration | None = None,
             t_max: int | None = None, coupled: bool = True, workers: int = 1,
             cap: int = DEFAULT_CAP) -> ProcessBatch:
    """Many independent single-tape traces; trial ``i`` replays ``run_arw(..., trial=i)``."""
    n = chain.num_vertices
    record = np.asarray(sorted(record), dtype=np.int64)
    if t_max is None:
        t_max = int(record[-1]) if len(record) else 0
    if len(record) and record[-1] > t_max:
        raise ValueError("record times exceed t_max")
    dmode, dparam, dseq = driving.kernel_args(n)
    indptr, targets, cum = chain.csr
    s0 = _initial(chain, sigma0).values
    codes = np.zeros((trials, len(record)), dtype=np.int64)
    sleepers = np.zeros((trials, len(record)), dtype=np.int64)
    tfull = np.zeros(trials, dtype=np.int64)
    tape_base = derive(seed, TAPE)
    modes = sleep_modes(rates)

    def work(first, m):
        K.process_batch(first, m, tape_base, driving.base_key, s0, modes, rates.q, indptr,
                        targets, cum, dmode, dparam, dseq, record, t_max, coupled, cap,
                        codes[first:first + m], sleepers[first:first + m], tfull[first:first + m])

    fan_out(trials, work, workers)
    if (tfull == -2).any():
        raise RuntimeError("a trace hit the firing cap")
    return ProcessBatch(record, codes, sleepers, tfull)


def idla_fill_times(chain: BaseChain, driving: DrivingSequence, seed: int, trials: int,
                    t_max: int, mask: np.ndarray | None = None, workers: int = 1) -> np.ndarray:
    """Fill times of pure IDLA from empty (``-1`` when not full by ``t_max``).

    ``mask`` restricts the target set, e.g. the sink neighbours of the wired tree.
    """
    n = chain.num_vertices
    dmode, dparam, dseq = driving.kernel_args(n)
    indptr, targets, cum = chain.csr
    if mask is None:
        mask = np.ones(n, dtype=np.bool_)
    out = np.zeros(trials, dtype=np.int64)
    tape_base = derive(seed, TAPE)

    def work(first, m):
        K.idla_fill_batch(first, m, tape_base, driving.base_key, indptr, targets, cum,
                          dmode, dparam, dseq, np.asarray(mask, dtype=np.bool_), t_max,
                          out[first:first + m])

    fan_out(trials, work, workers)
    return out


def sampling_cost(chain: BaseChain) -> float:
    """Sum over ``v`` of the expected time for a ``P``-walk from ``v`` to hit the sink."""
    n = chain.num_vertices
    h = np.linalg.solve(np.eye(n) - chain.substochastic, np.ones(n))
    return float(h.sum())


def is_recurrent(config: Configuration, rates: SleepRates) -> bool:
    """Membership in the recurrent class: empty wherever ``lam = 0``, asleep wherever ``lam = inf``."""
    if not config.is_sleeping:
        raise ValueError("recurrence is defined for sleeping configurations")
    lam = np.asarray(rates.lam)
    vals = config.values
    return bool((vals[lam == 0] == 0).all() and (vals[np.isinf(lam)] == SLEEPING).all())


@dataclass
class StationarityReport:
    t: int
    samples: int
    conditioned: int
    tv: float
    radius: float
    inconclusive: bool
    law: dict[int, float]
    reference: dict[int, float]


def strong_stationarity_check(chain: BaseChain, rates: SleepRates, driving: DrivingSequence,
                              t: int, num_samples: int, seed: int,
                              sigma0: Configuration | None = None,
                              reference: dict[int, float] | None = None,
                              min_conditioned: int = 1000, workers: int = 1) -> StationarityReport:
    """Compare the law of ``sigma_t`` on ``{T_full <= t}`` with exact samples.

    Traces with ``T_full > t`` are discarded.  ``reference`` overrides the
    empirical stationary law (e.g. with an exact one).
    """
    if chain.num_vertices > 12:
        raise ValueError("empirical laws over {0,s}^V need a small chain")
    batch = simulate(chain, rates, driving, seed, num_samples, [t], sigma0, workers=workers)
    keep = (batch.t_full >= 0) & (batch.t_full <= t)
    cond = batch.codes[keep, 0]
    n_ref = None
    if reference is None:
        ref = exact_samples(chain, rates, seed, num_samples, workers)
        reference = frequencies(ref.codes)
        n_ref = num_samples
    states = 2**chain.num_vertices
    if len(cond) < min_conditioned:
        return StationarityReport(t, num_samples, int(len(cond)), float("nan"), float("nan"),
                                  True, {}, reference)
    law = frequencies(cond)
    return StationarityReport(t, num_samples, int(len(cond)), tv_distance(law, reference),
                              tv_radius(states, len(cond), n_ref), False, law, reference)
