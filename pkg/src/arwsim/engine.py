"""Activated random walk with quenched instructions.

Site values follow the order ``0 < s < 1 < 2 < ...`` and are stored as
integers: ``EMPTY = 0``, ``SLEEPING = -1``, ``k >= 1`` active particles.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels as K
from .chains import SINK, BaseChain, SleepRates
from .rng import TAPE, derive, to_u64, uniform, vertex_key

EMPTY = 0
SLEEPING = -1

POLICIES = {"lowest": K.LOWEST, "highest": K.HIGHEST, "fifo": K.FIFO, "track": K.TRACK}
DEFAULT_CAP = 10**10


class IllegalFiring(ValueError):
    pass


class StabilizationError(RuntimeError):
    pass


def extended_add(a: int, b: int) -> int:
    """Sum of two site values: ``0 + s = s``, ``n + s = n + 1``, ``s + s = 2``."""
    if a == SLEEPING and b == SLEEPING:
        return 2
    if a == SLEEPING:
        return SLEEPING if b == EMPTY else b + 1
    if b == SLEEPING:
        return SLEEPING if a == EMPTY else a + 1
    return a + b


def particles(x: int) -> int:
    return 1 if x == SLEEPING else x


class Configuration:
    """Per-vertex site values; thin wrapper over an ``int64`` array."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[int]):
        arr = np.array(values, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("configuration must be one-dimensional")
        if (arr < SLEEPING).any():
            raise ValueError("site values must be >= -1 (sleeping)")
        self.values = arr

    @classmethod
    def empty(cls, n: int) -> Configuration:
        return cls(np.zeros(n, dtype=np.int64))

    @classmethod
    def ones(cls, n: int) -> Configuration:
        return cls(np.ones(n, dtype=np.int64))

    @classmethod
    def sleeping(cls, n: int) -> Configuration:
        return cls(np.full(n, SLEEPING, dtype=np.int64))

    @classmethod
    def delta(cls, n: int, v: int, k: int = 1) -> Configuration:
        arr = np.zeros(n, dtype=np.int64)
        arr[v] = k
        return cls(arr)

    @classmethod
    def from_code(cls, code: int, n: int) -> Configuration:
        """Sleeping configuration whose sleepers are the set bits of ``code``."""
        return cls([SLEEPING if (code >> i) & 1 else EMPTY for i in range(n)])

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, v: int) -> int:
        return int(self.values[v])

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __add__(self, other: Configuration) -> Configuration:
        a, b = self.values, other.values
        out = a + b
        sa, sb = a == SLEEPING, b == SLEEPING
        out[sa & sb] = 2
        out[sa & (b == EMPTY)] = SLEEPING
        out[sb & (a == EMPTY)] = SLEEPING
        out[sa & (b > 0)] = b[sa & (b > 0)] + 1
        out[sb & (a > 0)] = a[sb & (a > 0)] + 1
        return Configuration(out)

    def copy(self) -> Configuration:
        return Configuration(self.values.copy())

    @property
    def total(self) -> int:
        return int(np.where(self.values == SLEEPING, 1, self.values).sum())

    @property
    def active(self) -> int:
        return int(self.values[self.values > 0].sum())

    @property
    def asleep(self) -> int:
        return int((self.values == SLEEPING).sum())

    @property
    def is_sleeping(self) -> bool:
        return not (self.values > 0).any()

    @property
    def code(self) -> int:
        """Bitmask of sleepers; meaningful for sleeping configurations."""
        return sum(1 << i for i in np.flatnonzero(self.values == SLEEPING).tolist())

    def to_string(self) -> str:
        """Compact form: ``.`` empty, ``s`` sleeping, digits, ``(k)`` for ``k >= 10``."""
        parts = []
        for x in self.values.tolist():
            if x == EMPTY:
                parts.append(".")
            elif x == SLEEPING:
                parts.append("s")
            elif x < 10:
                parts.append(str(x))
            else:
                parts.append(f"({x})")
        return "".join(parts)

    @classmethod
    def from_string(cls, text: str) -> Configuration:
        vals = []
        for tok in re.findall(r"\(\d+\)|[.s0-9]", text):
            if tok == ".":
                vals.append(EMPTY)
            elif tok == "s":
                vals.append(SLEEPING)
            else:
                vals.append(int(tok.strip("()")))
        if "".join(re.findall(r"\(\d+\)|[.s0-9]", text)) != text:
            raise ValueError(f"malformed configuration string {text!r}")
        return cls(vals)

    def __repr__(self) -> str:
        return f"Configuration({self.to_string()!r})"


@dataclass(frozen=True)
class Instruction:
    target: int | None  # None means Sleep; SINK for the sink

    @property
    def is_sleep(self) -> bool:
        return self.target is None

    def __repr__(self) -> str:
        if self.target is None:
            return "Sleep"
        return "Step(sink)" if self.target == SINK else f"Step({self.target})"


SLEEP = Instruction(None)


def sleep_modes(rates: SleepRates) -> np.ndarray:
    lam = np.asarray(rates.lam, dtype=np.float64)
    return np.where(lam == 0, 0, np.where(np.isinf(lam), 2, 1)).astype(np.int64)


@dataclass
class InstructionTape:
    """Quenched instructions for one simulation unit.

    Instruction ``n`` at ``v`` is a pure function of ``(key, v, n + base[v])``.
    ``consumed`` counts what executions on this tape have used so far, so
    stabilizing again continues with the future instructions.
    """

    chain: BaseChain
    rates: SleepRates
    key: np.uint64
    base: np.ndarray = field(default=None)
    consumed: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.chain.num_vertices
        if len(self.rates) != n:
            raise ValueError("sleep rates must have one entry per vertex")
        self.key = to_u64(self.key)
        if self.base is None:
            self.base = np.zeros(n, dtype=np.int64)
        if self.consumed is None:
            self.consumed = np.zeros(n, dtype=np.int64)

    @classmethod
    def from_seed(cls, chain: BaseChain, rates: SleepRates, seed: int, *stream: int) -> InstructionTape:
        return cls(chain, rates, derive(seed, TAPE, *stream))

    @property
    def modes(self) -> np.ndarray:
        return sleep_modes(self.rates)

    def stream_seed(self, v: int) -> int:
        return int(vertex_key(self.key, np.int64(v)))

    def raw(self, v: int, n: int) -> int:
        """Kernel code of instruction ``n`` at ``v`` relative to ``base``."""
        indptr, targets, cum = self.chain.csr
        return int(K.instruction(self.key, v, n + int(self.base[v]), self.modes[v],
                                 self.rates.q[v], indptr, targets, cum))

    def instruction(self, v: int, n: int) -> Instruction:
        code = self.raw(v, n)
        return SLEEP if code == K.SLEEP else Instruction(code)

    def uniform(self, v: int, n: int) -> float:
        return float(uniform(vertex_key(self.key, np.int64(v)), np.int64(n + int(self.base[v]))))

    def fork(self, offset: np.ndarray | None = None) -> InstructionTape:
        """Tape whose instruction ``(v, n)`` is this tape's ``(v, n + offset[v])``."""
        return tape_fork(self, offset)

    def replay(self) -> InstructionTape:
        """Same instructions, consumption reset."""
        return InstructionTape(self.chain, self.rates, self.key, self.base.copy())


def tape_fork(tape: InstructionTape, offset: np.ndarray | None = None) -> InstructionTape:
    off = np.zeros(tape.chain.num_vertices, dtype=np.int64) if offset is None else np.asarray(offset, dtype=np.int64)
    if (off < 0).any():
        raise ValueError("tape offsets must be non-negative")
    return InstructionTape(tape.chain, tape.rates, tape.key, tape.base + off)


class Stabilized(NamedTuple):
    config: Configuration
    odometer: np.ndarray
    absorbed: int
    complete: bool = True


def _run(config: Configuration, tape: InstructionTape, policy: str, idla: bool,
         cap: int, max_firings: int | None) -> Stabilized:
    if len(config) != tape.chain.num_vertices:
        raise ValueError("configuration size does not match the chain")
    try:
        pol = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}; choose from {sorted(POLICIES)}") from None
    indptr, targets, cum = tape.chain.csr
    state = config.values.copy()
    odo = np.zeros(len(state), dtype=np.int64)
    offset = tape.base + tape.consumed
    budget = -1 if max_firings is None else int(max_firings)
    firings, absorbed, status = K.stabilize_kernel(
        state, odo, offset, tape.key, tape.modes, tape.rates.q, indptr, targets, cum,
        pol, idla, int(cap), budget,
    )
    tape.consumed += odo
    if status == K.CAPPED:
        raise StabilizationError(
            f"no stabilization within {cap} firings "
            f"(active particles left: {int(state[state > 0].sum())})"
        )
    return Stabilized(Configuration(state), odo, int(absorbed), status == K.COMPLETE)


def stabilize(config: Configuration, tape: InstructionTape, policy: str = "fifo",
              cap: int = DEFAULT_CAP, max_firings: int | None = None) -> Stabilized:
    """ARW stabilization of ``config`` using the tape's unconsumed instructions.

    ``max_firings`` truncates the execution, giving a legal but possibly
    incomplete one (``complete`` is then ``False`` unless it happened to finish).
    """
    return _run(config, tape, policy, False, cap, max_firings)


def stabilize_idla(config: Configuration, tape: InstructionTape, policy: str = "fifo",
                   cap: int = DEFAULT_CAP, max_firings: int | None = None) -> Stabilized:
    """Fire only sites holding two or more particles; sleep instructions are no-ops.

    The odometer indexes the same tape, so ``stabilize(out, tape.fork(odo))``
    completes the ARW stabilization.  With infinite sleep rates the tape's
    alternating instructions move one particle per two firings.
    """
    return _run(config, tape, policy, True, cap, max_firings)


def fire(config: Configuration, v: int, tape: InstructionTape) -> Configuration:
    """Fire ``v`` once, consuming its next instruction."""
    if config[v] < 1:
        raise IllegalFiring(f"vertex {v} holds no active particle ({config.to_string()})")
    ins = tape.instruction(v, int(tape.consumed[v]))
    tape.consumed[v] += 1
    out = config.values.copy()
    if ins.is_sleep:
        out[v] = extended_add(int(out[v]) - 1, SLEEPING)
    else:
        out[v] -= 1
        if ins.target != SINK:
            out[ins.target] = extended_add(int(out[ins.target]), 1)
    return Configuration(out)


def verify_abelian(config: Configuration, chain: BaseChain, rates: SleepRates, seed: int,
                   policies: tuple[str, str] = ("lowest", "highest")) -> bool:
    """Stabilize on two replays of one tape with different firing orders; True iff
    final configurations and odometers agree exactly."""
    a = stabilize(config, InstructionTape.from_seed(chain, rates, seed), policies[0])
    b = stabilize(config, InstructionTape.from_seed(chain, rates, seed), policies[1])
    return a.config == b.config and np.array_equal(a.odometer, b.odometer)
