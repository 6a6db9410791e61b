"""Exact laws for tiny chains by enumerating the stabilization Markov chain.

Firing follows the two-case rule: a site holding two or more active particles
sends one along ``P``; a lone active particle sleeps with probability
``q = lam / (1 + lam)`` and otherwise steps.  No instruction tapes are
involved, which makes this module an independent check on the engine.
Everything is carried out in exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

import numpy as np

from .chains import SINK, BaseChain

S = -1  # sleeping marker, same encoding as the engine

Config = tuple[int, ...]


def _q(lam: float | Fraction) -> Fraction:
    if lam == math.inf:
        return Fraction(1)
    lam = Fraction(lam)
    return lam / (1 + lam)


def _add(x: int, k: int = 1) -> int:
    if x == S:
        return 1 + k
    return x + k


def _successors(chain: BaseChain, q: Sequence[Fraction], c: Config):
    v = next(i for i, x in enumerate(c) if x >= 1)
    out: dict[Config, Fraction] = {}

    def move(w, p):
        nxt = list(c)
        nxt[v] -= 1
        if w != SINK:
            nxt[w] = _add(nxt[w])
        key = tuple(nxt)
        out[key] = out.get(key, Fraction(0)) + p

    if c[v] >= 2:
        for w, p in chain.transitions(v):
            move(w, p)
    else:
        if q[v]:
            nxt = list(c)
            nxt[v] = S
            out[tuple(nxt)] = q[v]
        for w, p in chain.transitions(v):
            if q[v] != 1:
                move(w, (1 - q[v]) * p)
    return out


def _solve(a: list[list[Fraction]], b: list[list[Fraction]]) -> list[list[Fraction]]:
    """Gauss-Jordan solve of ``a x = b`` over the rationals."""
    n = len(a)
    m = len(b[0]) if b else 0
    aug = [row[:] + brow[:] for row, brow in zip(a, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n : n + m] for row in aug]


def is_sleeping(c: Config) -> bool:
    return all(x in (0, S) for x in c)


def stabilization_law(chain: BaseChain, lam: Sequence, config: Config) -> dict[Config, Fraction]:
    """Exact law of ``S[config]`` as a dict over sleeping configurations."""
    q = [_q(x) for x in lam]
    config = tuple(config)
    if is_sleeping(config):
        return {config: Fraction(1)}
    transient: list[Config] = []
    index: dict[Config, int] = {}
    edges: dict[Config, dict[Config, Fraction]] = {}
    stack = [config]
    index[config] = 0
    transient.append(config)
    absorbing: dict[Config, int] = {}
    while stack:
        c = stack.pop()
        succ = _successors(chain, q, c)
        edges[c] = succ
        for nxt in succ:
            if is_sleeping(nxt):
                absorbing.setdefault(nxt, len(absorbing))
            elif nxt not in index:
                index[nxt] = len(transient)
                transient.append(nxt)
                stack.append(nxt)
    n, m = len(transient), len(absorbing)
    a = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    b = [[Fraction(0)] * m for _ in range(n)]
    for c, succ in edges.items():
        i = index[c]
        for nxt, p in succ.items():
            if nxt in absorbing:
                b[i][absorbing[nxt]] += p
            else:
                a[i][index[nxt]] -= p
    sol = _solve(a, b)
    return {cfg: sol[0][j] for cfg, j in absorbing.items() if sol[0][j] != 0}


def sleeping_states(n: int) -> list[Config]:
    """All ``2^n`` sleeping configurations; bit ``i`` of the index marks a sleeper at ``i``."""
    return [tuple(S if (k >> i) & 1 else 0 for i in range(n)) for k in range(2**n)]


def state_index(c: Config) -> int:
    return sum(1 << i for i, x in enumerate(c) if x == S)


def add_particle(c: Config, v: int) -> Config:
    nxt = list(c)
    nxt[v] = _add(nxt[v])
    return tuple(nxt)


def add_operator(chain: BaseChain, lam: Sequence, v: int) -> list[list[Fraction]]:
    """Stochastic matrix of "add one active particle at ``v`` then stabilize"."""
    states = sleeping_states(chain.num_vertices)
    mat = []
    for c in states:
        row = [Fraction(0)] * len(states)
        for out, p in stabilization_law(chain, lam, add_particle(c, v)).items():
            row[state_index(out)] += p
        mat.append(row)
    return mat


def matmul(a, b):
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


def stationary_law(chain: BaseChain, lam: Sequence) -> list[Fraction]:
    """Exact law of ``S[1_V]`` indexed by ``state_index``."""
    law = [Fraction(0)] * 2**chain.num_vertices
    for out, p in stabilization_law(chain, lam, (1,) * chain.num_vertices).items():
        law[state_index(out)] += p
    return law


def evolve(chain: BaseChain, lam: Sequence, start: Config, driving: Sequence[int],
           ops: dict | None = None) -> list[list[Fraction]]:
    """Exact laws of ``sigma_0, sigma_1, ...`` along a fixed driving sequence.

    ``ops`` may carry precomputed ``add_operator`` matrices keyed by vertex.
    """
    ops = dict(ops or {})
    for v in set(driving) - set(ops):
        ops[v] = add_operator(chain, lam, v)
    law = [Fraction(0)] * 2**chain.num_vertices
    law[state_index(start)] = Fraction(1)
    laws = [law]
    for v in driving:
        law = [sum(law[i] * ops[v][i][j] for i in range(len(law))) for j in range(len(law))]
        laws.append(law)
    return laws


def idla_fill_law(chain: BaseChain, driving: Sequence[int]) -> list[Fraction]:
    """``P(T_full <= t)`` for ``t = 0..len(driving)``, IDLA from the empty state."""
    n = chain.num_vertices
    lam = [math.inf] * n
    law = {(0,) * n: Fraction(1)}
    full = (S,) * n
    out = [Fraction(int(n == 0))]
    for v in driving:
        nxt: dict[Config, Fraction] = {}
        for c, p in law.items():
            for res, r in stabilization_law(chain, lam, add_particle(c, v)).items():
                nxt[res] = nxt.get(res, Fraction(0)) + p * r
        law = nxt
        out.append(law.get(full, Fraction(0)))
    return out


def tv(p: Sequence, q: Sequence) -> float:
    return 0.5 * float(sum(abs(Fraction(a) - Fraction(b)) for a, b in zip(p, q)))


def to_float(mat) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in mat])


def all_configs(n: int, max_particles: int):
    """Every configuration on ``n`` sites with at most ``max_particles`` particles."""
    values = [S] + list(range(max_particles + 1))
    for c in itertools.product(values, repeat=n):
        if sum(1 if x == S else x for x in c) <= max_particles:
            yield c
