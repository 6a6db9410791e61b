"""Finite base chains with an absorbing sink.

A chain is a set of vertices ``0..n-1`` plus a sink (encoded as ``SINK``).
Transition weights are stored exactly as integer numerators over a per-vertex
denominator, so sum-to-one checks never see floating point drift.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SINK = -1


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class BaseChain:
    """Immutable transition structure on ``V`` plus a sink.

    ``edges[v]`` is a tuple of ``(target, numerator)`` pairs, ``target`` being a
    vertex index or ``SINK``, and ``denominators[v]`` the common denominator.
    """

    num_vertices: int
    edges: tuple[tuple[tuple[int, int], ...], ...]
    denominators: tuple[int, ...]
    label: str = "chain"
    coords: np.ndarray | None = field(default=None, compare=False)
    marked: frozenset[int] = frozenset()

    def __post_init__(self):
        n = self.num_vertices
        if n < 1:
            raise ChainError("a chain needs at least one vertex")
        if len(self.edges) != n or len(self.denominators) != n:
            raise ChainError("edges/denominators must have one entry per vertex")
        for v, (row, den) in enumerate(zip(self.edges, self.denominators)):
            if den <= 0:
                raise ChainError(f"vertex {v}: non-positive denominator")
            total = 0
            for w, num in row:
                if not (w == SINK or 0 <= w < n):
                    raise ChainError(f"vertex {v}: bad target {w}")
                if num <= 0:
                    raise ChainError(f"vertex {v}: non-positive weight")
                total += num
            if total != den:
                raise ChainError(f"vertex {v}: weights sum to {total}/{den}, not 1")
        unreachable = self._cannot_reach_sink()
        if unreachable:
            raise ChainError(f"vertices {sorted(unreachable)[:10]} cannot access the sink")

    def _cannot_reach_sink(self) -> set[int]:
        # BFS from the sink along reversed edges.
        preds: list[list[int]] = [[] for _ in range(self.num_vertices)]
        seen = set()
        queue = deque()
        for v, row in enumerate(self.edges):
            for w, _ in row:
                if w == SINK:
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
                else:
                    preds[w].append(v)
        while queue:
            w = queue.popleft()
            for v in preds[w]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return set(range(self.num_vertices)) - seen

    def weight(self, v: int, w: int) -> Fraction:
        den = self.denominators[v]
        return Fraction(sum(num for t, num in self.edges[v] if t == w), den)

    def transitions(self, v: int) -> list[tuple[int, Fraction]]:
        den = self.denominators[v]
        return [(w, Fraction(num, den)) for w, num in self.edges[v]]

    # Flattened CSR arrays consumed by the numba kernels.
    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        indptr = np.zeros(self.num_vertices + 1, dtype=np.int64)
        targets = []
        cum = []
        for v, row in enumerate(self.edges):
            den = self.denominators[v]
            acc = 0
            for w, num in row:
                acc += num
                targets.append(w)
                cum.append(acc / den)
            cum[-1] = 1.0
            indptr[v + 1] = len(targets)
        return (
            indptr,
            np.asarray(targets, dtype=np.int64),
            np.asarray(cum, dtype=np.float64),
        )

    @cached_property
    def substochastic(self) -> np.ndarray:
        """Dense ``P`` restricted to ``V`` (rows sum to 1 minus the sink mass)."""
        n = self.num_vertices
        mat = np.zeros((n, n))
        for v, row in enumerate(self.edges):
            den = self.denominators[v]
            for w, num in row:
                if w != SINK:
                    mat[v, w] += num / den
        return mat

    def origin(self) -> int:
        """Index of the lattice origin when coordinates exist, else vertex 0."""
        if self.coords is not None:
            hits = np.flatnonzero(~self.coords.any(axis=1))
            if len(hits):
                return int(hits[0])
        return 0

    def to_json(self) -> dict:
        edges = []
        for v, row in enumerate(self.edges):
            for w, num in row:
                edges.append([v, "sink" if w == SINK else w, num, self.denominators[v]])
        return {
            "label": self.label,
            "num_vertices": self.num_vertices,
            "edges": edges,
            "coords": None if self.coords is None else self.coords.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict | str) -> BaseChain:
        if isinstance(data, str):
            data = json.loads(data)
        n = data["num_vertices"]
        rows: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        dens = [0] * n
        for v, w, num, den in data["edges"]:
            rows[v].append((SINK if w == "sink" else int(w), int(num)))
            dens[v] = int(den)
        coords = data.get("coords")
        return cls(
            n,
            tuple(tuple(r) for r in rows),
            tuple(dens),
            label=data.get("label", "chain"),
            coords=None if coords is None else np.asarray(coords, dtype=np.int64),
        )


def from_transitions(
    rows: Sequence[Iterable[tuple[int, Fraction | int | str]]],
    label: str = "custom",
    coords: np.ndarray | None = None,
    marked: Iterable[int] = (),
) -> BaseChain:
    """Build a chain from per-vertex ``(target, probability)`` lists.

    Probabilities may be anything ``Fraction`` accepts; duplicate targets merge.
    """
    edges = []
    dens = []
    for row in rows:
        merged: dict[int, Fraction] = {}
        for w, p in row:
            merged[w] = merged.get(w, Fraction(0)) + Fraction(p)
        den = math.lcm(*(p.denominator for p in merged.values())) if merged else 1
        edges.append(tuple((w, int(p * den)) for w, p in merged.items() if p != 0))
        dens.append(den)
    return BaseChain(len(edges), tuple(edges), tuple(dens), label, coords, frozenset(marked))


def _lattice_chain(points: list[tuple[int, ...]], inside, wrap, label: str) -> BaseChain:
    index = {p: i for i, p in enumerate(points)}
    d = len(points[0])
    rows = []
    for p in points:
        merged: dict[int, int] = {}
        for axis in range(d):
            for step in (-1, 1):
                q = list(p)
                q[axis] += step
                q = wrap(tuple(q))
                w = index.get(q, SINK) if inside(q) else SINK
                merged[w] = merged.get(w, 0) + 1
        rows.append(tuple(merged.items()))
    return BaseChain(
        len(points),
        tuple(rows),
        (2 * d,) * len(points),
        label,
        np.asarray(points, dtype=np.int64),
    )


def build_ball(d: int, r: float) -> BaseChain:
    """Lattice points with Euclidean norm ``< r``; the outer boundary is the sink."""
    if d < 1:
        raise ChainError("dimension must be >= 1")
    if not math.isfinite(r):
        raise ChainError("radius must be finite")
    if r < 1:
        raise ChainError("radius must be >= 1")
    r2 = r * r
    m = math.ceil(r)
    # |x|^2 < r^2, integer comparison when r is integral
    if float(r).is_integer():
        r2 = int(r) ** 2
    points = [
        p
        for p in itertools.product(range(-m, m + 1), repeat=d)
        if sum(x * x for x in p) < r2
    ]
    inside = lambda q: sum(x * x for x in q) < r2  # noqa: E731
    r_txt = int(r) if float(r).is_integer() else r
    return _lattice_chain(points, inside, lambda q: q, f"ball:d={d},r={r_txt}")


def build_torus(d: int, n: int) -> BaseChain:
    """Discrete torus ``Z_n^d`` with the origin made absorbing."""
    if d < 1:
        raise ChainError("dimension must be >= 1")
    if n < 2:
        raise ChainError("torus side must be >= 2")
    origin = (0,) * d
    points = [p for p in itertools.product(range(n), repeat=d) if p != origin]
    wrap = lambda q: tuple(x % n for x in q)  # noqa: E731
    inside = lambda q: q != origin  # noqa: E731
    return _lattice_chain(points, inside, wrap, f"torus:d={d},n={n}")


def build_interval(r: int) -> BaseChain:
    """Integer points of ``(-r, r)``, particles killed at ``+-r``."""
    if int(r) != r or r < 1:
        raise ChainError("interval radius must be an integer >= 1")
    chain = build_ball(1, int(r))
    return BaseChain(
        chain.num_vertices, chain.edges, chain.denominators, f"interval:r={int(r)}", chain.coords
    )


def build_path(L: int) -> BaseChain:
    """Simple random walk on ``{0, ..., L}`` with the sink at ``L``."""
    if L < 1:
        raise ChainError("path length must be >= 1")
    rows = []
    for x in range(L):
        if x == 0:
            rows.append([(1 if L > 1 else SINK, 1)])
        else:
            rows.append([(x - 1, Fraction(1, 2)), (x + 1 if x + 1 < L else SINK, Fraction(1, 2))])
    coords = np.arange(L, dtype=np.int64)[:, None]
    return from_transitions(rows, label=f"path:L={L}", coords=coords)


def build_wired_tree(n: int) -> BaseChain:
    """Binary tree of depth ``n + 1`` whose ``2^(n+1)`` leaves are glued into the sink.

    Vertices are numbered heap-style (root 0, children ``2i+1``, ``2i+2``); the
    ``2^n`` vertices adjacent to the sink are recorded in ``marked``.
    """
    if n < 1:
        raise ChainError("tree depth must be >= 1")
    if n > 40:
        raise ChainError("tree depth overflows the vertex index space")
    size = 2 ** (n + 1) - 1
    rows = []
    for i in range(size):
        nbrs = []
        if i > 0:
            nbrs.append((i - 1) // 2)
        for c in (2 * i + 1, 2 * i + 2):
            nbrs.append(c if c < size else SINK)
        rows.append([(w, Fraction(1, len(nbrs))) for w in nbrs])
    first_b = 2**n - 1
    return from_transitions(rows, label=f"tree:n={n}", marked=range(first_b, size))


def random_chain(rng: np.random.Generator, n: int, max_out: int = 3) -> BaseChain:
    """Random chain on ``n`` vertices with small integer weights.

    Vertex ``v`` always keeps an edge to ``v - 1`` (the sink for ``v = 0``), so
    the sink is reachable from everywhere.
    """
    if n < 1:
        raise ChainError("a chain needs at least one vertex")
    rows = []
    for v in range(n):
        weights = {v - 1 if v > 0 else SINK: int(rng.integers(1, 5))}
        for _ in range(int(rng.integers(0, max_out))):
            w = int(rng.integers(-1, n))
            weights[w] = weights.get(w, 0) + int(rng.integers(1, 5))
        rows.append(tuple(weights.items()))
    return BaseChain(n, tuple(rows), tuple(sum(x for _, x in r) for r in rows), f"random:n={n}")


def check_thorough(chain: BaseChain, support: Iterable[int]) -> bool:
    """True iff every vertex is reachable from ``support`` without visiting the sink."""
    support = set(support)
    if not support:
        return False
    if any(not 0 <= a < chain.num_vertices for a in support):
        raise ChainError("support must be a subset of V")
    seen = set(support)
    queue = deque(support)
    while queue:
        v = queue.popleft()
        for w, _ in chain.edges[v]:
            if w != SINK and w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == chain.num_vertices


@dataclass(frozen=True)
class SleepRates:
    """Per-vertex sleep rates ``lam`` (``inf`` allowed) and sleep probabilities ``q``."""

    lam: tuple[float, ...]

    def __post_init__(self):
        for x in self.lam:
            if math.isnan(x) or x < 0:
                raise ChainError(f"sleep rate must lie in [0, inf], got {x}")

    @classmethod
    def constant(cls, value: float, n: int) -> SleepRates:
        return cls((float(value),) * n)

    def __len__(self) -> int:
        return len(self.lam)

    @cached_property
    def q(self) -> np.ndarray:
        lam = np.asarray(self.lam, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            q = lam / (1.0 + lam)
        q[np.isinf(lam)] = 1.0
        return q

    def describe(self) -> str:
        vals = set(self.lam)
        if len(vals) == 1:
            return f"const:{self.lam[0]}"
        return "vector:" + ",".join(str(x) for x in self.lam)


CHAIN_KINDS = {
    "ball": (build_ball, {"d": int, "r": float}),
    "torus": (build_torus, {"d": int, "n": int}),
    "interval": (build_interval, {"r": int}),
    "tree": (build_wired_tree, {"n": int}),
    "path": (build_path, {"L": int}),
}


def parse_chain_spec(spec: str) -> BaseChain:
    """Parse the ``kind:key=val,...`` grammar, e.g. ``ball:d=2,r=30``."""
    kind, _, rest = spec.partition(":")
    if kind not in CHAIN_KINDS:
        raise ChainError(f"unknown chain kind {kind!r}; expected one of {sorted(CHAIN_KINDS)}")
    builder, types = CHAIN_KINDS[kind]
    kwargs = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq or key not in types:
            raise ChainError(f"bad parameter {item!r} for {kind}")
        try:
            kwargs[key] = types[key](val)
        except ValueError:
            raise ChainError(f"bad value {val!r} for {kind} parameter {key}") from None
    missing = set(types) - set(kwargs)
    if missing:
        raise ChainError(f"{kind} needs parameters {sorted(missing)}")
    return builder(**kwargs)
