"""Reproduction harness: fill-time tails, mixing profiles, harmonic oracles,
the divisible sandpile, and exploratory density probes.

Monte Carlo pieces draw every trial from streams keyed by ``(seed, trial)``
so worker counts never change a count.  Linear algebra is dense and meant for
the radii used at the desk (a few thousand vertices at most).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .chains import BaseChain, SleepRates, build_ball, build_path, build_wired_tree
from .engine import SLEEPING, Configuration
from .exact import sleeping_states
from .parallel import fan_out
from .process import DrivingSequence, exact_samples, idla_fill_times, simulate
from .rng import AUX, derive
from .stats import bootstrap_ci, clopper_pearson, frequencies, tv_distance, tv_radius


@dataclass
class TailEstimate:
    chain: str
    driving: str
    threshold: float
    trials: int
    exceed: int
    seed: int
    level: float = 0.99
    ci: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not 0 <= self.exceed <= self.trials:
            raise ValueError("exceedance count outside [0, trials]")
        self.ci = clopper_pearson(self.exceed, self.trials, self.level)

    @property
    def frequency(self) -> float:
        return self.exceed / self.trials

    def row(self) -> dict:
        return {
            "chain": self.chain,
            "driving": self.driving,
            "threshold": self.threshold,
            "trials": self.trials,
            "exceed": self.exceed,
            "frequency": self.frequency,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "seed": self.seed,
        }


def _tail(chain: BaseChain, driving: DrivingSequence, threshold: float, trials: int, seed: int,
          workers: int) -> tuple[TailEstimate, np.ndarray]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    t_max = int(math.floor(threshold))
    times = idla_fill_times(chain, driving, seed, trials, max(t_max, 0), workers=workers)
    if driving.kind != "central":
        done = times[times >= 0]
        assert (done >= chain.num_vertices).all(), "fill before #V steps"
    exceed = int((times < 0).sum())
    return TailEstimate(chain.label, driving.describe(), threshold, trials, exceed, seed), times


def fill_tail(chain: BaseChain, driving: DrivingSequence, alpha: float, coefficient: float = 1.0,
              trials: int = 100, seed: int = 0, workers: int = 1) -> TailEstimate:
    """Estimate ``P(T_full > N + coefficient * N**alpha)`` with ``N = #V``."""
    if driving.kind not in ("central", "uniform"):
        raise ValueError("fill tails are defined for central or uniform driving")
    n = chain.num_vertices
    return _tail(chain, driving, n + coefficient * n**alpha, trials, seed, workers)[0]


def fill_lower_bound_probe(chain: BaseChain, driving: DrivingSequence, beta: float, b: float = 1.0,
                           trials: int = 100, seed: int = 0, workers: int = 1) -> TailEstimate:
    """Same tail at the lower-bound exponent; it should stay away from 0 as ``r`` grows."""
    if driving.kind not in ("central", "uniform"):
        raise ValueError("the lower bound needs central or uniform driving")
    if b < 0:
        raise ValueError("b must be non-negative")
    n = chain.num_vertices
    return _tail(chain, driving, n + b * n**beta, trials, seed, workers)[0]


def lower_exponent(d: int) -> float:
    return max(0.5, 1.0 - 1.0 / d)


def tail_bound(d: int, r: float, alpha: float) -> float:
    """Explicit tail bound with the constants 1/41 (d = 1) and 1/5 (d >= 2)."""
    if d == 1:
        return math.exp(-(r ** (alpha - 0.5)) / 41.0)
    return math.exp(-(r**0.25) / 5.0)


@dataclass
class TreeFill:
    n: int
    num_vertices: int
    times: np.ndarray
    seed: int

    @property
    def ratios(self) -> np.ndarray:
        v = self.num_vertices
        return self.times / (v * math.log(v))

    def quantile(self, p: float) -> float:
        return float(np.quantile(self.ratios, p))


def wired_tree_fill(n: int, driving: DrivingSequence | None = None, trials: int = 100, seed: int = 0,
                    t_max: int | None = None, workers: int = 1) -> TreeFill:
    """``T'_full``: first time IDLA occupies every depth-``n`` vertex of the wired tree."""
    chain = build_wired_tree(n)
    driving = driving or DrivingSequence.central(0)
    if driving.kind not in ("central", "uniform"):
        raise ValueError("tree fill takes central (root) or uniform driving")
    mask = np.zeros(chain.num_vertices, dtype=np.bool_)
    mask[sorted(chain.marked)] = True
    if t_max is None:
        t_max = 50 * chain.num_vertices * max(n, 1)
    times = idla_fill_times(chain, driving, seed, trials, t_max, mask=mask, workers=workers)
    if (times < 0).any():
        raise RuntimeError(f"{int((times < 0).sum())} trials not filled by t_max={t_max}")
    return TreeFill(n, chain.num_vertices, times.astype(np.float64), seed)


def coupon_bound(n_vertices: int, eps: float) -> int:
    """``ceil(N ln N + N ln(1/eps))``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if n_vertices < 1:
        raise ValueError("need at least one vertex")
    n = n_vertices
    return math.ceil(n * math.log(n) + n * math.log(1.0 / eps))


def torus_mixing_budget(d: int, n: int) -> int:
    """``ceil(N + sqrt(d) N^(1 - 1/(3d)))`` with ``N = n**d``."""
    if d < 1 or n < 2:
        raise ValueError("need d >= 1 and n >= 2")
    big = n**d
    return math.ceil(big + math.sqrt(d) * big ** (1.0 - 1.0 / (3 * d)))


@dataclass
class MixingRow:
    t: int
    start: str
    tv: float
    radius: float
    p_not_full: float
    samples: int

    @property
    def within_bound(self) -> bool:
        return self.tv <= self.p_not_full + self.radius

    def row(self) -> dict:
        return {"t": self.t, "start": self.start, "tv": self.tv, "radius": self.radius,
                "p_not_full": self.p_not_full, "samples": self.samples}


def mixing_profile(chain: BaseChain, rates: SleepRates, driving: DrivingSequence, t_grid,
                   samples: int, seed: int, starts: list[Configuration] | None = None,
                   projection: bool = False, workers: int = 1) -> list[MixingRow]:
    """TV between the law of ``sigma_t`` and exact samples, next to ``P(T_full > t)``.

    Small chains sweep every sleeping start.  With ``projection`` the
    statistic is the number of sleepers instead of the full configuration
    (a lower bound on the true TV), which is the only option for large chains.
    """
    n = chain.num_vertices
    if n > 12 and not projection:
        raise ValueError("chains with more than 12 vertices need projection=True")
    if starts is None:
        if n <= 12:
            starts = [Configuration(c) for c in sleeping_states(n)]
        else:
            starts = [Configuration.empty(n), Configuration.sleeping(n)]
    t_grid = sorted(int(t) for t in t_grid)
    ref = exact_samples(chain, rates, seed, samples, workers)
    ref_stat = ref.sleepers if projection else ref.codes
    ref_law = frequencies(ref_stat)
    states = n + 1 if projection else 2**n
    rows = []
    for i, s0 in enumerate(starts):
        batch = simulate(chain, rates, driving, int(derive(seed, AUX, i) >> np.uint64(1)), samples,
                         t_grid, s0, workers=workers)
        stat = batch.sleepers if projection else batch.codes
        tf = batch.t_full
        for k, t in enumerate(t_grid):
            law = frequencies(stat[:, k])
            p_not = float(((tf < 0) | (tf > t)).mean())
            rows.append(MixingRow(t, s0.to_string(), tv_distance(law, ref_law),
                                  tv_radius(states, samples, samples), p_not, samples))
    return rows


@dataclass
class HarmonicTable:
    chain: BaseChain
    green: np.ndarray
    residual: float

    @property
    def hitting(self) -> np.ndarray:
        """``hitting[y, z] = P_y(tau_z < tau_r)``, equal to 1 on the diagonal."""
        return self.green / np.diag(self.green)[None, :]

    @property
    def exit_times(self) -> np.ndarray:
        """``E_y tau_r`` (rows of ``G`` summed)."""
        return self.green.sum(axis=1)

    def index(self, point) -> int:
        coords = self.chain.coords
        hit = np.flatnonzero((coords == np.asarray(point)).all(axis=1))
        if len(hit) != 1:
            raise KeyError(point)
        return int(hit[0])


def harmonic_table(chain: BaseChain, tol: float = 1e-9) -> HarmonicTable:
    """Green function of the walk killed at the sink, from ``(I - P_V) G = I``."""
    n = chain.num_vertices
    if n > 12000:
        raise ValueError("dense Green matrix too large")
    a = np.eye(n) - chain.substochastic
    g = np.linalg.solve(a, np.eye(n))
    residual = float(np.abs(a @ g - np.eye(n)).max())
    if residual > tol:
        raise ArithmeticError(f"Green solve residual {residual:.2e} above {tol:g}")
    return HarmonicTable(chain, g, residual)


def hitting_frequency(chain: BaseChain, y: int, z: int, walks: int, seed: int,
                      workers: int = 1) -> float:
    """Monte Carlo ``P_y(tau_z < tau_sink)``."""
    indptr, targets, cum = chain.csr
    out = np.zeros(walks, dtype=np.int64)
    base = derive(seed, AUX, y, z)

    def work(first, m):
        K.hitting_batch(first, m, base, y, z, indptr, targets, cum, out[first:first + m])

    fan_out(walks, work, workers)
    return float(out.mean())


@dataclass
class ExitSumRow:
    r: float
    num_vertices: int
    min_sum_ratio: float
    max_green_ratio: float

    def row(self) -> dict:
        return {"r": self.r, "num_vertices": self.num_vertices,
                "min_sum_ratio": self.min_sum_ratio, "max_green_ratio": self.max_green_ratio}


def exit_sum_check(d: int, radii) -> list[ExitSumRow]:
    """Per radius: ``min_z sum_y P_y(tau_z<tau_r) ln r / r`` and ``max_z G(z,z) / ln r``."""
    rows = []
    for r in radii:
        table = harmonic_table(build_ball(d, r))
        sums = table.hitting.sum(axis=0)
        lr = math.log(r)
        rows.append(ExitSumRow(r, table.chain.num_vertices, float(sums.min() * lr / r),
                               float(np.diag(table.green).max() / lr)))
    return rows


@dataclass
class SandpileReport:
    d: int
    r: float
    mass: float
    sweeps: int
    converged: bool
    fills_ball: bool
    leaked: float
    mass_error: float
    min_odometer: float
    kappa_max: float
    kappa_origin: float
    bound: float
    extra: dict = field(default_factory=dict)

    @property
    def inequality_holds(self) -> bool:
        return self.kappa_max <= self.bound

    def row(self) -> dict:
        return {"d": self.d, "r": self.r, "mass": self.mass, "sweeps": self.sweeps,
                "converged": self.converged, "fills_ball": self.fills_ball,
                "leaked": self.leaked, "mass_error": self.mass_error,
                "min_odometer": self.min_odometer, "kappa_max": self.kappa_max,
                "kappa_origin": self.kappa_origin, "bound": self.bound,
                "inequality_holds": self.inequality_holds}


def divisible_sandpile(d: int, mass: float, radius: int, tol: float = 1e-12,
                       max_sweeps: int = 2_000_000):
    """Relax ``mass * delta_0`` on the box ``[-radius, radius]^d`` by Jacobi sweeps.

    A site above 1 keeps 1 and splits the excess among its ``2d`` neighbours.
    Mass pushed off the box is counted as leaked.  Returns ``(mass, odometer,
    leaked, sweeps, converged)``.
    """
    side = 2 * radius + 1
    m = np.zeros((side,) * d)
    m[(radius,) * d] = mass
    odo = np.zeros_like(m)
    leaked = 0.0
    for sweep in range(1, max_sweeps + 1):
        ex = np.maximum(m - 1.0, 0.0)
        moved = float(ex.sum())
        if moved <= tol:
            return m, odo, leaked, sweep - 1, True
        odo += ex
        m -= ex
        share = ex / (2 * d)
        for ax in range(d):
            for shift in (1, -1):
                rolled = np.roll(share, shift, axis=ax)
                edge = [slice(None)] * d
                edge[ax] = 0 if shift == 1 else -1
                leaked += float(rolled[tuple(edge)].sum())
                rolled[tuple(edge)] = 0.0
                m += rolled
    return m, odo, leaked, max_sweeps, False


def divisible_sandpile_check(d: int, r: float, alpha: float, mass: float | None = None,
                             tol: float = 1e-12) -> SandpileReport:
    """Relax the sandpile and evaluate ``kappa(z) = sum_y G(y,z) / G(0,z)`` against
    ``N + N**alpha / 2``."""
    chain = build_ball(d, r)
    table = harmonic_table(chain)
    big = chain.num_vertices
    bound = big + 0.5 * big**alpha
    if mass is None:
        mass = bound
    box = int(math.ceil(r)) + 4
    m, odo, leaked, sweeps, converged = divisible_sandpile(d, mass, box, tol)
    pts = chain.coords + box
    fills = bool((m[tuple(pts.T)] >= 1.0 - 1e-9).all())
    origin = chain.origin()
    col = table.green.sum(axis=0)
    kappa = col / table.green[origin, :]
    return SandpileReport(d, r, mass, sweeps, converged, fills, leaked,
                          abs(float(m.sum()) + leaked - mass), float(odo.min()),
                          float(kappa.max()), float(kappa[origin]), bound)


@dataclass
class DensityRow:
    r: float
    num_vertices: int
    mean: float
    stderr: float
    trials: int

    def row(self) -> dict:
        return {"r": self.r, "num_vertices": self.num_vertices, "mean": self.mean,
                "stderr": self.stderr, "trials": self.trials}


def density_probe(d: int, radii, lam: float, trials: int, seed: int, workers: int = 1) -> list[DensityRow]:
    """Fraction of sites left asleep when ``1_{B_r}`` is stabilized."""
    rows = []
    for i, r in enumerate(radii):
        chain = build_ball(d, r)
        n = chain.num_vertices
        batch = exact_samples(chain, SleepRates.constant(lam, n), int(derive(seed, AUX, i) >> np.uint64(1)),
                              trials, workers)
        dens = batch.sleepers / n
        se = float(dens.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
        rows.append(DensityRow(r, n, float(dens.mean()), se, trials))
    return rows


@dataclass
class VarianceRow:
    L: int
    variance: float
    ci_low: float
    ci_high: float
    trials: int

    def row(self) -> dict:
        return {"L": self.L, "variance": self.variance, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "trials": self.trials}


def hyperuniformity_probe(lengths, lam: float, trials: int, seed: int,
                          workers: int = 1) -> tuple[list[VarianceRow], float]:
    """Variance of the sleeper count of ``S[1_V]`` on paths; returns rows and the log-log slope."""
    rows = []
    for i, L in enumerate(lengths):
        chain = build_path(L)
        batch = exact_samples(chain, SleepRates.constant(lam, chain.num_vertices),
                              int(derive(seed, AUX, i) >> np.uint64(1)), trials, workers)
        vals = batch.sleepers.astype(np.float64)
        var = float(vals.var(ddof=1)) if trials > 1 else 0.0
        lo, hi = bootstrap_ci(vals, lambda x: x.var(ddof=1), reps=500, seed=seed + i)
        rows.append(VarianceRow(int(L), var, lo, hi, trials))
    pos = [(r.L, r.variance) for r in rows if r.variance > 0]
    slope = float("nan")
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0])
    return rows, slope


