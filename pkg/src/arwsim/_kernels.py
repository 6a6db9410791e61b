"""numba kernels behind the engine and the Monte Carlo drivers.

Site encoding: ``0`` empty, ``-1`` one sleeping particle, ``k >= 1`` that many
active particles.  The sink is target ``-1``; a sleep instruction is ``-2``.

Sleep-mode per vertex: ``0`` never sleeps (lam = 0), ``1`` sleeps with
probability ``q`` (0 < lam < inf), ``2`` infinite rate.  For infinite rate
the tape alternates Sleep (even index) and a ``P``-step (odd index), so a lone
particle always sleeps on its next firing and a crowded site moves one
particle per two firings.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .rng import _derive, uniform, vertex_key

SLEEPING = -1
SINK = -1
SLEEP = -2

LOWEST = 0
HIGHEST = 1
FIFO = 2
TRACK = 3

COMPLETE = 0
TRUNCATED = 1
CAPPED = 2

DRIVE_CENTRAL = 0
DRIVE_UNIFORM = 1
DRIVE_SEQUENCE = 2


@njit(cache=True, inline="always")
def _pick(u, v, indptr, targets, cum):
    j = indptr[v]
    last = indptr[v + 1] - 1
    while j < last and u >= cum[j]:
        j += 1
    return targets[j]


@njit(cache=True)
def instruction(key, v, n, mode, q, indptr, targets, cum):
    """Instruction number ``n`` (0-based) at vertex ``v``."""
    u = uniform(vertex_key(key, v), n)
    if mode == 0:
        return _pick(u, v, indptr, targets, cum)
    if mode == 2:
        if n % 2 == 0:
            return SLEEP
        return _pick(u, v, indptr, targets, cum)
    if u < q:
        return SLEEP
    return _pick((u - q) / (1.0 - q), v, indptr, targets, cum)


@njit(cache=True, inline="always")
def _arrive(state, w):
    if state[w] == SLEEPING:
        state[w] = 2
    else:
        state[w] += 1


@njit(cache=True, inline="always")
def _active(x, idla):
    if idla:
        return x >= 2
    return x >= 1


@njit(cache=True)
def fire_site(state, odo, offset, key, v, mode, q, indptr, targets, cum, idla):
    """Fire ``v`` once; returns the instruction used."""
    ins = instruction(key, v, offset[v] + odo[v], mode[v], q[v], indptr, targets, cum)
    odo[v] += 1
    if ins == SLEEP:
        if state[v] == 1 and not idla:
            state[v] = SLEEPING
    else:
        state[v] -= 1
        if ins != SINK:
            _arrive(state, ins)
    return ins


@njit(cache=True)
def stabilize_kernel(state, odo, offset, key, mode, q, indptr, targets, cum,
                     policy, idla, cap, budget):
    """Fire active sites until none remain.

    Mutates ``state`` and ``odo`` in place.  Returns ``(firings, absorbed,
    status)``; ``budget >= 0`` stops early after that many firings (a legal,
    possibly incomplete execution).
    """
    n = state.shape[0]
    firings = 0
    absorbed = 0
    if budget == 0:
        for v in range(n):
            if _active(state[v], idla):
                return 0, 0, TRUNCATED
        return 0, 0, COMPLETE

    if policy == LOWEST or policy == HIGHEST:
        while True:
            v = -1
            if policy == LOWEST:
                for i in range(n):
                    if _active(state[i], idla):
                        v = i
                        break
            else:
                for i in range(n - 1, -1, -1):
                    if _active(state[i], idla):
                        v = i
                        break
            if v < 0:
                return firings, absorbed, COMPLETE
            ins = fire_site(state, odo, offset, key, v, mode, q, indptr, targets, cum, idla)
            if ins == SINK:
                absorbed += 1
            firings += 1
            if firings > cap:
                return firings, absorbed, CAPPED
            if firings == budget:
                for i in range(n):
                    if _active(state[i], idla):
                        return firings, absorbed, TRUNCATED
                return firings, absorbed, COMPLETE

    # FIFO queue or tracking stack, each vertex held at most once
    buf = np.empty(n, dtype=np.int64)
    held = np.zeros(n, dtype=np.bool_)
    head = 0
    size = 0
    for i in range(n):
        if _active(state[i], idla):
            buf[size] = i
            held[i] = True
            size += 1

    if policy == FIFO:
        while size > 0:
            v = buf[head]
            head = (head + 1) % n
            size -= 1
            held[v] = False
            while _active(state[v], idla):
                ins = fire_site(state, odo, offset, key, v, mode, q, indptr, targets, cum, idla)
                firings += 1
                if ins == SINK:
                    absorbed += 1
                elif ins >= 0 and ins != v and not held[ins] and _active(state[ins], idla):
                    buf[(head + size) % n] = ins
                    held[ins] = True
                    size += 1
                if firings > cap:
                    return firings, absorbed, CAPPED
                if firings == budget:
                    for i in range(n):
                        if _active(state[i], idla):
                            return firings, absorbed, TRUNCATED
                    return firings, absorbed, COMPLETE
        return firings, absorbed, COMPLETE

    # TRACK: follow one particle until it settles, sleeps or is absorbed
    cur = -1
    while True:
        if cur < 0 or not _active(state[cur], idla):
            cur = -1
            while size > 0:
                size -= 1
                v = buf[size]
                held[v] = False
                if _active(state[v], idla):
                    cur = v
                    break
            if cur < 0:
                return firings, absorbed, COMPLETE
        v = cur
        ins = fire_site(state, odo, offset, key, v, mode, q, indptr, targets, cum, idla)
        firings += 1
        if ins == SLEEP:
            pass
        else:
            if _active(state[v], idla) and not held[v]:
                buf[size] = v
                held[v] = True
                size += 1
            if ins == SINK:
                absorbed += 1
                cur = -1
            else:
                cur = ins
        if firings > cap:
            return firings, absorbed, CAPPED
        if firings == budget:
            for i in range(n):
                if _active(state[i], idla):
                    return firings, absorbed, TRUNCATED
            return firings, absorbed, COMPLETE


@njit(cache=True, inline="always")
def _drive(t, dmode, dparam, dseq, dkey, n):
    """Driving vertex at step ``t`` (1-based)."""
    if dmode == DRIVE_CENTRAL:
        return dparam
    if dmode == DRIVE_UNIFORM:
        return min(int(uniform(dkey, t) * n), n - 1)
    return dseq[(t - 1) % dseq.shape[0]]


@njit(cache=True, inline="always")
def encode_sleeping(state):
    code = np.int64(0)
    for i in range(state.shape[0]):
        if state[i] == SLEEPING:
            code |= np.int64(1) << np.int64(i)
    return code


@njit(cache=True, inline="always")
def _all_active_ones(state):
    for i in range(state.shape[0]):
        if state[i] != 1:
            return False
    return True


@njit(cache=True, nogil=True)
def process_batch(first, count, tape_base, drive_base, sigma0, mode, q, indptr, targets, cum,
                  dmode, dparam, dseq, record, t_max, coupled, cap,
                  codes, sleepers, tfull):
    """Run ``count`` ARW traces (trial ids ``first..first+count-1``).

    Single-tape form: each step adds a particle and resumes stabilization on
    the cumulative odometer.  ``record[k]`` is a time at which to store the
    sleeping-state code and sleeper count.  With ``coupled`` the IDLA state on
    the same tape is advanced too and ``tfull`` receives the first time it
    equals ``1_V`` (``-1`` if never within ``t_max``).
    """
    n = sigma0.shape[0]
    zero = np.zeros(n, dtype=np.int64)
    for j in range(count):
        trial = first + j
        key = _derive(tape_base, np.uint64(trial))
        dkey = _derive(drive_base, np.uint64(trial))
        state = sigma0.copy()
        odo = np.zeros(n, dtype=np.int64)
        eta = sigma0.copy()
        godo = np.zeros(n, dtype=np.int64)
        tf = -1
        if coupled and _all_active_ones(eta):
            tf = 0
        k = 0
        while k < record.shape[0] and record[k] == 0:
            codes[j, k] = encode_sleeping(state)
            c = 0
            for i in range(n):
                if state[i] == SLEEPING:
                    c += 1
            sleepers[j, k] = c
            k += 1
        for t in range(1, t_max + 1):
            u = _drive(t, dmode, dparam, dseq, dkey, n)
            _arrive(state, u)
            _, _, st = stabilize_kernel(state, odo, zero, key, mode, q, indptr, targets, cum,
                                        FIFO, False, cap, -1)
            if st == CAPPED:
                tf = -2
                break
            if coupled and tf < 0:
                _arrive(eta, u)
                stabilize_kernel(eta, godo, zero, key, mode, q, indptr, targets, cum,
                                 FIFO, True, cap, -1)
                if _all_active_ones(eta):
                    tf = t
            while k < record.shape[0] and record[k] == t:
                codes[j, k] = encode_sleeping(state)
                c = 0
                for i in range(n):
                    if state[i] == SLEEPING:
                        c += 1
                sleepers[j, k] = c
                k += 1
            if k >= record.shape[0] and (not coupled or tf >= 0):
                break
        tfull[j] = tf


@njit(cache=True, nogil=True)
def sample_batch(first, count, base, init, mode, q, indptr, targets, cum, cap,
                 codes, sleepers, firings):
    """Stabilize ``init`` on ``count`` independent tapes."""
    n = init.shape[0]
    zero = np.zeros(n, dtype=np.int64)
    for j in range(count):
        key = _derive(base, np.uint64(first + j))
        state = init.copy()
        odo = np.zeros(n, dtype=np.int64)
        f, _, st = stabilize_kernel(state, odo, zero, key, mode, q, indptr, targets, cum,
                                    FIFO, False, cap, -1)
        firings[j] = f if st == COMPLETE else -1
        codes[j] = encode_sleeping(state) if n <= 62 else 0
        c = 0
        for i in range(n):
            if state[i] == SLEEPING:
                c += 1
        sleepers[j] = c


@njit(cache=True, nogil=True)
def idla_fill_batch(first, count, tape_base, drive_base, indptr, targets, cum,
                    dmode, dparam, dseq, mask, t_max, out):
    """IDLA from empty on a step-only tape; ``out[j]`` is the first time all
    ``mask`` vertices are occupied, or ``-1`` if not by ``t_max``.

    Each new particle is walked until it settles or is absorbed, which is the
    tracking execution of the IDLA stabilization.
    """
    n = mask.shape[0]
    need = 0
    for i in range(n):
        if mask[i]:
            need += 1
    for j in range(count):
        trial = first + j
        key = _derive(tape_base, np.uint64(trial))
        dkey = _derive(drive_base, np.uint64(trial))
        occ = np.zeros(n, dtype=np.bool_)
        odo = np.zeros(n, dtype=np.int64)
        vkeys = np.empty(n, dtype=np.uint64)
        for i in range(n):
            vkeys[i] = vertex_key(key, i)
        have = 0
        res = -1
        if need == 0:
            res = 0
        t = 0
        while res < 0 and t < t_max:
            t += 1
            v = _drive(t, dmode, dparam, dseq, dkey, n)
            while True:
                if not occ[v]:
                    occ[v] = True
                    if mask[v]:
                        have += 1
                    break
                u = uniform(vkeys[v], odo[v])
                odo[v] += 1
                w = _pick(u, v, indptr, targets, cum)
                if w == SINK:
                    break
                v = w
            if have == need:
                res = t
        out[j] = res


@njit(cache=True, nogil=True)
def hitting_batch(first, count, base, y, z, indptr, targets, cum, out):
    """Walks from ``y`` (fresh stream each); ``out[j]`` is 1 if ``z`` is hit before the sink."""
    for j in range(count):
        key = _derive(base, np.uint64(first + j))
        v = y
        c = 0
        hit = 0
        while True:
            if v == z:
                hit = 1
                break
            if v == SINK:
                break
            v = _pick(uniform(key, c), v, indptr, targets, cum)
            c += 1
        out[j] = hit
