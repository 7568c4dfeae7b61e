"""Pure-Python reference kernels.

Every function here has a twin in ``_ckernels.pyx`` that must produce the
same numbers bit for bit: same RNG derivation, same floating point operation
order, same particle processing order.  The compiled module is only a speed-up.
"""
from __future__ import annotations

import math

import numpy as np

MASK = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x6A09E667F3BCC909
TWO_M53 = 1.0 / 9007199254740992.0

ROLE_WALK = 1
ROLE_MARK = 2
ROLE_SLEEP = 3
ROLE_SPAWN = 4
ROLE_SAMPLE = 5

KIND_INTERIOR = 0
KIND_CUTOFF = 1
KIND_LEAF = 2

EV_SPAWN = 0
EV_MOVE = 1
EV_ELIM_VISITED = 2
EV_ELIM_TIE = 3
EV_ABSORB = 4
EV_ESCAPE = 5
EV_HORIZON = 6
EV_STUCK = 7

LOG_DTYPE = np.dtype(
    [("trial", "<i8"), ("step", "<u4"), ("particle", "<u8"), ("vertex", "<i8"), ("code", "u1")]
)


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, trial: int, a: int, b: int, role: int) -> int:
    k = mix64(seed ^ SEED_SALT)
    k = mix64(k ^ (trial & MASK))
    k = mix64(k ^ (a & MASK))
    return mix64(k ^ ((((b & MASK) << 8) & MASK) | role))


def uniform(key: int, i: int) -> float:
    return (mix64((key + ((i + 1) * GOLDEN)) & MASK) >> 11) * TWO_M53


def poisson(mean: float, u: float) -> int:
    if mean <= 0.0:
        return 0
    p = math.exp(-mean)
    f = p
    k = 0
    kmax = int(mean + 40.0 * math.sqrt(mean) + 40.0)
    while u > f and k < kmax:
        k += 1
        p *= mean / k
        f += p
    return k


def _choose(nbr_ptr, weight, v: int, excl: int, u: float) -> int:
    lo = int(nbr_ptr[v])
    hi = int(nbr_ptr[v + 1])
    total = 0.0
    for j in range(lo, hi):
        if j - lo != excl:
            total += weight[j]
    if total <= 0.0:
        return -1
    x = u * total
    last = -1
    for j in range(lo, hi):
        if j - lo == excl:
            continue
        w = weight[j]
        if w <= 0.0:
            continue
        last = j - lo
        if x < w:
            return last
        x -= w
    return last


def frog_batch(model, nbr_ptr, nbr, weight, parent, slot_in_parent, vkind, depth,
               sleep_mean, seed, trials, horizon, watch, want_steps,
               want_log, max_particles):
    """Run the frog model for each trial id in ``trials`` (model 0 = standard SRW, 1 = truncated LERW)."""
    n = len(parent)
    ntrials = len(trials)
    nw = len(watch)
    watch_idx = [-1] * n
    for i, w in enumerate(watch):
        watch_idx[int(w)] = i
    out_returns = np.zeros(ntrials, np.int64)
    out_activated = np.zeros(ntrials, np.int64)
    out_maxdepth = np.zeros(ntrials, np.int64)
    counters = np.zeros((ntrials, 8), np.int64)
    watch_time = np.full((ntrials, nw), -1, np.int64)
    watch_up = np.zeros((ntrials, nw), np.int64)
    arrivals = np.zeros((ntrials, horizon + 1 if want_steps else 0), np.int64)
    log: list[tuple] = []
    aborted = np.zeros(ntrials, np.int8)
    truncated = model == 1

    for tt in range(ntrials):
        trial = int(trials[tt])
        visited = [-1] * n
        touch = [-1] * n
        best = [-1] * n
        bestmark = [0.0] * n
        visited[0] = 0
        # particle columns
        pos = [0]
        prev = [-1]
        pid = [0]
        nsteps = [0]
        wkey = [stream_key(seed, trial, 0, 0, ROLE_WALK)]
        mkey = [stream_key(seed, trial, 0, 0, ROLE_MARK)]
        ever = 1
        sleepers = 0
        elim_v = elim_t = absorbed = escaped = stuck = 0
        returns = 0
        activated = 0
        maxdepth = 0
        if want_log:
            log.append((trial, 0, 0, 0, EV_SPAWN))
        if watch_idx[0] >= 0:
            watch_time[tt, watch_idx[0]] = 0
        t = 0
        while t < horizon and pos:
            t += 1
            m = len(pos)
            dest = [0] * m
            aslot = [0] * m
            up = [False] * m
            # phase 1: every live particle picks its move
            for i in range(m):
                v = pos[i]
                excl = prev[i] if truncated else -1
                s = _choose(nbr_ptr, weight, v, excl, uniform(wkey[i], nsteps[i]))
                if s < 0:
                    dest[i] = -1
                    continue
                d = int(nbr[int(nbr_ptr[v]) + s])
                dest[i] = d
                if d == parent[v]:
                    up[i] = True
                    aslot[i] = int(slot_in_parent[v])
                else:
                    aslot[i] = 0
                nsteps[i] += 1
                if truncated and visited[d] == -1:
                    mk = uniform(mkey[i], nsteps[i] - 1)
                    if touch[d] != t:
                        touch[d] = t
                        best[d] = i
                        bestmark[d] = mk
                    elif mk > bestmark[d] or (mk == bestmark[d] and pid[i] < pid[best[d]]):
                        best[d] = i
                        bestmark[d] = mk
            # phase 2: resolve landings in particle order
            npos: list[int] = []
            nprev: list[int] = []
            npid: list[int] = []
            nsteps2: list[int] = []
            nwkey: list[int] = []
            nmkey: list[int] = []
            newly: list[int] = []
            for i in range(m):
                d = dest[i]
                if d < 0:
                    stuck += 1
                    if want_log:
                        log.append((trial, t, pid[i], pos[i], EV_STUCK))
                    continue
                if up[i] and watch_idx[pos[i]] >= 0:
                    watch_up[tt, watch_idx[pos[i]]] += 1
                first = visited[d] == -1 or visited[d] == t
                if first and visited[d] == -1:
                    visited[d] = t
                    newly.append(d)
                if truncated:
                    if first:
                        survive = best[d] == i
                        code = EV_ELIM_TIE
                    else:
                        survive = up[i]
                        code = EV_ELIM_VISITED
                else:
                    survive = True
                    code = EV_MOVE
                if not survive:
                    if code == EV_ELIM_TIE:
                        elim_t += 1
                    else:
                        elim_v += 1
                    if want_log:
                        log.append((trial, t, pid[i], d, code))
                    continue
                if d == 0:
                    returns += 1
                    if want_steps:
                        arrivals[tt, t] += 1
                    if truncated:
                        absorbed += 1
                        if want_log:
                            log.append((trial, t, pid[i], d, EV_ABSORB))
                        continue
                if vkind[d] == KIND_CUTOFF:
                    escaped += 1
                    if want_log:
                        log.append((trial, t, pid[i], d, EV_ESCAPE))
                    continue
                if want_log:
                    log.append((trial, t, pid[i], d, EV_MOVE))
                npos.append(d)
                nprev.append(aslot[i])
                npid.append(pid[i])
                nsteps2.append(nsteps[i])
                nwkey.append(wkey[i])
                nmkey.append(mkey[i])
            # wake sleepers at first-landed vertices; they move from the next step
            for d in newly:
                activated += 1
                if depth[d] > maxdepth:
                    maxdepth = int(depth[d])
                if watch_idx[d] >= 0:
                    watch_time[tt, watch_idx[d]] = t
                c = poisson(sleep_mean[d], uniform(stream_key(seed, trial, d, 0, ROLE_SLEEP), 0))
                if c and ever + len(npos) + c > max_particles:
                    aborted[tt] = 1
                    c = 0
                sleepers += c
                for k in range(c):
                    p = (d << 32) | k
                    npos.append(d)
                    nprev.append(-1)
                    npid.append(p)
                    nsteps2.append(0)
                    nwkey.append(stream_key(seed, trial, d, k, ROLE_WALK))
                    nmkey.append(stream_key(seed, trial, d, k, ROLE_MARK))
                    if want_log:
                        log.append((trial, t, p, d, EV_SPAWN))
                ever += c
            pos, prev, pid, nsteps, wkey, mkey = npos, nprev, npid, nsteps2, nwkey, nmkey
        horizon_alive = len(pos)
        if want_log:
            for i in range(len(pos)):
                log.append((trial, t, pid[i], pos[i], EV_HORIZON))
        out_returns[tt] = returns
        out_activated[tt] = activated
        out_maxdepth[tt] = maxdepth
        counters[tt] = (ever, sleepers, elim_v, elim_t, absorbed, escaped, horizon_alive, stuck)
    log_arr = np.array(log, dtype=LOG_DTYPE) if want_log else np.zeros(0, LOG_DTYPE)
    return {
        "returns": out_returns,
        "activated": out_activated,
        "max_depth": out_maxdepth,
        "counters": counters,
        "watch_time": watch_time,
        "watch_up": watch_up,
        "arrivals": arrivals,
        "aborted": aborted,
        "log": log_arr,
    }


def brw_batch(nbr_ptr, nbr, weight, vkind, offspring_mean, seed, trials, horizon, max_pop,
              want_steps):
    """Branching random walk: every landing at v adds Poisson(offspring_mean[v]) walkers."""
    ntrials = len(trials)
    root_visits = np.zeros(ntrials, np.int64)
    peak = np.zeros(ntrials, np.int64)
    aborted = np.zeros(ntrials, np.int8)
    arrivals = np.zeros((ntrials, horizon + 1 if want_steps else 0), np.int64)
    for tt in range(ntrials):
        trial = int(trials[tt])
        pos = [0]
        nsteps = [0]
        key = [stream_key(seed, trial, 0, 0, ROLE_WALK)]
        visits = 0
        pk = 1
        t = 0
        while t < horizon and pos:
            t += 1
            npos: list[int] = []
            nst: list[int] = []
            nkey: list[int] = []
            for i in range(len(pos)):
                v = pos[i]
                s = _choose(nbr_ptr, weight, v, -1, uniform(key[i], 2 * nsteps[i]))
                if s < 0:
                    continue
                d = int(nbr[int(nbr_ptr[v]) + s])
                u2 = uniform(key[i], 2 * nsteps[i] + 1)
                nsteps[i] += 1
                if d == 0:
                    visits += 1
                    if want_steps:
                        arrivals[tt, t] += 1
                if vkind[d] == KIND_CUTOFF:
                    continue
                c = poisson(offspring_mean[d], u2)
                npos.append(d)
                nst.append(nsteps[i])
                nkey.append(key[i])
                for j in range(c):
                    npos.append(d)
                    nst.append(0)
                    nkey.append(mix64(key[i] ^ mix64(((nsteps[i] << 24) | j) + GOLDEN)))
            pos, nsteps, key = npos, nst, nkey
            if len(pos) > pk:
                pk = len(pos)
            if len(pos) > max_pop:
                aborted[tt] = 1
                break
        root_visits[tt] = visits
        peak[tt] = pk
    return {"root_visits": root_visits, "peak": peak, "aborted": aborted, "arrivals": arrivals}


def erased_prefix_batch(nbr_ptr, nbr, weight, vkind, start, steps, seed, nsamples, max_len):
    """Loop-erase SRW paths run from ``start`` until they reach a cutoff leaf.

    Returns the first ``steps`` moves of each erased path, cut at the root.
    Rows are padded with -1; a row whose walk hit ``max_len`` is flagged.
    """
    out = np.full((nsamples, steps + 1), -1, np.int64)
    flag = np.zeros(nsamples, np.int8)
    for s in range(nsamples):
        key = stream_key(seed, s, start, 0, ROLE_SAMPLE)
        stack = [start]
        v = start
        i = 0
        while vkind[v] != KIND_CUTOFF:
            if i >= max_len:
                flag[s] = 1
                break
            c = _choose(nbr_ptr, weight, v, -1, uniform(key, i))
            i += 1
            if c < 0:
                flag[s] = 1
                break
            v = int(nbr[int(nbr_ptr[v]) + c])
            if len(stack) >= 2 and stack[-2] == v:
                stack.pop()
            else:
                stack.append(v)
        for j in range(min(steps + 1, len(stack))):
            out[s, j] = stack[j]
            if stack[j] == 0 and j > 0:
                break
    return out, flag


def lerw_markov_batch(nbr_ptr, nbr, weight, parent, slot_in_parent, vkind, start, steps,
                      seed, nsamples):
    """Sample loop-erased walks from the Markov (branch conductance) form."""
    out = np.full((nsamples, steps + 1), -1, np.int64)
    for s in range(nsamples):
        key = stream_key(seed, s, start, 1, ROLE_SAMPLE)
        v = start
        out[s, 0] = v
        excl = -1
        for j in range(1, steps + 1):
            if v == 0 or vkind[v] == KIND_CUTOFF:
                break
            c = _choose(nbr_ptr, weight, v, excl, uniform(key, j - 1))
            if c < 0:
                break
            d = int(nbr[int(nbr_ptr[v]) + c])
            excl = int(slot_in_parent[v]) if d == parent[v] else 0
            v = d
            out[s, j] = v
    return out
