# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; line-for-line twins of ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport uint64_t, int64_t, int8_t

cnp.import_array()

from ._pykernels import LOG_DTYPE

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SEED_SALT = 0x6A09E667F3BCC909ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0

cdef enum:
    ROLE_WALK = 1
    ROLE_MARK = 2
    ROLE_SLEEP = 3
    ROLE_SAMPLE = 5
    KIND_CUTOFF = 1
    EV_SPAWN = 0
    EV_MOVE = 1
    EV_ELIM_VISITED = 2
    EV_ELIM_TIE = 3
    EV_ABSORB = 4
    EV_ESCAPE = 5
    EV_HORIZON = 6
    EV_STUCK = 7


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t trial, uint64_t a, uint64_t b,
                                uint64_t role) noexcept nogil:
    cdef uint64_t k = mix64(seed ^ SEED_SALT)
    k = mix64(k ^ trial)
    k = mix64(k ^ a)
    return mix64(k ^ ((b << 8) | role))


cdef inline double uniform(uint64_t key, uint64_t i) noexcept nogil:
    return <double>(mix64(key + (i + 1) * GOLDEN) >> 11) * TWO_M53


cdef inline int64_t poisson(double mean, double u) noexcept nogil:
    if mean <= 0.0:
        return 0
    cdef double p = exp(-mean)
    cdef double f = p
    cdef int64_t k = 0
    cdef int64_t kmax = <int64_t>(mean + 40.0 * sqrt(mean) + 40.0)
    while u > f and k < kmax:
        k += 1
        p *= mean / k
        f += p
    return k


cdef inline int64_t choose(const int64_t[::1] nbr_ptr, const double[::1] weight, int64_t v,
                           int64_t excl, double u) noexcept nogil:
    cdef int64_t lo = nbr_ptr[v]
    cdef int64_t hi = nbr_ptr[v + 1]
    cdef int64_t j, last = -1
    cdef double total = 0.0, x, w
    for j in range(lo, hi):
        if j - lo != excl:
            total += weight[j]
    if total <= 0.0:
        return -1
    x = u * total
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


def py_mix64(uint64_t z):
    return mix64(z)


def py_stream_key(uint64_t seed, uint64_t trial, uint64_t a, uint64_t b, uint64_t role):
    return stream_key(seed, trial, a, b, role)


def py_uniform(uint64_t key, uint64_t i):
    return uniform(key, i)


def py_poisson(double mean, double u):
    return poisson(mean, u)


cdef struct Particles:
    int64_t n
    int64_t cap
    int64_t* pos
    int64_t* prev
    uint64_t* pid
    int64_t* nsteps
    uint64_t* wkey
    uint64_t* mkey


cdef int parts_init(Particles* p, int64_t cap) noexcept nogil:
    p.n = 0
    p.cap = cap
    p.pos = <int64_t*>malloc(cap * sizeof(int64_t))
    p.prev = <int64_t*>malloc(cap * sizeof(int64_t))
    p.pid = <uint64_t*>malloc(cap * sizeof(uint64_t))
    p.nsteps = <int64_t*>malloc(cap * sizeof(int64_t))
    p.wkey = <uint64_t*>malloc(cap * sizeof(uint64_t))
    p.mkey = <uint64_t*>malloc(cap * sizeof(uint64_t))
    return 0


cdef int parts_reserve(Particles* p, int64_t need) noexcept nogil:
    cdef int64_t cap = p.cap
    if need <= cap:
        return 0
    while cap < need:
        cap *= 2
    p.cap = cap
    p.pos = <int64_t*>realloc(p.pos, cap * sizeof(int64_t))
    p.prev = <int64_t*>realloc(p.prev, cap * sizeof(int64_t))
    p.pid = <uint64_t*>realloc(p.pid, cap * sizeof(uint64_t))
    p.nsteps = <int64_t*>realloc(p.nsteps, cap * sizeof(int64_t))
    p.wkey = <uint64_t*>realloc(p.wkey, cap * sizeof(uint64_t))
    p.mkey = <uint64_t*>realloc(p.mkey, cap * sizeof(uint64_t))
    return 0


cdef void parts_free(Particles* p) noexcept nogil:
    free(p.pos)
    free(p.prev)
    free(p.pid)
    free(p.nsteps)
    free(p.wkey)
    free(p.mkey)


cdef inline void parts_push(Particles* p, int64_t pos, int64_t prev, uint64_t pid,
                            int64_t nsteps, uint64_t wkey, uint64_t mkey) noexcept nogil:
    parts_reserve(p, p.n + 1)
    cdef int64_t i = p.n
    p.pos[i] = pos
    p.prev[i] = prev
    p.pid[i] = pid
    p.nsteps[i] = nsteps
    p.wkey[i] = wkey
    p.mkey[i] = mkey
    p.n = i + 1


def frog_batch(int model, const int64_t[::1] nbr_ptr, const int64_t[::1] nbr,
               const double[::1] weight, const int64_t[::1] parent,
               const int64_t[::1] slot_in_parent, const int8_t[::1] vkind,
               const int64_t[::1] depth, const double[::1] sleep_mean,
               uint64_t seed, const int64_t[::1] trials, int64_t horizon,
               const int64_t[::1] watch, bint want_steps, bint want_log,
               int64_t max_particles):
    cdef int64_t n = parent.shape[0]
    cdef int64_t nw = watch.shape[0]
    cdef int64_t ntrials = trials.shape[0]
    cdef int64_t i, j, k, m, tt, t, v, d, s, excl, c, trial
    cdef bint truncated = model == 1
    cdef bint first, survive
    cdef int code
    cdef double mk
    cdef uint64_t p

    out_returns = np.zeros(ntrials, np.int64)
    out_activated = np.zeros(ntrials, np.int64)
    out_maxdepth = np.zeros(ntrials, np.int64)
    counters = np.zeros((ntrials, 8), np.int64)
    watch_time = np.full((ntrials, nw), -1, np.int64)
    watch_up = np.zeros((ntrials, nw), np.int64)
    arrivals = np.zeros((ntrials, horizon + 1 if want_steps else 0), np.int64)
    aborted = np.zeros(ntrials, np.int8)
    cdef int64_t[::1] r_returns = out_returns
    cdef int64_t[::1] r_act = out_activated
    cdef int64_t[::1] r_maxd = out_maxdepth
    cdef int64_t[:, ::1] r_cnt = counters
    cdef int64_t[:, ::1] r_wt = watch_time
    cdef int64_t[:, ::1] r_wu = watch_up
    cdef int64_t[:, ::1] r_arr = arrivals
    cdef int8_t[::1] r_ab = aborted

    watch_idx_a = np.full(n, -1, np.int64)
    for i in range(nw):
        watch_idx_a[watch[i]] = i
    cdef int64_t[::1] watch_idx = watch_idx_a
    cdef int64_t[::1] visited = np.empty(n, np.int64)
    cdef int64_t[::1] touch = np.empty(n, np.int64)
    cdef int64_t[::1] best = np.empty(n, np.int64)
    cdef double[::1] bestmark = np.empty(n, np.float64)
    # vertices first visited in the current trial; only these need resetting
    cdef int64_t[::1] seen = np.empty(n, np.int64)
    cdef int64_t nseen = 0
    for i in range(n):
        visited[i] = -1
        touch[i] = -1
        best[i] = -1
        bestmark[i] = 0.0

    # per-step scratch
    cdef int64_t scap = 1024
    cdef int64_t* dest = <int64_t*>malloc(scap * sizeof(int64_t))
    cdef int64_t* aslot = <int64_t*>malloc(scap * sizeof(int64_t))
    cdef char* up = <char*>malloc(scap)
    cdef int64_t* newly = <int64_t*>malloc(scap * sizeof(int64_t))
    cdef int64_t nnew, newcap = scap
    cdef Particles cur, nxt, tmp
    parts_init(&cur, 1024)
    parts_init(&nxt, 1024)

    cdef int64_t ever, sleepers, elim_v, elim_t, absorbed, escaped, stuck, returns
    cdef int64_t activated, maxdepth
    logrows = []

    try:
        for tt in range(ntrials):
            trial = trials[tt]
            for j in range(nseen):
                d = seen[j]
                visited[d] = -1
                touch[d] = -1
                best[d] = -1
                bestmark[d] = 0.0
            nseen = 0
            visited[0] = 0
            cur.n = 0
            parts_push(&cur, 0, -1, 0, 0, stream_key(seed, trial, 0, 0, ROLE_WALK),
                       stream_key(seed, trial, 0, 0, ROLE_MARK))
            ever = 1
            sleepers = 0
            elim_v = 0
            elim_t = 0
            absorbed = 0
            escaped = 0
            stuck = 0
            returns = 0
            activated = 0
            maxdepth = 0
            if want_log:
                logrows.append((trial, 0, 0, 0, EV_SPAWN))
            if watch_idx[0] >= 0:
                r_wt[tt, watch_idx[0]] = 0
            t = 0
            while t < horizon and cur.n > 0:
                t += 1
                m = cur.n
                if m > scap:
                    while scap < m:
                        scap *= 2
                    dest = <int64_t*>realloc(dest, scap * sizeof(int64_t))
                    aslot = <int64_t*>realloc(aslot, scap * sizeof(int64_t))
                    up = <char*>realloc(up, scap)
                if m > newcap:
                    newcap = scap
                    newly = <int64_t*>realloc(newly, newcap * sizeof(int64_t))
                with nogil:
                    for i in range(m):
                        v = cur.pos[i]
                        excl = cur.prev[i] if truncated else -1
                        up[i] = 0
                        s = choose(nbr_ptr, weight, v, excl, uniform(cur.wkey[i], cur.nsteps[i]))
                        if s < 0:
                            dest[i] = -1
                            continue
                        d = nbr[nbr_ptr[v] + s]
                        dest[i] = d
                        if d == parent[v]:
                            up[i] = 1
                            aslot[i] = slot_in_parent[v]
                        else:
                            aslot[i] = 0
                        cur.nsteps[i] += 1
                        if truncated and visited[d] == -1:
                            mk = uniform(cur.mkey[i], cur.nsteps[i] - 1)
                            if touch[d] != t:
                                touch[d] = t
                                best[d] = i
                                bestmark[d] = mk
                            elif mk > bestmark[d] or (mk == bestmark[d] and cur.pid[i] < cur.pid[best[d]]):
                                best[d] = i
                                bestmark[d] = mk
                nxt.n = 0
                nnew = 0
                for i in range(m):
                    d = dest[i]
                    if d < 0:
                        stuck += 1
                        if want_log:
                            logrows.append((trial, t, cur.pid[i], cur.pos[i], EV_STUCK))
                        continue
                    if up[i] and watch_idx[cur.pos[i]] >= 0:
                        r_wu[tt, watch_idx[cur.pos[i]]] += 1
                    first = visited[d] == -1 or visited[d] == t
                    if first and visited[d] == -1:
                        visited[d] = t
                        newly[nnew] = d
                        nnew += 1
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
                            logrows.append((trial, t, cur.pid[i], d, code))
                        continue
                    if d == 0:
                        returns += 1
                        if want_steps:
                            r_arr[tt, t] += 1
                        if truncated:
                            absorbed += 1
                            if want_log:
                                logrows.append((trial, t, cur.pid[i], d, EV_ABSORB))
                            continue
                    if vkind[d] == KIND_CUTOFF:
                        escaped += 1
                        if want_log:
                            logrows.append((trial, t, cur.pid[i], d, EV_ESCAPE))
                        continue
                    if want_log:
                        logrows.append((trial, t, cur.pid[i], d, EV_MOVE))
                    parts_push(&nxt, d, aslot[i], cur.pid[i], cur.nsteps[i], cur.wkey[i], cur.mkey[i])
                for j in range(nnew):
                    d = newly[j]
                    seen[nseen] = d
                    nseen += 1
                    activated += 1
                    if depth[d] > maxdepth:
                        maxdepth = depth[d]
                    if watch_idx[d] >= 0:
                        r_wt[tt, watch_idx[d]] = t
                    c = poisson(sleep_mean[d], uniform(stream_key(seed, trial, d, 0, ROLE_SLEEP), 0))
                    if c and ever + nxt.n + c > max_particles:
                        r_ab[tt] = 1
                        c = 0
                    sleepers += c
                    for k in range(c):
                        p = ((<uint64_t>d) << 32) | (<uint64_t>k)
                        parts_push(&nxt, d, -1, p, 0, stream_key(seed, trial, d, k, ROLE_WALK),
                                   stream_key(seed, trial, d, k, ROLE_MARK))
                        if want_log:
                            logrows.append((trial, t, p, d, EV_SPAWN))
                    ever += c
                tmp = cur
                cur = nxt
                nxt = tmp
            if want_log:
                for i in range(cur.n):
                    logrows.append((trial, t, cur.pid[i], cur.pos[i], EV_HORIZON))
            r_returns[tt] = returns
            r_act[tt] = activated
            r_maxd[tt] = maxdepth
            r_cnt[tt, 0] = ever
            r_cnt[tt, 1] = sleepers
            r_cnt[tt, 2] = elim_v
            r_cnt[tt, 3] = elim_t
            r_cnt[tt, 4] = absorbed
            r_cnt[tt, 5] = escaped
            r_cnt[tt, 6] = cur.n
            r_cnt[tt, 7] = stuck
    finally:
        parts_free(&cur)
        parts_free(&nxt)
        free(dest)
        free(aslot)
        free(up)
        free(newly)
    log_arr = np.array(logrows, dtype=LOG_DTYPE) if want_log else np.zeros(0, LOG_DTYPE)
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


def brw_batch(const int64_t[::1] nbr_ptr, const int64_t[::1] nbr, const double[::1] weight,
              const int8_t[::1] vkind, const double[::1] offspring_mean, uint64_t seed,
              const int64_t[::1] trials, int64_t horizon, int64_t max_pop,
              bint want_steps):
    cdef int64_t ntrials = trials.shape[0]
    root_visits = np.zeros(ntrials, np.int64)
    peak = np.zeros(ntrials, np.int64)
    aborted = np.zeros(ntrials, np.int8)
    arrivals = np.zeros((ntrials, horizon + 1 if want_steps else 0), np.int64)
    cdef int64_t[::1] r_rv = root_visits
    cdef int64_t[::1] r_pk = peak
    cdef int8_t[::1] r_ab = aborted
    cdef int64_t[:, ::1] r_arr = arrivals
    cdef Particles cur, nxt, tmp
    cdef int64_t tt, t, i, j, v, d, s, c, visits, pk, trial
    cdef double u2
    cdef uint64_t key
    parts_init(&cur, 1024)
    parts_init(&nxt, 1024)
    try:
        with nogil:
            for tt in range(ntrials):
                trial = trials[tt]
                cur.n = 0
                parts_push(&cur, 0, -1, 0, 0, stream_key(seed, trial, 0, 0, ROLE_WALK), 0)
                visits = 0
                pk = 1
                t = 0
                while t < horizon and cur.n > 0:
                    t += 1
                    nxt.n = 0
                    for i in range(cur.n):
                        v = cur.pos[i]
                        key = cur.wkey[i]
                        s = choose(nbr_ptr, weight, v, -1, uniform(key, 2 * cur.nsteps[i]))
                        if s < 0:
                            continue
                        d = nbr[nbr_ptr[v] + s]
                        u2 = uniform(key, 2 * cur.nsteps[i] + 1)
                        cur.nsteps[i] += 1
                        if d == 0:
                            visits += 1
                            if want_steps:
                                r_arr[tt, t] += 1
                        if vkind[d] == KIND_CUTOFF:
                            continue
                        c = poisson(offspring_mean[d], u2)
                        parts_push(&nxt, d, -1, 0, cur.nsteps[i], key, 0)
                        for j in range(c):
                            parts_push(&nxt, d, -1, 0, 0,
                                       mix64(key ^ mix64(((<uint64_t>cur.nsteps[i] << 24) | <uint64_t>j) + GOLDEN)), 0)
                    tmp = cur
                    cur = nxt
                    nxt = tmp
                    if cur.n > pk:
                        pk = cur.n
                    if cur.n > max_pop:
                        r_ab[tt] = 1
                        break
                r_rv[tt] = visits
                r_pk[tt] = pk
    finally:
        parts_free(&cur)
        parts_free(&nxt)
    return {"root_visits": root_visits, "peak": peak, "aborted": aborted, "arrivals": arrivals}


def erased_prefix_batch(const int64_t[::1] nbr_ptr, const int64_t[::1] nbr,
                        const double[::1] weight, const int8_t[::1] vkind, int64_t start,
                        int64_t steps, uint64_t seed, int64_t nsamples, int64_t max_len):
    out = np.full((nsamples, steps + 1), -1, np.int64)
    flag = np.zeros(nsamples, np.int8)
    cdef int64_t[:, ::1] r_out = out
    cdef int8_t[::1] r_flag = flag
    cdef int64_t cap = 256
    cdef int64_t* stack = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t s, v, i, c, top, j, lim
    cdef uint64_t key
    try:
        with nogil:
            for s in range(nsamples):
                key = stream_key(seed, s, start, 0, ROLE_SAMPLE)
                stack[0] = start
                top = 1
                v = start
                i = 0
                while vkind[v] != KIND_CUTOFF:
                    if i >= max_len:
                        r_flag[s] = 1
                        break
                    c = choose(nbr_ptr, weight, v, -1, uniform(key, i))
                    i += 1
                    if c < 0:
                        r_flag[s] = 1
                        break
                    v = nbr[nbr_ptr[v] + c]
                    if top >= 2 and stack[top - 2] == v:
                        top -= 1
                    else:
                        if top >= cap:
                            cap *= 2
                            stack = <int64_t*>realloc(stack, cap * sizeof(int64_t))
                        stack[top] = v
                        top += 1
                lim = steps + 1 if steps + 1 < top else top
                for j in range(lim):
                    r_out[s, j] = stack[j]
                    if stack[j] == 0 and j > 0:
                        break
    finally:
        free(stack)
    return out, flag


def lerw_markov_batch(const int64_t[::1] nbr_ptr, const int64_t[::1] nbr,
                      const double[::1] weight, const int64_t[::1] parent,
                      const int64_t[::1] slot_in_parent, const int8_t[::1] vkind,
                      int64_t start, int64_t steps, uint64_t seed, int64_t nsamples):
    out = np.full((nsamples, steps + 1), -1, np.int64)
    cdef int64_t[:, ::1] r_out = out
    cdef int64_t s, v, j, c, d, excl
    cdef uint64_t key
    with nogil:
        for s in range(nsamples):
            key = stream_key(seed, s, start, 1, ROLE_SAMPLE)
            v = start
            r_out[s, 0] = v
            excl = -1
            for j in range(1, steps + 1):
                if v == 0 or vkind[v] == KIND_CUTOFF:
                    break
                c = choose(nbr_ptr, weight, v, excl, uniform(key, j - 1))
                if c < 0:
                    break
                d = nbr[nbr_ptr[v] + c]
                excl = slot_in_parent[v] if d == parent[v] else 0
                v = d
                r_out[s, j] = v
    return out
