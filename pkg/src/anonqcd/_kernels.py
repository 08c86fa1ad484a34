"""Hot numerical kernels, compiled with numba unless ANONQCD_NUMBA=0.

Everything here is written against plain numpy arrays so that the same source
runs under the interpreter when the fallback backend is selected. No kernel
raises; failures are reported through status codes that the wrapping modules
turn into exceptions.
"""

import numpy as np

from ._backend import jit_inline, jit_kernel

NEG_INF = -np.inf

# solver status codes
SOLVE_OK = 0
SOLVE_MAXITER = 1
SOLVE_INFEASIBLE = 2

# chunk stop sentinels (nonnegative values are the in-chunk stop offset)
CHUNK_RUNNING = -1
CHUNK_SOLVER_FAILED = -2


@jit_inline
def _lse2(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a >= b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


# ---------------------------------------------------------------------------
# Log-domain dynamic program over label assignments
# ---------------------------------------------------------------------------


@jit_kernel
def _dp_radix(caps, radix):
    size = 1
    K = caps.shape[0]
    for k in range(K):
        radix[k] = size
        size *= caps[k] + 1
    return size


@jit_kernel
def _dp_can(caps, radix, size, can):
    """can[idx, k] = 1 iff state idx has spare capacity in group k.

    Hoists the div/mod capacity test out of the per-sample transition loop.
    """
    K = caps.shape[0]
    for idx in range(size):
        for k in range(K):
            used = (idx // radix[k]) % (caps[k] + 1)
            can[idx, k] = 1 if used < caps[k] else 0


@jit_kernel
def _dp_into(loglik, caps, radix, size, can, buf, lik):
    """Capacity DP over the first ``size`` cells of the (2, size) buffer.

    Runs in linear domain with per-sample max factoring and occasional
    rescaling, so products of hundreds of densities neither under- nor
    overflow while the recursion stays cheap multiply-adds.
    """
    n, K = loglik.shape
    for j in range(size):
        buf[0, j] = 0.0
    buf[0, 0] = 1.0
    par = 0
    logscale = 0.0
    for i in range(n):
        m = NEG_INF
        for k in range(K):
            if loglik[i, k] > m:
                m = loglik[i, k]
        if m == NEG_INF:
            return NEG_INF
        logscale += m
        for k in range(K):
            v = loglik[i, k]
            lik[k] = 0.0 if v == NEG_INF else np.exp(v - m)
        nxt = 1 - par
        for j in range(size):
            buf[nxt, j] = 0.0
        for idx in range(size):
            v = buf[par, idx]
            if v == 0.0:
                continue
            for k in range(K):
                if can[idx, k] != 0:
                    buf[nxt, idx + radix[k]] += v * lik[k]
        par = nxt
        mx = 0.0
        for j in range(size):
            if buf[par, j] > mx:
                mx = buf[par, j]
        if mx == 0.0:
            return NEG_INF
        if mx < 1e-120:
            logscale += np.log(mx)
            inv = 1.0 / mx
            for j in range(size):
                buf[par, j] *= inv
    final = buf[par, size - 1]
    if final == 0.0:
        return NEG_INF
    return logscale + np.log(final)


@jit_kernel
def dp_log_assignment_sum(loglik, caps):
    """log of the sum over all capacity-respecting assignments of samples to
    groups of the product of per-sample likelihoods.

    loglik: (n, K) per-sample per-group log likelihood (-inf allowed).
    caps:   (K,) group capacities with sum n.
    """
    K = caps.shape[0]
    radix = np.empty(K, np.int64)
    size = _dp_radix(caps, radix)
    can = np.empty((size, K), np.uint8)
    _dp_can(caps, radix, size, can)
    buf = np.empty((2, size), np.float64)
    lik = np.empty(K, np.float64)
    return _dp_into(loglik, caps, radix, size, can, buf, lik)


@jit_inline
def dp_discrete(samples, t, scaled, logmax, caps, radix, size, can, buf):
    """Discrete-alphabet capacity DP for row t of a sample block, straight
    from lookup tables.

    scaled[k, x] is the group pmf divided by the per-symbol max over groups;
    logmax[x] restores the factored scale at the end. Equivalent to
    _dp_into on the log-pmf matrix, but each sample costs table lookups and
    multiply-adds only. buf is (2, size) scratch; rows alternate by parity
    rather than swapping references, which would cost refcount traffic.
    """
    n = samples.shape[1]
    K = caps.shape[0]
    for j in range(size):
        buf[0, j] = 0.0
    buf[0, 0] = 1.0
    par = 0
    logscale = 0.0
    for i in range(n):
        x = samples[t, i]
        lm = logmax[x]
        if lm == NEG_INF:
            return NEG_INF
        logscale += lm
        nxt = 1 - par
        for j in range(size):
            buf[nxt, j] = 0.0
        for idx in range(size):
            v = buf[par, idx]
            if v == 0.0:
                continue
            for k in range(K):
                if can[idx, k] != 0:
                    buf[nxt, idx + radix[k]] += v * scaled[k, x]
        par = nxt
        mx = 0.0
        for j in range(size):
            if buf[par, j] > mx:
                mx = buf[par, j]
        if mx == 0.0:
            return NEG_INF
        if mx < 1e-120:
            logscale += np.log(mx)
            inv = 1.0 / mx
            for j in range(size):
                buf[par, j] *= inv
    final = buf[par, size - 1]
    if final == 0.0:
        return NEG_INF
    return logscale + np.log(final)


@jit_kernel
def _fill_loglik_discrete(row, logp, out):
    n = row.shape[0]
    K = logp.shape[0]
    for i in range(n):
        x = row[i]
        for k in range(K):
            out[i, k] = logp[k, x]


@jit_kernel
def _scaled_tables(logp, scaled, logmax):
    """Per-symbol max-factored pmf tables for the discrete capacity DP."""
    K, S = logp.shape
    for s in range(S):
        m = NEG_INF
        for k in range(K):
            if logp[k, s] > m:
                m = logp[k, s]
        logmax[s] = m
        for k in range(K):
            v = logp[k, s]
            scaled[k, s] = 0.0 if v == NEG_INF or m == NEG_INF else np.exp(v - m)


@jit_kernel
def _fill_loglik_gaussian(row, means, variances, out):
    n = row.shape[0]
    K = means.shape[0]
    for k in range(K):
        c = -0.5 * np.log(2.0 * np.pi * variances[k])
        inv2v = 0.5 / variances[k]
        for i in range(n):
            d = row[i] - means[k]
            out[i, k] = c - d * d * inv2v


# ---------------------------------------------------------------------------
# Constrained KL-divergence minimization (dual solver)
# ---------------------------------------------------------------------------


@jit_kernel
def _refresh_tilt(logp, lam, U, logz, mix, alpha):
    """Per-group tilted distributions U_k(x) = p_k(x) e^{-lam(x)} / Z_k.

    Returns 0 on success, -1 if some group has no mass on the active support
    (the constrained problem is then infeasible).
    """
    K, S = logp.shape
    for s in range(S):
        mix[s] = 0.0
    for k in range(K):
        m = NEG_INF
        for s in range(S):
            v = logp[k, s] - lam[s]
            if v > m:
                m = v
        if m == NEG_INF:
            return -1
        z = 0.0
        for s in range(S):
            v = logp[k, s] - lam[s]
            if v == NEG_INF:
                U[k, s] = 0.0
            else:
                U[k, s] = np.exp(v - m)
                z += U[k, s]
        logz[k] = m + np.log(z)
        for s in range(S):
            U[k, s] /= z
            mix[s] += alpha[k] * U[k, s]
    return 0


@jit_kernel
def _kl_objective(logp, U, alpha):
    """Weighted sum of KL divergences of the tilted U_k from the p_k."""
    K, S = logp.shape
    total = 0.0
    for k in range(K):
        acc = 0.0
        for s in range(S):
            u = U[k, s]
            if u > 0.0:
                acc += u * (np.log(u) - logp[k, s])
        total += alpha[k] * acc
    if total < 0.0:
        total = 0.0
    return total


@jit_kernel
def _gauss_solve(M, rhs, out):
    """Solve M x = rhs in place by Gaussian elimination with partial
    pivoting. Returns False on a (near-)singular pivot."""
    n = M.shape[0]
    for col in range(n):
        piv = col
        best = abs(M[col, col])
        for r in range(col + 1, n):
            a = abs(M[r, col])
            if a > best:
                best = a
                piv = r
        if best < 1e-300:
            return False
        if piv != col:
            for c in range(col, n):
                tmp = M[col, c]
                M[col, c] = M[piv, c]
                M[piv, c] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        inv = 1.0 / M[col, col]
        for r in range(col + 1, n):
            f = M[r, col] * inv
            if f != 0.0:
                for c in range(col, n):
                    M[r, c] -= f * M[col, c]
                rhs[r] -= f * rhs[col]
    for r in range(n - 1, -1, -1):
        acc = rhs[r]
        for c in range(r + 1, n):
            acc -= M[r, c] * out[c]
        out[r] = acc / M[r, r]
        if not np.isfinite(out[r]):
            return False
    return True


@jit_kernel
def exponent_dual_solve(logp, alpha, q, lam_init, max_iter, tol_res, tol_obj):
    """Minimize sum_k alpha_k KL(U_k || p_k) subject to sum_k alpha_k U_k = q.

    All arrays are restricted to the support of q (q > 0 everywhere). The
    stationarity conditions make every optimal U_k an exponential tilt of p_k
    by a shared vector lam; the tilt is driven to the constraint by Newton
    steps on the mixture residual. The residual Jacobian is singular along
    the constant shift of lam, so the last coordinate stays pinned and the
    reduced system is solved exactly. Steps halve until the residual strictly
    decreases, with a multiplicative (mirror) update as a stall fallback.

    Returns (value, U, lam, residual, iterations, status).
    """
    K, S = logp.shape
    lam = lam_init.copy()
    U = np.zeros((K, S))
    logz = np.zeros(K)
    mix = np.zeros(S)
    U2 = np.zeros((K, S))
    logz2 = np.zeros(K)
    mix2 = np.zeros(S)
    lam2 = np.zeros(S)

    if _refresh_tilt(logp, lam, U, logz, mix, alpha) < 0:
        return np.inf, U, lam, np.inf, 0, SOLVE_INFEASIBLE
    res = 0.0
    for s in range(S):
        d = abs(mix[s] - q[s])
        if d > res:
            res = d
    prev_obj = _kl_objective(logp, U, alpha)
    if res <= tol_res:
        return prev_obj, U, lam, res, 0, SOLVE_OK

    Sr = S - 1
    jac = np.empty((Sr, Sr))
    rhs = np.empty(Sr)
    delta = np.zeros(Sr)
    it = 0
    have_obj = False
    while it < max_iter:
        it += 1
        at_tol = res <= tol_res
        if at_tol:
            obj = _kl_objective(logp, U, alpha)
            if have_obj and abs(obj - prev_obj) <= tol_obj:
                return obj, U, lam, res, it, SOLVE_OK
            prev_obj = obj
            have_obj = True
        # reduced Newton direction (lam[S-1] pinned)
        solved = False
        if Sr > 0:
            for s in range(Sr):
                rhs[s] = mix[s] - q[s]
                for t in range(Sr):
                    acc = 0.0
                    for k in range(K):
                        acc += alpha[k] * U[k, s] * U[k, t]
                    jac[s, t] = -acc
                jac[s, s] += mix[s] * (1.0 + 1e-14)
            solved = _gauss_solve(jac, rhs, delta)
        accepted = False
        if solved:
            scale = 1.0
            tries = 1 if at_tol else 60
            for _h in range(tries):
                for s in range(Sr):
                    lam2[s] = lam[s] + scale * delta[s]
                lam2[S - 1] = lam[S - 1]
                if _refresh_tilt(logp, lam2, U2, logz2, mix2, alpha) < 0:
                    scale *= 0.5
                    continue
                res2 = 0.0
                for s in range(S):
                    d = abs(mix2[s] - q[s])
                    if d > res2:
                        res2 = d
                if res2 < res:
                    tl = lam
                    lam = lam2
                    lam2 = tl
                    tU = U
                    U = U2
                    U2 = tU
                    tz = logz
                    logz = logz2
                    logz2 = tz
                    tm = mix
                    mix = mix2
                    mix2 = tm
                    res = res2
                    accepted = True
                    break
                scale *= 0.5
        if not accepted:
            if at_tol:
                # residual at tolerance and no step improves it: the iterate
                # is at its floating-point fixed point, nothing can change
                return prev_obj, U, lam, res, it, SOLVE_OK
            # mirror-descent style multiplicative correction
            for s in range(S):
                lam[s] += 0.7 * (np.log(mix[s]) - np.log(q[s]))
            if _refresh_tilt(logp, lam, U, logz, mix, alpha) < 0:
                return np.inf, U, lam, np.inf, it, SOLVE_INFEASIBLE
            res = 0.0
            for s in range(S):
                d = abs(mix[s] - q[s])
                if d > res:
                    res = d
    return prev_obj, U, lam, res, it, SOLVE_MAXITER


@jit_kernel
def exponent_value_probs(q, logp, alpha, max_iter):
    """Exponent value at a raw probability vector (cold start).

    Restricts to the support of q internally. Returns (value, status).
    """
    S = q.shape[0]
    K = logp.shape[0]
    nact = 0
    for s in range(S):
        if q[s] > 0.0:
            nact += 1
    qa = np.empty(nact, np.float64)
    lp = np.empty((K, nact), np.float64)
    j = 0
    for s in range(S):
        if q[s] > 0.0:
            qa[j] = q[s]
            for k in range(K):
                lp[k, j] = logp[k, s]
            j += 1
    lam0 = np.zeros(nact, np.float64)
    v, _u, _l, _r, _i, st = exponent_dual_solve(lp, alpha, qa, lam0, max_iter, 1e-9, 1e-11)
    return v, st


@jit_kernel
def h_grid_scan(comps, logp0, logp1, alpha, max_iter):
    """Scan integer grid points on the simplex for the cheapest positive-drift
    mixture: min pre-change exponent over points where it exceeds the
    post-change exponent.

    Returns (best_value, best_index, n_positive); best_value < 0 flags a
    solver failure.
    """
    M, S = comps.shape
    q = np.empty(S, np.float64)
    best = np.inf
    besti = -1
    found = 0
    for mi in range(M):
        tot = 0
        for s in range(S):
            tot += comps[mi, s]
        for s in range(S):
            q[s] = comps[mi, s] / tot
        f0, st0 = exponent_value_probs(q, logp0, alpha, max_iter)
        if st0 == SOLVE_MAXITER:
            return -1.0, -1, -1
        f1, st1 = exponent_value_probs(q, logp1, alpha, max_iter)
        if st1 == SOLVE_MAXITER:
            return -1.0, -1, -1
        if st1 == SOLVE_INFEASIBLE:
            continue  # post exponent infinite: never a positive-drift point
        if st0 == SOLVE_INFEASIBLE:
            found += 1  # in the region, but at infinite pre-change cost
            continue
        if f0 >= f1:
            found += 1
            if f0 < best:
                best = f0
                besti = mi
    return best, besti, found


# ---------------------------------------------------------------------------
# Transportation problem (generalized likelihood ratio)
# ---------------------------------------------------------------------------


@jit_kernel
def transport_max_loglik(loglik, supply, caps):
    """Maximum total log likelihood over assignments of grouped samples.

    loglik: (V, K) log likelihood of one sample of value v under group k.
    supply: (V,) how many samples carry each value (sum n).
    caps:   (K,) group capacities (sum n).

    Successive-shortest-path min cost flow on the bipartite value/group
    graph; integral optimum by total unimodularity. Returns -inf when some
    value has zero likelihood under every group.
    """
    V, K = loglik.shape
    rem_supply = supply.copy()
    rem_cap = caps.copy()
    flow = np.zeros((V, K), np.int64)
    INF = np.inf

    # nodes: 0..V-1 values, V..V+K-1 groups
    nnode = V + K
    dist = np.empty(nnode, np.float64)
    par = np.empty(nnode, np.int64)

    remaining = 0
    for v in range(V):
        remaining += rem_supply[v]

    while remaining > 0:
        for i in range(nnode):
            dist[i] = INF
            par[i] = -1
        for v in range(V):
            if rem_supply[v] > 0:
                dist[v] = 0.0
        # Bellman-Ford over residual arcs
        for _round in range(nnode):
            changed = False
            for v in range(V):
                dv = dist[v]
                if dv < INF:
                    for k in range(K):
                        c = -loglik[v, k]
                        if c < INF and dv + c < dist[V + k] - 1e-15:
                            dist[V + k] = dv + c
                            par[V + k] = v
                            changed = True
            for k in range(K):
                dk = dist[V + k]
                if dk < INF:
                    for v in range(V):
                        if flow[v, k] > 0:
                            c = loglik[v, k]
                            if dk + c < dist[v] - 1e-15:
                                dist[v] = dk + c
                                par[v] = V + k
                                changed = True
            if not changed:
                break
        # cheapest reachable group with remaining capacity
        best_k = -1
        best_d = INF
        for k in range(K):
            if rem_cap[k] > 0 and dist[V + k] < best_d:
                best_d = dist[V + k]
                best_k = k
        if best_k < 0:
            return NEG_INF
        # bottleneck along the alternating path
        bottleneck = rem_cap[best_k]
        node = V + best_k
        while True:
            prev = par[node]
            if node >= V:
                pass  # value -> group arc, unbounded
            else:
                if flow[node, prev - V] < bottleneck:
                    bottleneck = flow[node, prev - V]
            node = prev
            if par[node] == -1:
                if rem_supply[node] < bottleneck:
                    bottleneck = rem_supply[node]
                break
        # augment
        node = V + best_k
        while True:
            prev = par[node]
            if node >= V:
                flow[prev, node - V] += bottleneck
            else:
                flow[node, prev - V] -= bottleneck
            node = prev
            if par[node] == -1:
                break
        rem_supply[node] -= bottleneck
        rem_cap[best_k] -= bottleneck
        remaining -= bottleneck

    total = 0.0
    for v in range(V):
        for k in range(K):
            if flow[v, k] > 0:
                total += flow[v, k] * loglik[v, k]
    return total


@jit_kernel
def generalized_increment_discrete(counts, logp0, logp1, caps):
    """Generalized log ratio of a batch given its symbol counts."""
    S = counts.shape[0]
    K = logp0.shape[0]
    nv = 0
    for s in range(S):
        if counts[s] > 0:
            nv += 1
    vals = np.empty(nv, np.int64)
    supply = np.empty(nv, np.int64)
    j = 0
    for s in range(S):
        if counts[s] > 0:
            vals[j] = s
            supply[j] = counts[s]
            j += 1
    c0 = np.empty((nv, K), np.float64)
    c1 = np.empty((nv, K), np.float64)
    for v in range(nv):
        for k in range(K):
            c0[v, k] = logp0[k, vals[v]]
            c1[v, k] = logp1[k, vals[v]]
    m1 = transport_max_loglik(c1, supply, caps)
    m0 = transport_max_loglik(c0, supply, caps)
    return m1 - m0


# ---------------------------------------------------------------------------
# Per-batch increments
# ---------------------------------------------------------------------------


@jit_kernel
def bayes_increment_discrete(row, table):
    inc = 0.0
    for i in range(row.shape[0]):
        inc += table[row[i]]
    return inc


@jit_kernel
def bayes_increment_gaussian(row, means0, vars0, means1, vars1, logalpha):
    n = row.shape[0]
    K = means0.shape[0]
    inc = 0.0
    for i in range(n):
        l0 = NEG_INF
        l1 = NEG_INF
        for k in range(K):
            c0 = -0.5 * np.log(2.0 * np.pi * vars0[k])
            d0 = row[i] - means0[k]
            l0 = _lse2(l0, logalpha[k] + c0 - d0 * d0 * 0.5 / vars0[k])
            c1 = -0.5 * np.log(2.0 * np.pi * vars1[k])
            d1 = row[i] - means1[k]
            l1 = _lse2(l1, logalpha[k] + c1 - d1 * d1 * 0.5 / vars1[k])
        inc += l1 - l0
    return inc


@jit_kernel
def generalized_increment_gaussian(row, means0, vars0, means1, vars1, caps, scratch):
    n = row.shape[0]
    _fill_loglik_gaussian(row, means1, vars1, scratch)
    supply = np.ones(n, np.int64)
    m1 = transport_max_loglik(scratch, supply, caps)
    _fill_loglik_gaussian(row, means0, vars0, scratch)
    m0 = transport_max_loglik(scratch, supply, caps)
    return m1 - m0


# ---------------------------------------------------------------------------
# CuSum chunk loops (one call advances through a block of batches)
# ---------------------------------------------------------------------------
# Detector codes shared with the montecarlo module.

DET_MIXTURE = 0
DET_BAYES = 1
DET_GENERALIZED = 2


@jit_kernel
def run_cusum_chunk_discrete(det, samples, logp0, logp1, caps, table, w, b):
    """Advance a CuSum detector over a block of sorted discrete batches.

    Returns (w, offset) with offset the 0-based index of the stopping batch
    or CHUNK_RUNNING.
    """
    B, n = samples.shape
    K = caps.shape[0]
    S = logp0.shape[1]
    counts = np.zeros(S, np.int64)
    radix = np.empty(K, np.int64)
    size = _dp_radix(caps, radix)
    can = np.empty((size, K), np.uint8)
    _dp_can(caps, radix, size, can)
    buf = np.empty((2, size), np.float64)
    scaled0 = np.empty((K, S), np.float64)
    scaled1 = np.empty((K, S), np.float64)
    logmax0 = np.empty(S, np.float64)
    logmax1 = np.empty(S, np.float64)
    _scaled_tables(logp0, scaled0, logmax0)
    _scaled_tables(logp1, scaled1, logmax1)
    buf0 = buf
    buf1 = np.empty((2, size), np.float64)
    for t in range(B):
        if det == DET_MIXTURE:
            # both hypotheses advanced through one fused pass over the
            # shared state space; per-hypothesis arithmetic matches
            # dp_discrete op for op, so values agree bitwise with the
            # public single-hypothesis path
            for j in range(size):
                buf0[0, j] = 0.0
                buf1[0, j] = 0.0
            buf0[0, 0] = 1.0
            buf1[0, 0] = 1.0
            par = 0
            ls0 = 0.0
            ls1 = 0.0
            dead0 = False
            dead1 = False
            for i in range(n):
                x = samples[t, i]
                lm0 = logmax0[x]
                lm1 = logmax1[x]
                if lm0 == NEG_INF:
                    dead0 = True
                if lm1 == NEG_INF:
                    dead1 = True
                if dead0 and dead1:
                    break
                ls0 += lm0
                ls1 += lm1
                nxt = 1 - par
                for j in range(size):
                    buf0[nxt, j] = 0.0
                    buf1[nxt, j] = 0.0
                for idx in range(size):
                    v0 = buf0[par, idx]
                    v1 = buf1[par, idx]
                    if v0 == 0.0 and v1 == 0.0:
                        continue
                    for k in range(K):
                        if can[idx, k] != 0:
                            j = idx + radix[k]
                            if v0 != 0.0:
                                buf0[nxt, j] += v0 * scaled0[k, x]
                            if v1 != 0.0:
                                buf1[nxt, j] += v1 * scaled1[k, x]
                par = nxt
                mx0 = 0.0
                mx1 = 0.0
                for j in range(size):
                    if buf0[par, j] > mx0:
                        mx0 = buf0[par, j]
                    if buf1[par, j] > mx1:
                        mx1 = buf1[par, j]
                if mx0 == 0.0:
                    dead0 = True
                elif mx0 < 1e-120:
                    ls0 += np.log(mx0)
                    inv = 1.0 / mx0
                    for j in range(size):
                        buf0[par, j] *= inv
                if mx1 == 0.0:
                    dead1 = True
                elif mx1 < 1e-120:
                    ls1 += np.log(mx1)
                    inv = 1.0 / mx1
                    for j in range(size):
                        buf1[par, j] *= inv
                if dead0 and dead1:
                    break
            if dead0:
                s0 = NEG_INF
            else:
                f0 = buf0[par, size - 1]
                s0 = NEG_INF if f0 == 0.0 else ls0 + np.log(f0)
            if dead1:
                s1 = NEG_INF
            else:
                f1 = buf1[par, size - 1]
                s1 = NEG_INF if f1 == 0.0 else ls1 + np.log(f1)
            inc = s1 - s0
        elif det == DET_BAYES:
            inc = 0.0
            for i in range(n):
                inc += table[samples[t, i]]
        else:
            for s in range(S):
                counts[s] = 0
            for i in range(n):
                counts[samples[t, i]] += 1
            inc = generalized_increment_discrete(counts, logp0, logp1, caps)
        if w < 0.0:
            w = 0.0
        w += inc
        if w >= b:
            return w, t
    return w, CHUNK_RUNNING


@jit_kernel
def run_cusum_chunk_gaussian(
    det, samples, means0, vars0, means1, vars1, caps, logalpha, w, b
):
    B, n = samples.shape
    K = caps.shape[0]
    scratch = np.empty((n, K), np.float64)
    radix = np.empty(K, np.int64)
    size = _dp_radix(caps, radix)
    can = np.empty((size, K), np.uint8)
    _dp_can(caps, radix, size, can)
    buf = np.empty((2, size), np.float64)
    lik = np.empty(K, np.float64)
    for t in range(B):
        row = samples[t]
        if det == DET_MIXTURE:
            _fill_loglik_gaussian(row, means1, vars1, scratch)
            s1 = _dp_into(scratch, caps, radix, size, can, buf, lik)
            _fill_loglik_gaussian(row, means0, vars0, scratch)
            s0 = _dp_into(scratch, caps, radix, size, can, buf, lik)
            inc = s1 - s0
        elif det == DET_BAYES:
            inc = bayes_increment_gaussian(row, means0, vars0, means1, vars1, logalpha)
        else:
            inc = generalized_increment_gaussian(row, means0, vars0, means1, vars1, caps, scratch)
        if w < 0.0:
            w = 0.0
        w += inc
        if w >= b:
            return w, t
    return w, CHUNK_RUNNING


# ---------------------------------------------------------------------------
# Efficient test chunk loop with a shared drift-increment cache
# ---------------------------------------------------------------------------

_MASK63 = 0x7FFFFFFFFFFFFFFF
_MIX64 = 0x9E3779B97F4A7C15 & _MASK63


@jit_kernel
def compose_key(counts, total, pascal):
    """Unique int64 key for a count vector: compositions with a smaller total
    come first, ties broken by lexicographic rank. pascal[r, c] = C(r, c),
    exact for every entry this encoding touches.
    """
    X = counts.shape[0]
    # number of compositions with total' < total
    key = pascal[total + X - 1, X]
    rem = total
    for s in range(X - 1):
        c = counts[s]
        qparts = X - s - 1
        # compositions of the remainder whose first coordinate is below c
        key += pascal[rem + qparts, qparts] - pascal[rem - c + qparts, qparts]
        rem -= c
    return key


@jit_kernel
def _cache_lookup(key, cache_keys):
    cap = cache_keys.shape[0]
    idx = ((key * _MIX64) & _MASK63) & (cap - 1)
    while cache_keys[idx] != 0:
        if cache_keys[idx] == key:
            return idx, True
        idx = (idx + 1) & (cap - 1)
    return idx, False


@jit_kernel
def _solve_gap(counts, total, logp0, logp1, alpha, lam0, lam1, warm, max_iter):
    """Drift increment at the pooled window type: exponent gap f0 - f1.

    Returns (gap, status). Infeasible sides map to +-inf; status mirrors the
    worst solver status.
    """
    S = counts.shape[0]
    K = logp0.shape[0]
    nact = 0
    for s in range(S):
        if counts[s] > 0:
            nact += 1
    act = np.empty(nact, np.int64)
    j = 0
    for s in range(S):
        if counts[s] > 0:
            act[j] = s
            j += 1
    q = np.empty(nact, np.float64)
    lp0 = np.empty((K, nact), np.float64)
    lp1 = np.empty((K, nact), np.float64)
    li0 = np.zeros(nact, np.float64)
    li1 = np.zeros(nact, np.float64)
    for j in range(nact):
        s = act[j]
        q[j] = counts[s] / total
        for k in range(K):
            lp0[k, j] = logp0[k, s]
            lp1[k, j] = logp1[k, s]
        if warm:
            li0[j] = lam0[s]
            li1[j] = lam1[s]
    v0, _u0, l0, _r0, _i0, st0 = exponent_dual_solve(lp0, alpha, q, li0, max_iter, 1e-9, 1e-11)
    v1, _u1, l1, _r1, _i1, st1 = exponent_dual_solve(lp1, alpha, q, li1, max_iter, 1e-9, 1e-11)
    if st0 == SOLVE_MAXITER or st1 == SOLVE_MAXITER:
        return 0.0, SOLVE_MAXITER
    if st0 == SOLVE_INFEASIBLE and st1 == SOLVE_INFEASIBLE:
        return 0.0, SOLVE_INFEASIBLE
    for j in range(nact):
        s = act[j]
        lam0[s] = l0[j]
        lam1[s] = l1[j]
    if st0 == SOLVE_INFEASIBLE:
        return np.inf, SOLVE_OK
    if st1 == SOLVE_INFEASIBLE:
        return NEG_INF, SOLVE_OK
    return v0 - v1, SOLVE_OK


@jit_kernel
def run_efficient_chunk(
    samples,
    logp0,
    logp1,
    alpha,
    b,
    counts,
    t_hat,
    w,
    lam0,
    lam1,
    cache_keys,
    cache_vals,
    cache_fill,
    pascal,
    cache_max_total,
    max_iter,
):
    """Advance the efficient test over a block of sorted discrete batches.

    Drift increments of windows up to cache_max_total pooled samples are
    memoized in the caller-owned cache. Cached values always come from
    cold-start solves, so they are pure functions of the pooled counts and
    the cache may be shared across replications and threads without changing
    any result. Larger windows use the replication-local warm-started duals,
    going cold on the first step past the cache boundary so the trajectory
    never depends on hit/miss history.

    Returns (offset, t_hat, w) where offset is the stopping index,
    CHUNK_RUNNING, or CHUNK_SOLVER_FAILED.
    """
    B, n = samples.shape
    S = counts.shape[0]
    cap = cache_vals.shape[0]
    max_fill = (cap * 7) // 10
    for t in range(B):
        row = samples[t]
        if w <= 0.0:
            for s in range(S):
                counts[s] = 0
            for i in range(n):
                counts[row[i]] += 1
            t_hat = 1
        else:
            for i in range(n):
                counts[row[i]] += 1
            t_hat += 1
        total = t_hat * n
        if total <= cache_max_total:
            key = compose_key(counts, total, pascal)
            idx, hit = _cache_lookup(key, cache_keys)
            if hit:
                gap = cache_vals[idx]
            else:
                gap, status = _solve_gap(
                    counts, total, logp0, logp1, alpha, lam0, lam1, False, max_iter
                )
                if status == SOLVE_MAXITER or status == SOLVE_INFEASIBLE:
                    return CHUNK_SOLVER_FAILED, t_hat, w
                if cache_fill[0] < max_fill:
                    cache_keys[idx] = key
                    cache_vals[idx] = gap
                    cache_fill[0] += 1
        else:
            warm_big = (total - n) > cache_max_total
            gap, status = _solve_gap(
                counts, total, logp0, logp1, alpha, lam0, lam1, warm_big, max_iter
            )
            if status == SOLVE_MAXITER or status == SOLVE_INFEASIBLE:
                return CHUNK_SOLVER_FAILED, t_hat, w
        w = total * gap
        if w >= b:
            return t, t_hat, w
    return CHUNK_RUNNING, t_hat, w
