"""Compiled event-driven kernels.

Every kernel keeps one aggregated rate per lattice site in a binary sum tree,
so an event costs O(log n): sample a leaf, then a move within the site, then
refresh the (at most two) touched leaves.  Internal nodes are always recomputed
as the sum of their children, so totals never drift.
"""
import numpy as np
from numba import njit

_NO_TIME = -1.0


@njit(cache=True, nogil=True)
def _tree_size(n):
    size = 1
    while size < n:
        size *= 2
    return size


@njit(cache=True, nogil=True)
def _tree_rebuild(tree, size):
    for j in range(size - 1, 0, -1):
        tree[j] = tree[2 * j] + tree[2 * j + 1]


@njit(cache=True, nogil=True)
def _tree_set(tree, size, i, v):
    j = i + size
    tree[j] = v
    j //= 2
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j //= 2


@njit(cache=True, nogil=True)
def _tree_find(tree, size, u):
    """Leaf index holding cumulative position u, and the residual offset."""
    j = 1
    while j < size:
        left = tree[2 * j]
        if (u < left and left > 0.0) or tree[2 * j + 1] <= 0.0:
            j = 2 * j
        else:
            u -= left
            j = 2 * j + 1
    leaf = tree[j]
    if u >= leaf:
        u = leaf * 0.9999999999999999
    if u < 0.0:
        u = 0.0
    return j - size, u


@njit(cache=True, nogil=True)
def _pick(u, rates):
    """Index of the first entry whose cumulative sum exceeds u (skipping zeros)."""
    last = -1
    for m in range(rates.size):
        r = rates[m]
        if r > 0.0:
            last = m
            if u < r:
                return m
            u -= r
    return last


# --------------------------------------------------------------------------
# single zero-range process
# --------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def zrp_batch(occ0, cls, rp, rm, probes, horizon, nrep, rng,
              snaps, events, absorbed, first_site, first_dir, lo_site, hi_site):
    n = occ0.size
    size = _tree_size(n)
    P = probes.size
    occ = np.empty(n, np.int64)
    tree = np.zeros(2 * size)
    for r in range(nrep):
        for i in range(n):
            occ[i] = occ0[i]
        tree[:] = 0.0
        lo = n
        hi = -1
        for i in range(n):
            tree[size + i] = rp[cls[i], occ[i]] + rm[cls[i], occ[i]]
            if occ[i] > 0:
                if i < lo:
                    lo = i
                hi = i
        _tree_rebuild(tree, size)
        t = 0.0
        pi = 0
        ev = 0
        ab = _NO_TIME
        fs = -1
        fd = 0
        while True:
            total = tree[1]
            if total <= 0.0:
                ab = t
                break
            tn = t + rng.standard_exponential() / total
            while pi < P and probes[pi] < tn:
                snaps[r, pi, :] = occ
                pi += 1
            if tn > horizon:
                break
            t = tn
            site, u = _tree_find(tree, size, rng.random() * total)
            c = cls[site]
            a = occ[site]
            right = rp[c, a]
            if (u < right and right > 0.0) or rm[c, a] <= 0.0:
                d = 1
            else:
                d = -1
            dest = site + d
            occ[site] -= 1
            occ[dest] += 1
            _tree_set(tree, size, site, rp[c, occ[site]] + rm[c, occ[site]])
            cd = cls[dest]
            _tree_set(tree, size, dest, rp[cd, occ[dest]] + rm[cd, occ[dest]])
            if dest < lo:
                lo = dest
            if dest > hi:
                hi = dest
            if ev == 0:
                fs = site
                fd = d
            ev += 1
        while pi < P:
            snaps[r, pi, :] = occ
            pi += 1
        events[r] = ev
        absorbed[r] = ab
        first_site[r] = fs
        first_dir[r] = fd
        lo_site[r] = lo
        hi_site[r] = hi


# --------------------------------------------------------------------------
# attractive pair coupling
# --------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def _pair_leaf(i, A, B, clsA, rpA, rmA, clsB, rpB, rmB):
    aR = rpA[clsA[i], A[i]]
    bR = rpB[clsB[i], B[i]]
    aL = rmA[clsA[i], A[i]]
    bL = rmB[clsB[i], B[i]]
    return max(aR, bR) + max(aL, bL)


@njit(cache=True, nogil=True)
def pair_batch(A0, B0, clsA, rpA, rmA, clsB, rpB, rmB, probes, horizon, nrep, rng,
               check_order, stop_on_coalesce, snapsA, snapsB, events, coal, violations):
    n = A0.size
    size = _tree_size(n)
    P = probes.size
    A = np.empty(n, np.int64)
    B = np.empty(n, np.int64)
    D = np.empty(n, np.int64)
    tree = np.zeros(2 * size)
    rates = np.empty(6)
    for r in range(nrep):
        mismatch = 0
        hA = 0
        hB = 0
        for i in range(n):
            A[i] = A0[i]
            B[i] = B0[i]
            hA += A[i]
            hB += B[i]
            D[i] = hA - hB
            mismatch += abs(A[i] - B[i])
        tree[:] = 0.0
        for i in range(n):
            tree[size + i] = _pair_leaf(i, A, B, clsA, rpA, rmA, clsB, rpB, rmB)
        _tree_rebuild(tree, size)
        t = 0.0
        pi = 0
        ev = 0
        viol = 0
        ct = _NO_TIME
        if mismatch == 0:
            ct = 0.0
        while True:
            if stop_on_coalesce and ct >= 0.0:
                break
            total = tree[1]
            if total <= 0.0:
                break
            tn = t + rng.standard_exponential() / total
            while pi < P and probes[pi] < tn:
                snapsA[r, pi, :] = A
                snapsB[r, pi, :] = B
                pi += 1
            if tn > horizon:
                break
            t = tn
            site, u = _tree_find(tree, size, rng.random() * total)
            aR = rpA[clsA[site], A[site]]
            bR = rpB[clsB[site], B[site]]
            aL = rmA[clsA[site], A[site]]
            bL = rmB[clsB[site], B[site]]
            jR = min(aR, bR)
            jL = min(aL, bL)
            rates[0] = jR
            rates[1] = aR - jR
            rates[2] = bR - jR
            rates[3] = jL
            rates[4] = aL - jL
            rates[5] = bL - jL
            m = _pick(u, rates)
            d = 1 if m < 3 else -1
            moveA = m == 0 or m == 1 or m == 3 or m == 4
            moveB = m == 0 or m == 2 or m == 3 or m == 5
            dest = site + d
            before = abs(A[site] - B[site]) + abs(A[dest] - B[dest])
            if moveA:
                A[site] -= 1
                A[dest] += 1
            if moveB:
                B[site] -= 1
                B[dest] += 1
            mismatch += abs(A[site] - B[site]) + abs(A[dest] - B[dest]) - before
            if moveA != moveB:
                idx = site if d == 1 else dest
                sgn = -1 if d == 1 else 1
                if moveB:
                    sgn = -sgn
                D[idx] += sgn
                if check_order and D[idx] < 0:
                    viol += 1
            _tree_set(tree, size, site, _pair_leaf(site, A, B, clsA, rpA, rmA, clsB, rpB, rmB))
            _tree_set(tree, size, dest, _pair_leaf(dest, A, B, clsA, rpA, rmA, clsB, rpB, rmB))
            ev += 1
            if mismatch == 0 and ct < 0.0:
                ct = t
        while pi < P:
            snapsA[r, pi, :] = A
            snapsB[r, pi, :] = B
            pi += 1
        events[r] = ev
        coal[r] = ct
        violations[r] = viol


# --------------------------------------------------------------------------
# two-colour process with a wall, optionally coupled to a plain ZRP
# --------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def _colored_rates(i, b, w, z, wall, n, g, p, q, g1, gbar, has_z, out):
    bR = 0.0
    bL = 0.0
    wR = 0.0
    wL = 0.0
    if i < wall:
        bR = p * g[b[i]]
        if i >= 1:
            bL = q * g[b[i]]
    elif i == wall:
        if i >= 1 and b[i] >= 1:
            bL = q * g[w[i] + b[i]]
    if i >= wall and w[i] >= 1:
        if i <= n - 2:
            wR = p * g1
        if i >= wall + 1:
            wL = q * gbar
    zR = 0.0
    zL = 0.0
    if has_z:
        if i <= n - 2:
            zR = p * g[z[i]]
        if i >= 1:
            zL = q * g[z[i]]
    out[0] = bR
    out[1] = wR
    out[2] = zR
    out[3] = bL
    out[4] = wL
    out[5] = zL
    return max(bR + wR, zR) + max(bL + wL, zL)


@njit(cache=True, nogil=True)
def colored_batch(b0, w0, z0, has_z, wall, g, p, g1, gbar, probes, horizon, nrep, rng,
                  snapsB, snapsW, snapsZ, events, taus, violations, region_bad):
    n = b0.size
    q = 1.0 - p
    size = _tree_size(n)
    P = probes.size
    b = np.empty(n, np.int64)
    w = np.empty(n, np.int64)
    z = np.empty(n, np.int64)
    D = np.empty(n, np.int64)
    tree = np.zeros(2 * size)
    rt = np.empty(6)
    ev6 = np.empty(6)
    for r in range(nrep):
        hc = 0
        hz = 0
        for i in range(n):
            b[i] = b0[i]
            w[i] = w0[i]
            z[i] = z0[i]
            hc += b[i] + w[i]
            hz += z[i]
            D[i] = hc - hz
        tree[:] = 0.0
        for i in range(n):
            tree[size + i] = _colored_rates(i, b, w, z, wall, n, g, p, q, g1, gbar, has_z, rt)
        _tree_rebuild(tree, size)
        tau = _NO_TIME
        if b[wall] <= 1:
            tau = 0.0
        t = 0.0
        pi = 0
        ev = 0
        viol = 0
        bad = 0
        while True:
            total = tree[1]
            if total <= 0.0:
                break
            tn = t + rng.standard_exponential() / total
            while pi < P and probes[pi] < tn:
                snapsB[r, pi, :] = b
                snapsW[r, pi, :] = w
                snapsZ[r, pi, :] = z
                pi += 1
            if tn > horizon:
                break
            t = tn
            site, u = _tree_find(tree, size, rng.random() * total)
            _colored_rates(site, b, w, z, wall, n, g, p, q, g1, gbar, has_z, rt)
            cR = rt[0] + rt[1]
            cL = rt[3] + rt[4]
            jR = min(cR, rt[2])
            jL = min(cL, rt[5])
            ev6[0] = jR
            ev6[1] = cR - jR
            ev6[2] = rt[2] - jR
            ev6[3] = jL
            ev6[4] = cL - jL
            ev6[5] = rt[5] - jL
            m = _pick(u, ev6)
            d = 1 if m < 3 else -1
            moveC = m == 0 or m == 1 or m == 3 or m == 4
            moveZ = m == 0 or m == 2 or m == 3 or m == 5
            dest = site + d
            pre_tau = tau < 0.0
            if moveC:
                if d == 1:
                    black = rng.random() * cR < rt[0]
                else:
                    black = rng.random() * cL < rt[3]
                if black:
                    b[site] -= 1
                    b[dest] += 1
                    if dest > wall:
                        bad += 1
                else:
                    w[site] -= 1
                    w[dest] += 1
                    if dest < wall:
                        bad += 1
            if moveZ:
                z[site] -= 1
                z[dest] += 1
            if moveC != moveZ:
                idx = site if d == 1 else dest
                sgn = -1 if d == 1 else 1
                if moveZ:
                    sgn = -sgn
                D[idx] += sgn
                if has_z and pre_tau and D[idx] < 0:
                    viol += 1
            if tau < 0.0 and b[wall] <= 1:
                tau = t
            _tree_set(tree, size, site, _colored_rates(site, b, w, z, wall, n, g, p, q, g1, gbar, has_z, rt))
            _tree_set(tree, size, dest, _colored_rates(dest, b, w, z, wall, n, g, p, q, g1, gbar, has_z, rt))
            ev += 1
        while pi < P:
            snapsB[r, pi, :] = b
            snapsW[r, pi, :] = w
            snapsZ[r, pi, :] = z
            pi += 1
        events[r] = ev
        taus[r] = tau
        violations[r] = viol
        region_bad[r] = bad


# --------------------------------------------------------------------------
# exclusion process
# --------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def _asep_leaf(i, xi, M, p, q):
    if xi[i] == 0:
        return 0.0
    v = 0.0
    if i + 1 < M and xi[i + 1] == 0:
        v += p
    if i >= 1 and xi[i - 1] == 0:
        v += q
    return v


@njit(cache=True, nogil=True)
def asep_batch(xi0, p, probes, horizon, nrep, rng, snaps, events, first_time):
    M = xi0.size
    q = 1.0 - p
    size = _tree_size(M)
    P = probes.size
    xi = np.empty(M, np.int64)
    tree = np.zeros(2 * size)
    for r in range(nrep):
        for i in range(M):
            xi[i] = xi0[i]
        tree[:] = 0.0
        for i in range(M):
            tree[size + i] = _asep_leaf(i, xi, M, p, q)
        _tree_rebuild(tree, size)
        t = 0.0
        pi = 0
        ev = 0
        ft = _NO_TIME
        while True:
            total = tree[1]
            if total <= 0.0:
                break
            tn = t + rng.standard_exponential() / total
            while pi < P and probes[pi] < tn:
                snaps[r, pi, :] = xi
                pi += 1
            if tn > horizon:
                break
            t = tn
            site, u = _tree_find(tree, size, rng.random() * total)
            right = p if (site + 1 < M and xi[site + 1] == 0) else 0.0
            if (u < right and right > 0.0) or not (site >= 1 and xi[site - 1] == 0 and q > 0.0):
                dest = site + 1
            else:
                dest = site - 1
            xi[site] = 0
            xi[dest] = 1
            lo = min(site, dest) - 1
            hi = max(site, dest) + 1
            for j in range(max(lo, 0), min(hi, M - 1) + 1):
                _tree_set(tree, size, j, _asep_leaf(j, xi, M, p, q))
            if ev == 0:
                ft = t
            ev += 1
        while pi < P:
            snaps[r, pi, :] = xi
            pi += 1
        events[r] = ev
        first_time[r] = ft


# --------------------------------------------------------------------------
# Metropolis sampler for the reversible stationary law
# --------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def metropolis_chain(occ0, log_g, log_ratio, nsamp, burn, thin, rng, out):
    """Single-particle moves: pick a site and a direction uniformly (symmetric proposal)."""
    n = occ0.size
    occ = occ0.copy()
    total = burn + nsamp * thin
    s = 0
    accepted = 0
    for step in range(total):
        i = int(rng.random() * n)
        if i >= n:
            i = n - 1
        d = 1 if rng.random() < 0.5 else -1
        j = i + d
        if occ[i] > 0 and 0 <= j < n:
            lr = d * log_ratio + log_g[occ[i]] - log_g[occ[j] + 1]
            if lr >= 0.0 or np.log(rng.random()) < lr:
                occ[i] -= 1
                occ[j] += 1
                accepted += 1
        if step >= burn and (step - burn) % thin == thin - 1:
            out[s, :] = occ
            s += 1
    return accepted
