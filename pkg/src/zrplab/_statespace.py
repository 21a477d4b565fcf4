"""Compiled enumeration of the configurations of k particles on N sites.

States are ordered so that the wedge (all particles on site 1) has rank 0 and
the vee (all on site N) has the last rank: ascending lexicographic order of the
sorted particle sites, equivalently descending lexicographic order of the
occupancy vector.  Two encodings are used, whichever is shorter:

* ``pos``  sorted particle sites s_0 <= ... <= s_{k-1} (when k <= N - 1),
* ``occ``  the occupancy vector itself (otherwise).

With c_j = s_j + j the state is a k-subset of {0..M-1}, M = N + k - 1, and
rank = C(M, k) - 1 - sum_j C(M-1-c_j, k-j).  In occupancy form,
rank = sum_i C(r_i - eta_i + N-2-i, N-1-i) with r_i the particles on sites >= i.
A single jump changes one term of either sum, so neighbour ranks are O(1).
"""
import numpy as np
from numba import njit

_CAP = np.int64(1) << np.int64(62)


@njit(cache=True)
def binom_table(nmax, w):
    B = np.zeros((nmax + 1, w + 1), np.int64)
    for n in range(nmax + 1):
        B[n, 0] = 1
        for m in range(1, min(n, w) + 1):
            v = B[n - 1, m - 1] + B[n - 1, m]
            B[n, m] = v if v < _CAP else _CAP
    return B


@njit(cache=True)
def _C(B, n, m):
    if n < 0 or m < 0 or m > n:
        return np.int64(0)
    return B[n, m]


# -------------------------------------------------------------- ranking
@njit(cache=True)
def rank_occ_rows(occs, N, k, B, use_pos):
    out = np.empty(occs.shape[0], np.int64)
    M = N + k - 1
    for r in range(occs.shape[0]):
        if use_pos:
            acc = np.int64(0)
            j = 0
            for site in range(N):
                for _ in range(occs[r, site]):
                    acc += _C(B, M - 1 - (site + j), k - j)
                    j += 1
            out[r] = _C(B, M, k) - 1 - acc
        else:
            acc = np.int64(0)
            rem = k
            for i in range(N - 1):
                acc += _C(B, rem - occs[r, i] + N - 2 - i, N - 1 - i)
                rem -= occs[r, i]
            out[r] = acc
    return out


@njit(cache=True)
def unrank(rank, N, k, B, use_pos):
    occ = np.zeros(N, np.int64)
    M = N + k - 1
    if use_pos:
        # greedy on the combination c_0 < ... < c_{k-1}
        target = _C(B, M, k) - 1 - rank
        c_prev = -1
        for j in range(k):
            c = c_prev + 1
            # choose the smallest c with C(M-1-c, k-j) <= remaining target budget
            while _C(B, M - 1 - c, k - j) > target:
                c += 1
            target -= _C(B, M - 1 - c, k - j)
            occ[c - j] += 1
            c_prev = c
        return occ
    rem = k
    for i in range(N - 1):
        v = rem
        while True:
            cnt = _C(B, rem - v + N - 2 - i, N - 2 - i)
            if rank < cnt:
                break
            rank -= cnt
            v -= 1
        occ[i] = v
        rem -= v
    occ[N - 1] = rem
    return occ


# -------------------------------------------------------------- generator
@njit(cache=True)
def zrp_generator(N, k, S, B, RP, RM, use_pos, rows, cols, vals, diag, ell, top, wsum, lgsum, lgf):
    """Off-diagonal rates (COO), diagonal, and per-state summaries.

    ell: left-most occupied site (1-based); top: occupancy of site N;
    wsum: sum_y y * eta(y) (1-based); lgsum: sum_y log g(eta(y))!.
    Returns the number of off-diagonal entries written.
    """
    M = N + k - 1
    nnz = 0
    if use_pos:
        s = np.zeros(k, np.int64)
        for idx in range(S):
            sr = 0.0
            sl = 0.0
            j = 0
            ws = 0
            lg = 0.0
            while j < k:
                x = s[j]
                a = j
                while j < k and s[j] == x:
                    j += 1
                b = j - 1
                cnt = b - a + 1
                ws += (x + 1) * cnt
                lg += lgf[cnt]
                if x < N - 1:
                    rate = RP[x, cnt]
                    if rate > 0.0:
                        c = s[b] + b
                        rows[nnz] = idx
                        cols[nnz] = idx + _C(B, M - 1 - c, k - b) - _C(B, M - 2 - c, k - b)
                        vals[nnz] = rate
                        nnz += 1
                        sr += rate
                if x > 0:
                    rate = RM[x, cnt]
                    if rate > 0.0:
                        c = s[a] + a
                        rows[nnz] = idx
                        cols[nnz] = idx + _C(B, M - 1 - c, k - a) - _C(B, M - c, k - a)
                        vals[nnz] = rate
                        nnz += 1
                        sl += rate
            diag[idx] = -(sr + sl)
            ell[idx] = s[0] + 1
            top[idx] = 0
            for jj in range(k - 1, -1, -1):
                if s[jj] == N - 1:
                    top[idx] += 1
                else:
                    break
            wsum[idx] = ws
            lgsum[idx] = lg
            # next state
            jj = k - 1
            while jj >= 0 and s[jj] == N - 1:
                jj -= 1
            if jj < 0:
                break
            s[jj] += 1
            for m in range(jj + 1, k):
                s[m] = s[jj]
        return nnz
    eta = np.zeros(N, np.int64)
    eta[0] = k
    rem = np.zeros(N, np.int64)
    for idx in range(S):
        r = k
        for i in range(N):
            rem[i] = r
            r -= eta[i]
        sr = 0.0
        sl = 0.0
        ws = 0
        lg = 0.0
        first = -1
        for i in range(N):
            cnt = eta[i]
            if cnt == 0:
                continue
            if first < 0:
                first = i
            ws += (i + 1) * cnt
            lg += lgf[cnt]
            if i <= N - 2:
                rate = RP[i, cnt]
                if rate > 0.0:
                    base = rem[i] - eta[i] + N - 2 - i
                    rows[nnz] = idx
                    cols[nnz] = idx - _C(B, base, N - 1 - i) + _C(B, base + 1, N - 1 - i)
                    vals[nnz] = rate
                    nnz += 1
                    sr += rate
            if i >= 1:
                rate = RM[i, cnt]
                if rate > 0.0:
                    base = rem[i - 1] - eta[i - 1] + N - 1 - i
                    rows[nnz] = idx
                    cols[nnz] = idx - _C(B, base, N - i) + _C(B, base - 1, N - i)
                    vals[nnz] = rate
                    nnz += 1
                    sl += rate
        diag[idx] = -(sr + sl)
        ell[idx] = first + 1
        top[idx] = eta[N - 1]
        wsum[idx] = ws
        lgsum[idx] = lg
        i = N - 2
        while i >= 0 and eta[i] == 0:
            i -= 1
        if i < 0:
            break
        tail = 1
        for m in range(i + 1, N):
            tail += eta[m]
            eta[m] = 0
        eta[i] -= 1
        eta[i + 1] = tail
    return nnz


# -------------------------------------------------------------- exclusion side
@njit(cache=True)
def asep_generator(N, k, S, B, p, use_particles, rows, cols, vals, diag, emap):
    """Exclusion generator on N + k - 1 sites with k particles, and the map E.

    With ``use_particles`` states are k-subsets (particle sites); otherwise
    (N-1)-subsets (empty sites).  ``emap[a]`` is the zero-range rank of E(a).
    """
    q = 1.0 - p
    M = N + k - 1
    K = k if use_particles else N - 1
    c = np.arange(K).astype(np.int64)
    nnz = 0
    for idx in range(S):
        sr = 0.0
        sl = 0.0
        for j in range(K):
            cj = c[j]
            if use_particles:
                can_r = cj + 1 <= M - 1 and (j == K - 1 or c[j + 1] > cj + 1)
                can_l = cj >= 1 and (j == 0 or c[j - 1] < cj - 1)
                r_r = p
                r_l = q
            else:
                # a particle left of the hole jumps right into it: the hole moves left
                can_l = cj >= 1 and (j == 0 or c[j - 1] < cj - 1)
                can_r = cj + 1 <= M - 1 and (j == K - 1 or c[j + 1] > cj + 1)
                r_l = p
                r_r = q
            if can_r and r_r > 0.0:
                rows[nnz] = idx
                cols[nnz] = idx + _C(B, M - 1 - cj, K - j) - _C(B, M - 2 - cj, K - j)
                vals[nnz] = r_r
                nnz += 1
                if use_particles:
                    sr += r_r
                else:
                    sl += r_r
            if can_l and r_l > 0.0:
                rows[nnz] = idx
                cols[nnz] = idx + _C(B, M - 1 - cj, K - j) - _C(B, M - cj, K - j)
                vals[nnz] = r_l
                nnz += 1
                if use_particles:
                    sl += r_l
                else:
                    sr += r_l
        diag[idx] = -(sr + sl)
        # the map E
        if use_particles:
            acc = np.int64(0)
            for j in range(K):
                s_j = c[j] - j
                acc += _C(B, M - 1 - (s_j + j), k - j)
            emap[idx] = _C(B, M, k) - 1 - acc
        else:
            acc = np.int64(0)
            rem = k
            prev = -1
            for i in range(N - 1):
                e = c[i] - prev - 1
                prev = c[i]
                acc += _C(B, rem - e + N - 2 - i, N - 1 - i)
                rem -= e
            emap[idx] = acc
        # next subset in lexicographic order
        j = K - 1
        while j >= 0 and c[j] == M - K + j:
            j -= 1
        if j < 0:
            break
        c[j] += 1
        for m in range(j + 1, K):
            c[m] = c[m - 1] + 1
    return nnz
