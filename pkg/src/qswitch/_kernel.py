"""Compiled inner loop of the coupled co-simulation.

The three systems are advanced with literally the same arithmetic, so when
their modes and states coincide the results agree to the last bit.
"""

import numpy as np
from numba import njit

SANDWICH_TOL = 1e-12


@njit(cache=True)
def _categorical(cum, u):
    k = 0
    while k < cum.shape[0] - 1 and cum[k] <= u:
        k += 1
    return k


@njit(cache=True)
def advance(k0, k1, u, u_offset, q, ql, qu, qavg, lower_norm_sum,
            q_star, idx_star, v_star, P, d, dR, gamma, alpha,
            cum_p, cum_beta, cum_P, reward,
            first_sample, first_noise,
            violations, max_violation, max_q_norm, max_noise_norm, min_h, max_b):
    """Advance every trial from step k0 to k1 in place.

    ``u[t, u_offset + (k - k0), :]`` are the uniforms of step k. The sample
    and noise norm of step k0 are written to ``first_sample`` (s, a, s', r)
    and ``first_noise``.
    """
    T, n = q.shape
    S = P.shape[1]
    pol = np.empty(S, dtype=np.int64)
    v = np.empty(S)
    sel_qs = np.empty(S)
    sel_x = np.empty(S)
    sel_xl = np.empty(S)
    sel_xu = np.empty(S)
    sel_h = np.empty(S)
    nq = np.empty(n)
    nql = np.empty(n)
    nqu = np.empty(n)
    for t in range(T):
        for k in range(k0, k1):
            j = u_offset + (k - k0)
            # greedy policy, lowest index on ties
            for s in range(S):
                best = 0
                for a in range(1, n // S):
                    if q[t, a * S + s] > q[t, best * S + s]:
                        best = a
                pol[s] = best
                ii = best * S + s
                v[s] = q[t, ii]
                sel_qs[s] = q_star[ii] - v_star[s]
                sel_x[s] = q[t, ii] - q_star[ii]
                sel_xu[s] = qu[t, ii] - q_star[ii]
                js = idx_star[s]
                sel_xl[s] = ql[t, js] - q_star[js]
                sel_h[s] = v[s] - q[t, js]

            s0 = _categorical(cum_p, u[t, j, 0])
            a0 = _categorical(cum_beta[s0], u[t, j, 1])
            s1 = _categorical(cum_P[s0, a0], u[t, j, 2])
            r = reward[s0, a0, s1]
            i = a0 * S + s0

            lns = 0.0
            for row in range(n):
                e = abs(ql[t, row] - q_star[row])
                if e > lns:
                    lns = e
            lower_norm_sum[t] += lns

            wmax = 0.0
            for row in range(n):
                pv = 0.0
                pb = 0.0
                ph = 0.0
                px = 0.0
                pxl = 0.0
                pxu = 0.0
                for sp in range(S):
                    p = P[row, sp]
                    pv += p * v[sp]
                    pb += p * sel_qs[sp]
                    ph += p * sel_h[sp]
                    px += p * sel_x[sp]
                    pxl += p * sel_xl[sp]
                    pxu += p * sel_xu[sp]
                dd = d[row]
                drift = dR[row] + gamma * (dd * pv) - dd * q[t, row]
                samp = 0.0
                if row == i:
                    samp = r + gamma * v[s1] - q[t, i]
                w = samp - drift
                if abs(w) > wmax:
                    wmax = abs(w)
                b = alpha * (gamma * (dd * pb))
                h = alpha * (gamma * (dd * ph))
                if b > max_b[t]:
                    max_b[t] = b
                if h < min_h[t]:
                    min_h[t] = h
                aw = alpha * w
                qs = q_star[row]
                x = q[t, row] - qs
                xl = ql[t, row] - qs
                xu = qu[t, row] - qs
                nq[row] = qs + ((x + alpha * (gamma * (dd * px) - dd * x)) + b + aw)
                nql[row] = qs + ((xl + alpha * (gamma * (dd * pxl) - dd * xl)) + aw)
                nqu[row] = qs + ((xu + alpha * (gamma * (dd * pxu) - dd * xu)) + aw)
            if wmax > max_noise_norm[t]:
                max_noise_norm[t] = wmax
            if k == k0:
                first_sample[t, 0] = s0
                first_sample[t, 1] = a0
                first_sample[t, 2] = s1
                first_sample[t, 3] = r
                first_noise[t] = wmax

            for row in range(n):
                qavg[t, row] = qavg[t, row] + (q[t, row] - qavg[t, row]) / (k + 1)
                q[t, row] = nq[row]
                ql[t, row] = nql[row]
                qu[t, row] = nqu[row]
                gap = max(nql[row] - nq[row], nq[row] - nqu[row])
                if gap > SANDWICH_TOL:
                    violations[t] += 1
                if gap > max_violation[t]:
                    max_violation[t] = gap
                if abs(nq[row]) > max_q_norm[t]:
                    max_q_norm[t] = abs(nq[row])
