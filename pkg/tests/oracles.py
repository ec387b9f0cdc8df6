"""Independent slow reference implementations used as test oracles.

Everything here is written with explicit scalar loops (or a different
mathematical route) and shares no code with the package.
"""
import math

import numpy as np


def pearson_loop(seg):
    S, N = len(seg), len(seg[0])
    means = [sum(seg[s][i] for s in range(S)) / S for i in range(N)]
    rho = [[0.0] * N for _ in range(N)]
    for i in range(N):
        for j in range(N):
            if i == j:
                rho[i][j] = 1.0
                continue
            sij = sum((seg[s][i] - means[i]) * (seg[s][j] - means[j]) for s in range(S))
            si = math.sqrt(sum((seg[s][i] - means[i]) ** 2 for s in range(S)))
            sj = math.sqrt(sum((seg[s][j] - means[j]) ** 2 for s in range(S)))
            rho[i][j] = 0.0 if si == 0 or sj == 0 else sij / (si * sj)
    return rho


def adjacency_loop(seg, coords, tau, eps=1e-8, clamp=1 - 1e-7, prior=True):
    """Pearson, Fisher-z, off-diagonal min-max, threshold, distance prior."""
    N = len(seg[0])
    rho = pearson_loop(seg)
    z = [[0.5 * math.log((1 + max(-clamp, min(clamp, rho[i][j])))
                         / (1 - max(-clamp, min(clamp, rho[i][j])))) for j in range(N)]
         for i in range(N)]
    off = [z[i][j] for i in range(N) for j in range(N) if i != j]
    lo, hi = min(off), max(off)
    dist = [[math.sqrt(sum((coords[i][k] - coords[j][k]) ** 2 for k in range(3))) for j in range(N)]
            for i in range(N)]
    pairs = sorted(dist[i][j] for i in range(N) for j in range(i + 1, N))
    m = len(pairs)
    sigma = pairs[m // 2] if m % 2 else 0.5 * (pairs[m // 2 - 1] + pairs[m // 2])
    A = [[0.0] * N for _ in range(N)]
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            c = (z[i][j] - lo) / (hi - lo + eps)
            a = c if c >= tau else 0.0
            A[i][j] = a * math.exp(-dist[i][j] / sigma) if prior else a
    return np.array(A)


def joint_operator_dense(A, w, direction="causal"):
    """blkdiag(A_t) + sum_d w_d (J_d kron I_N) with explicit Kronecker products."""
    T, N = A.shape[0], A.shape[1]
    out = np.zeros((T * N, T * N))
    for t in range(T):
        E = np.zeros((T, T))
        E[t, t] = 1.0
        out += np.kron(E, A[t])
    for d, wd in enumerate(w, start=1):
        J = np.zeros((T, T))
        for t in range(T - d):
            if direction == "causal":
                J[t + d, t] = 1.0
            else:
                J[t, t + d] = 1.0
        out += wd * np.kron(J, np.eye(N))
    return out


def hwcl_loop(Z, w, lambda_neg):
    """Five nested loops over (lag, t, n, m, c) for one subject's Z (T, N, C)."""
    T, N, C = Z.shape
    Zn = np.zeros_like(Z)
    for t in range(T):
        for n in range(N):
            nrm = math.sqrt(sum(Z[t, n, c] ** 2 for c in range(C)) + 1e-12)
            for c in range(C):
                Zn[t, n, c] = Z[t, n, c] / nrm
    pos_num = neg_num = den = 0.0
    for d in range(1, len(w) + 1):
        wd = w[d - 1]
        for t in range(T - d):
            for n in range(N):
                den += wd
                for m in range(N):
                    s = 0.0
                    for c in range(C):
                        s += Zn[t, n, c] * Zn[t + d, m, c]
                    if n == m:
                        pos_num += wd * (1.0 - s) ** 2
                    else:
                        neg_num += wd * s ** 2
    l_pos = pos_num / den
    l_neg = neg_num / (den * (N - 1)) if N > 1 else 0.0
    return l_pos + lambda_neg * l_neg, l_pos, l_neg


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))


def chebyshev_direct(A, Z, weights, bias):
    """sum_k T_k(L) Z W_k through eigen-decomposition, T_k(x) = cos(k arccos x)."""
    N = A.shape[0]
    deg = A.sum(axis=1)
    dinv = np.array([1.0 / math.sqrt(d) if d > 0 else 0.0 for d in deg])
    L = -(dinv[:, None] * A * dinv[None, :])
    lam, U = np.linalg.eigh(L)
    lam = np.clip(lam, -1.0, 1.0)
    out = np.tile(bias, (N, 1)).astype(float)
    for k, W in enumerate(weights):
        Tk = U @ np.diag(np.cos(k * np.arccos(lam))) @ U.T
        out += Tk @ Z @ W
    return out


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def gru_step_scalar(x, h, w_ih, w_hh, b_ih, b_hh):
    H = len(h)
    gi = [sum(x[k] * w_ih[k][j] for k in range(len(x))) + b_ih[j] for j in range(3 * H)]
    gh = [sum(h[k] * w_hh[k][j] for k in range(H)) + b_hh[j] for j in range(3 * H)]
    out = []
    for j in range(H):
        r = sig(gi[j] + gh[j])
        z = sig(gi[H + j] + gh[H + j])
        n = math.tanh(gi[2 * H + j] + r * gh[2 * H + j])
        out.append((1 - z) * n + z * h[j])
    return np.array(out)


def bce_loop(p, y):
    tot = 0.0
    for pi, yi in zip(p, y):
        pi = min(max(pi, 1e-12), 1 - 1e-12)
        tot -= yi * math.log(pi) + (1 - yi) * math.log(1 - pi)
    return tot / len(p)
