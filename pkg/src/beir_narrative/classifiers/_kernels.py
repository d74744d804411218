"""Compiled inner loops for tree growing, tree prediction and the SMO solver."""

import numpy as np
from numba import njit

LEAF = -1
# Split thresholds are the largest training value sent left (not a midpoint),
# so fitted trees depend only on the rank order of each feature.


@njit(cache=True)
def _next_rand(state):
    # xorshift64*; state is a length-1 uint64 array
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(2685821657736338717)


@njit(cache=True)
def _shuffle(arr, state):
    for i in range(arr.size - 1, 0, -1):
        j = np.int64(_next_rand(state) % np.uint64(i + 1))
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


@njit(cache=True)
def _partition(idx, start, end, X, f, thr):
    # in-place: rows with X[:, f] <= thr first; returns the split point
    i = start
    j = end - 1
    while i <= j:
        if X[idx[i], f] <= thr:
            i += 1
        else:
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            j -= 1
    return i


@njit(cache=True)
def grow_gini_tree(X, y, rows, max_features, min_samples_split, max_depth, seed):
    """Fully grown CART classifier on ``rows`` (repeats allowed) with Gini splits.

    At each node features are visited in random order until ``max_features``
    non-constant ones have been scanned (more if none gave a valid split).
    Returns node arrays (feature, threshold, left, right, value, n_nodes)
    and the per-feature weighted impurity decrease.
    """
    n, p = X.shape
    m = rows.size
    cap = 2 * m + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap)
    importance = np.zeros(p)
    idx = rows.copy()
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed) | np.uint64(1)
    feats = np.arange(p)

    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    vals = np.empty(m)
    labs = np.empty(m, np.int64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        cnt = end - start
        c1 = 0
        for k in range(start, end):
            c1 += y[idx[k]]
        value[node] = c1 / cnt
        if cnt < min_samples_split or c1 == 0 or c1 == cnt or (max_depth >= 0 and depth >= max_depth):
            continue
        c0 = cnt - c1
        parent_gini = 1.0 - (c1 * c1 + c0 * c0) / (cnt * cnt)
        _shuffle(feats, state)
        best_f = -1
        best_thr = 0.0
        best_proxy = -np.inf
        best_nl = 0
        best_c1l = 0
        visited = 0
        for fi in range(p):
            if visited >= max_features and best_f >= 0:
                break
            f = feats[fi]
            for k in range(cnt):
                vals[k] = X[idx[start + k], f]
            order = np.argsort(vals[:cnt])
            lo = vals[order[0]]
            hi = vals[order[cnt - 1]]
            if lo == hi:
                continue
            visited += 1
            for k in range(cnt):
                labs[k] = y[idx[start + order[k]]]
            l1 = 0
            for k in range(cnt - 1):
                l1 += labs[k]
                a = vals[order[k]]
                b = vals[order[k + 1]]
                if a == b:
                    continue
                nl = k + 1
                nr = cnt - nl
                l0 = nl - l1
                r1 = c1 - l1
                r0 = nr - r1
                proxy = (l1 * l1 + l0 * l0) / nl + (r1 * r1 + r0 * r0) / nr
                if proxy > best_proxy:
                    best_proxy = proxy
                    best_f = f
                    best_thr = a
                    best_nl = nl
                    best_c1l = l1
        if best_f < 0:
            continue
        mid = _partition(idx, start, end, X, best_f, best_thr)
        nl = best_nl
        nr = cnt - nl
        l1 = best_c1l
        l0 = nl - l1
        r1 = c1 - l1
        r0 = nr - r1
        gl = 1.0 - (l1 * l1 + l0 * l0) / (nl * nl)
        gr = 1.0 - (r1 * r1 + r0 * r0) / (nr * nr)
        importance[best_f] += cnt * parent_gini - nl * gl - nr * gr
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2
    return feature, threshold, left, right, value, n_nodes, importance


@njit(cache=True)
def grow_boost_tree(X, g, h, max_depth, reg_lambda, min_child_weight, gamma, eta):
    """Exact greedy second-order regression tree (logistic boosting step).

    Split gain is ``0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma``
    and must be positive; each child needs hessian mass >= min_child_weight.
    Leaf values are ``-eta * G / (H + l)``.
    """
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap)
    gain_total = np.zeros(p)
    idx = np.arange(n)
    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    vals = np.empty(n)
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        cnt = end - start
        G = 0.0
        H = 0.0
        for k in range(start, end):
            G += g[idx[k]]
            H += h[idx[k]]
        value[node] = -eta * G / (H + reg_lambda)
        if depth >= max_depth or cnt < 2 or H < 2 * min_child_weight:
            continue
        parent_score = G * G / (H + reg_lambda)
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for f in range(p):
            for k in range(cnt):
                vals[k] = X[idx[start + k], f]
            order = np.argsort(vals[:cnt])
            if vals[order[0]] == vals[order[cnt - 1]]:
                continue
            GL = 0.0
            HL = 0.0
            for k in range(cnt - 1):
                r = idx[start + order[k]]
                GL += g[r]
                HL += h[r]
                a = vals[order[k]]
                b = vals[order[k + 1]]
                if a == b:
                    continue
                HR = H - HL
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                GR = G - GL
                gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda) - parent_score) - gamma
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best_f = f
                    best_thr = a
        if best_f < 0:
            continue
        mid = _partition(idx, start, end, X, best_f, best_thr)
        gain_total[best_f] += best_gain
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2
    return feature, threshold, left, right, value, n_nodes, gain_total


@njit(cache=True)
def predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def smo_solve(K, y, C, tol, max_iter):
    """Soft-margin SVM dual by SMO with second-order working-set selection.

    ``K`` is the kernel matrix, ``y`` in {-1, +1}. Returns ``(alpha, rho,
    iterations, converged)``; the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = y.size
    tau = 1e-12
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        # select i: maximal violating index in I_up
        gmax = -np.inf
        gmax2 = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        j = -1
        obj_min = np.inf
        if i >= 0:
            for t in range(n):
                if y[t] > 0:
                    if alpha[t] > 0:
                        grad_diff = gmax + G[t]
                        if G[t] >= gmax2:
                            gmax2 = G[t]
                        if grad_diff > 0:
                            quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                            if quad <= 0:
                                quad = tau
                            obj = -(grad_diff * grad_diff) / quad
                            if obj <= obj_min:
                                j = t
                                obj_min = obj
                else:
                    if alpha[t] < C:
                        grad_diff = gmax - G[t]
                        if -G[t] >= gmax2:
                            gmax2 = -G[t]
                        if grad_diff > 0:
                            quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                            if quad <= 0:
                                quad = tau
                            obj = -(grad_diff * grad_diff) / quad
                            if obj <= obj_min:
                                j = t
                                obj_min = obj
        if gmax + gmax2 < tol or j < 0:
            converged = True
            break
        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        Kij = K[i, j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] - 2.0 * Kij
            if quad <= 0:
                quad = tau
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Kij
            if quad <= 0:
                quad = tau
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)
    # offset from free vectors, or the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    sum_free = 0.0
    n_free = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            sum_free += yg
    if n_free > 0:
        rho = sum_free / n_free
    else:
        rho = 0.5 * (ub + lb)
    return alpha, rho, it, converged
