"""Compiled inner loops for objective evaluation and local search.

Everything here operates on plain arrays so it can be jitted.  The public
modules own validation and object construction; these functions assume
valid, non-empty clusterings.  All of them are deterministic: iteration
order is fixed and no RNG state lives at this level (shuffled visit orders
are generated by the caller and passed in).
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Rate cap applied to inverse scale parameters of the annotation-rate priors.
LAMBDA_CAP = 1.0e12

# Running-sum scatter below this fraction of the raw second moment is
# cancellation noise, not signal; snap it to zero so incremental and
# from-scratch evaluations agree for degenerate clusters.
SCATTER_NOISE = 1.0e-11


@njit(cache=True)
def gmm_term(count, sum_sq, sum_x_sq, n_features, floor):
    # Per-cluster data contribution -(SS/v + D n log v) at the closed-form
    # variance v = max(SS / (2 D n), floor), where SS is the within-cluster
    # sum of squared distances to the mean.
    ss = sum_sq - sum_x_sq / count
    if ss < SCATTER_NOISE * sum_sq:
        ss = 0.0
    v = ss / (2.0 * n_features * count)
    if v < floor:
        v = floor
    return -(ss / v + n_features * count * np.log(v))


@njit(cache=True)
def gmm_terms_all(counts, sum_sq, sum_x_sq, n_features, floor, out):
    for r in range(counts.shape[0]):
        out[r] = gmm_term(counts[r], sum_sq[r], sum_x_sq[r], n_features, floor)


@njit(cache=True)
def pair_totals(counts, k):
    # P_in = sum_r n_r (n_r + 1) / 2, P_out = sum_{r<s} n_r n_s.
    p_in = 0.0
    p_out = 0.0
    for r in range(k):
        n_r = float(counts[r])
        p_in += n_r * (n_r + 1.0) / 2.0
        for s in range(r + 1, k):
            p_out += n_r * float(counts[s])
    return p_in, p_out


@njit(cache=True)
def prior_lambdas(p_in, p_out, p, m_plus, m_minus, cap):
    # Inverse expected frequencies of annotations per pair slot, used as
    # exponential-prior rates.  Capped when a graph is empty or frequencies
    # underflow.
    ratio = (1.0 - p) / p
    if m_plus > 0.0:
        f_in = m_plus / (p_in + ratio * p_out)
        f_out = ratio * f_in
        lp_in = min(1.0 / f_in, cap)
        lp_out = min(1.0 / f_out, cap)
    else:
        lp_in = cap
        lp_out = cap
    inv = p / (1.0 - p)
    if m_minus > 0.0:
        f_in = m_minus / (p_in + inv * p_out)
        f_out = inv * f_in
        lm_in = min(1.0 / f_in, cap)
        lm_out = min(1.0 / f_out, cap)
    else:
        lm_in = cap
        lm_out = cap
    return lp_in, lp_out, lm_in, lm_out


@njit(cache=True)
def sbm_prior_total(m_p, m_m, counts, k, use_priors, p, tot_plus, tot_minus, cap):
    """Block-model part of the objective for both graphs combined.

    Maximum-likelihood mode: sum_rs m_rs (log(m_rs / (n_r n_s)) - 1) per
    graph with the 0 log 0 = 0 convention.  Posterior mode replaces the
    rate estimate by m_rs / (n_r n_s + c lambda) with c = 2 on the diagonal
    and adds the exponential-prior log-density terms.
    """
    total = 0.0
    lp_in = 0.0
    lp_out = 0.0
    lm_in = 0.0
    lm_out = 0.0
    if use_priors:
        p_in, p_out = pair_totals(counts, k)
        lp_in, lp_out, lm_in, lm_out = prior_lambdas(
            p_in, p_out, p, tot_plus, tot_minus, cap
        )
    for r in range(k):
        for s in range(r, k):
            q = float(counts[r]) * float(counts[s])
            if r == s:
                mult = 1.0
                c = 2.0
                lam_p = lp_in
                lam_m = lm_in
            else:
                mult = 2.0
                c = 1.0
                lam_p = lp_out
                lam_m = lm_out
            m1 = m_p[r, s]
            w1 = 0.0
            if m1 > 0.0:
                if use_priors:
                    w1 = m1 / (q + c * lam_p)
                else:
                    w1 = m1 / q
                total += mult * (m1 * np.log(w1) - w1 * q)
            m2 = m_m[r, s]
            w2 = 0.0
            if m2 > 0.0:
                if use_priors:
                    w2 = m2 / (q + c * lam_m)
                else:
                    w2 = m2 / q
                total += mult * (m2 * np.log(w2) - w2 * q)
            if use_priors:
                total += np.log(lam_p * lam_m) - lam_p * w1 - lam_m * w2
    return total


@njit(cache=True)
def _edge_shift(e, a, b, r, s):
    # Change of the ordered block count at (r, s) when a sample moves from
    # cluster a to cluster b and e[t] holds its edge weight into cluster t.
    d = 0.0
    if r == a:
        d -= e[s]
    if s == a:
        d -= e[r]
    if r == b:
        d += e[s]
    if s == b:
        d += e[r]
    return d


@njit(cache=True)
def sbm_prior_total_moved(
    m_p, m_m, counts, k, a, b, e_p, e_m, use_priors, p, tot_plus, tot_minus, cap
):
    # Same quantity as sbm_prior_total, evaluated as if one sample had moved
    # from cluster a to cluster b, without mutating any state.
    total = 0.0
    lp_in = 0.0
    lp_out = 0.0
    lm_in = 0.0
    lm_out = 0.0
    if use_priors:
        p_in, p_out = pair_totals(counts, k)
        n_a = float(counts[a])
        n_b = float(counts[b])
        # Incremental update of the pair totals for n_a -> n_a - 1, n_b -> n_b + 1.
        p_in += (n_a - 1.0) * n_a / 2.0 - n_a * (n_a + 1.0) / 2.0
        p_in += (n_b + 1.0) * (n_b + 2.0) / 2.0 - n_b * (n_b + 1.0) / 2.0
        sum_n = 0.0
        sum_n2 = 0.0
        for r in range(k):
            n_r = float(counts[r])
            sum_n += n_r
            sum_n2 += n_r * n_r
        sum_n2 += (n_a - 1.0) ** 2 - n_a * n_a + (n_b + 1.0) ** 2 - n_b * n_b
        p_out = (sum_n * sum_n - sum_n2) / 2.0
        lp_in, lp_out, lm_in, lm_out = prior_lambdas(
            p_in, p_out, p, tot_plus, tot_minus, cap
        )
    for r in range(k):
        n_r = float(counts[r])
        if r == a:
            n_r -= 1.0
        elif r == b:
            n_r += 1.0
        for s in range(r, k):
            n_s = float(counts[s])
            if s == a:
                n_s -= 1.0
            elif s == b:
                n_s += 1.0
            q = n_r * n_s
            if r == s:
                mult = 1.0
                c = 2.0
                lam_p = lp_in
                lam_m = lm_in
            else:
                mult = 2.0
                c = 1.0
                lam_p = lp_out
                lam_m = lm_out
            m1 = m_p[r, s] + _edge_shift(e_p, a, b, r, s)
            w1 = 0.0
            if m1 > 0.0:
                if use_priors:
                    w1 = m1 / (q + c * lam_p)
                else:
                    w1 = m1 / q
                total += mult * (m1 * np.log(w1) - w1 * q)
            m2 = m_m[r, s] + _edge_shift(e_m, a, b, r, s)
            w2 = 0.0
            if m2 > 0.0:
                if use_priors:
                    w2 = m2 / (q + c * lam_m)
                else:
                    w2 = m2 / q
                total += mult * (m2 * np.log(w2) - w2 * q)
            if use_priors:
                total += np.log(lam_p * lam_m) - lam_p * w1 - lam_m * w2
    return total


@njit(cache=True)
def fill_edge_weights(i, indptr, indices, weights, labels, e):
    # e[t] <- total annotation count from sample i into cluster t.
    for t in range(e.shape[0]):
        e[t] = 0.0
    for idx in range(indptr[i], indptr[i + 1]):
        e[labels[indices[idx]]] += weights[idx]


@njit(cache=True)
def relocation_delta_kernel(
    i,
    b,
    x,
    x_norm,
    labels,
    counts,
    sum_x,
    sum_x_sq,
    sum_sq,
    m_p,
    m_m,
    ip_p,
    idx_p,
    w_p,
    ip_m,
    idx_m,
    w_m,
    n_features,
    floor,
    use_priors,
    p,
    tot_plus,
    tot_minus,
    cap,
    g,
    sbm_total,
    e_p,
    e_m,
):
    """Objective change from moving sample i to cluster b, from cached state."""
    a = labels[i]
    k = counts.shape[0]
    s_ax = 0.0
    s_bx = 0.0
    for t in range(n_features):
        s_ax += sum_x[a, t] * x[t]
        s_bx += sum_x[b, t] * x[t]
    new_sq_a = sum_x_sq[a] - 2.0 * s_ax + x_norm
    new_sq_b = sum_x_sq[b] + 2.0 * s_bx + x_norm
    d_g = -g[a] - g[b]
    d_g += gmm_term(counts[a] - 1, sum_sq[a] - x_norm, new_sq_a, n_features, floor)
    d_g += gmm_term(counts[b] + 1, sum_sq[b] + x_norm, new_sq_b, n_features, floor)
    fill_edge_weights(i, ip_p, idx_p, w_p, labels, e_p)
    fill_edge_weights(i, ip_m, idx_m, w_m, labels, e_m)
    moved = sbm_prior_total_moved(
        m_p, m_m, counts, k, a, b, e_p, e_m, use_priors, p, tot_plus, tot_minus, cap
    )
    return d_g + (moved - sbm_total)


@njit(cache=True)
def apply_move_kernel(
    i,
    b,
    x,
    x_norm,
    labels,
    counts,
    sum_x,
    sum_x_sq,
    sum_sq,
    m_p,
    m_m,
    ip_p,
    idx_p,
    w_p,
    ip_m,
    idx_m,
    w_m,
    n_features,
    floor,
    use_priors,
    p,
    tot_plus,
    tot_minus,
    cap,
    g,
):
    """Move sample i to cluster b, updating all cached state in place.

    Returns the recomputed block-model total; the caller refreshes the
    objective as sum(g) + that value.
    """
    a = labels[i]
    k = counts.shape[0]
    for idx in range(ip_p[i], ip_p[i + 1]):
        s = labels[idx_p[idx]]
        c = w_p[idx]
        m_p[a, s] -= c
        m_p[s, a] -= c
        m_p[b, s] += c
        m_p[s, b] += c
    for idx in range(ip_m[i], ip_m[i + 1]):
        s = labels[idx_m[idx]]
        c = w_m[idx]
        m_m[a, s] -= c
        m_m[s, a] -= c
        m_m[b, s] += c
        m_m[s, b] += c
    labels[i] = b
    counts[a] -= 1
    counts[b] += 1
    for t in range(n_features):
        sum_x[a, t] -= x[t]
        sum_x[b, t] += x[t]
    s_a = 0.0
    s_b = 0.0
    for t in range(n_features):
        s_a += sum_x[a, t] * sum_x[a, t]
        s_b += sum_x[b, t] * sum_x[b, t]
    sum_x_sq[a] = s_a
    sum_x_sq[b] = s_b
    sum_sq[a] -= x_norm
    sum_sq[b] += x_norm
    g[a] = gmm_term(counts[a], sum_sq[a], sum_x_sq[a], n_features, floor)
    g[b] = gmm_term(counts[b], sum_sq[b], sum_x_sq[b], n_features, floor)
    return sbm_prior_total(m_p, m_m, counts, k, use_priors, p, tot_plus, tot_minus, cap)


@njit(cache=True)
def sweep_kernel(
    order,
    annotated,
    samples,
    x_norms,
    labels,
    counts,
    sum_x,
    sum_x_sq,
    sum_sq,
    m_p,
    m_m,
    ip_p,
    idx_p,
    w_p,
    ip_m,
    idx_m,
    w_m,
    n_features,
    floor,
    use_priors,
    p,
    tot_plus,
    tot_minus,
    cap,
    g,
    sbm_total,
    tol,
    e_p,
    e_m,
):
    """One relocation sweep over (sample, cluster) pairs in the given order.

    order contains indices into the flattened (annotated x clusters) grid.
    Improving moves (delta > tol) are applied immediately.  Returns the
    number of applied moves and the updated block-model total.
    """
    k = counts.shape[0]
    applied = 0
    for t in range(order.shape[0]):
        code = order[t]
        i = annotated[code // k]
        b = code % k
        a = labels[i]
        if b == a or counts[a] <= 1:
            continue
        delta = relocation_delta_kernel(
            i, b, samples[i], x_norms[i], labels, counts, sum_x, sum_x_sq,
            sum_sq, m_p, m_m, ip_p, idx_p, w_p, ip_m, idx_m, w_m, n_features,
            floor, use_priors, p, tot_plus, tot_minus, cap, g, sbm_total,
            e_p, e_m,
        )
        if delta > tol:
            sbm_total = apply_move_kernel(
                i, b, samples[i], x_norms[i], labels, counts, sum_x, sum_x_sq,
                sum_sq, m_p, m_m, ip_p, idx_p, w_p, ip_m, idx_m, w_m,
                n_features, floor, use_priors, p, tot_plus, tot_minus, cap, g,
            )
            applied += 1
    return applied, sbm_total


@njit(cache=True)
def stats_from_labels(samples, labels, k):
    n, d = samples.shape
    counts = np.zeros(k, dtype=np.int64)
    sum_x = np.zeros((k, d))
    sum_sq = np.zeros(k)
    for i in range(n):
        r = labels[i]
        counts[r] += 1
        acc = 0.0
        for t in range(d):
            v = samples[i, t]
            sum_x[r, t] += v
            acc += v * v
        sum_sq[r] += acc
    sum_x_sq = np.zeros(k)
    for r in range(k):
        acc = 0.0
        for t in range(d):
            acc += sum_x[r, t] * sum_x[r, t]
        sum_x_sq[r] = acc
    return counts, sum_x, sum_sq, sum_x_sq


@njit(cache=True)
def edge_blocks(edges_i, edges_j, edges_c, labels, k):
    # Ordered-pair block counts: each stored unordered edge contributes to
    # both (r, s) and (s, r); twice to the diagonal when r == s.
    m = np.zeros((k, k))
    for e in range(edges_i.shape[0]):
        r = labels[edges_i[e]]
        s = labels[edges_j[e]]
        c = float(edges_c[e])
        m[r, s] += c
        m[s, r] += c
    return m


@njit(cache=True)
def assign_nearest(samples, centers, labels):
    # Nearest center by squared Euclidean distance, ties to the lowest index.
    n, d = samples.shape
    k = centers.shape[0]
    for i in range(n):
        best = 0
        best_d = np.inf
        for r in range(k):
            acc = 0.0
            for t in range(d):
                diff = samples[i, t] - centers[r, t]
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best = r
        labels[i] = best


@njit(cache=True)
def repair_empty(samples, labels, counts, centers):
    """Fill empty clusters with the sample farthest from its current center.

    Donor clusters must keep at least one member; ties break to the lowest
    sample index.  Centers are not updated between fills.  Returns the
    number of repaired clusters.
    """
    n = samples.shape[0]
    d = samples.shape[1]
    k = counts.shape[0]
    repaired = 0
    for e in range(k):
        if counts[e] > 0:
            continue
        best = -1
        best_d = -1.0
        for i in range(n):
            r = labels[i]
            if counts[r] <= 1:
                continue
            acc = 0.0
            for t in range(d):
                diff = samples[i, t] - centers[r, t]
                acc += diff * diff
            if acc > best_d:
                best_d = acc
                best = i
        counts[labels[best]] -= 1
        labels[best] = e
        counts[e] += 1
        repaired += 1
    return repaired


@njit(cache=True)
def kmeans_unannotated(samples, labels, counts, means, unannotated, limit):
    """Alternating nearest-mean assignment of unannotated samples and mean
    updates over all samples, with empty-cluster repair each round.

    labels, counts and means are updated in place; means enter holding the
    current cluster means and leave holding the converged ones.  Returns the
    number of iterations run.
    """
    n, d = samples.shape
    k = counts.shape[0]
    it = 0
    while it < limit:
        it += 1
        changed = False
        for u in range(unannotated.shape[0]):
            i = unannotated[u]
            best = 0
            best_d = np.inf
            for r in range(k):
                acc = 0.0
                for t in range(d):
                    diff = samples[i, t] - means[r, t]
                    acc += diff * diff
                if acc < best_d:
                    best_d = acc
                    best = r
            if best != labels[i]:
                counts[labels[i]] -= 1
                counts[best] += 1
                labels[i] = best
                changed = True
        for r in range(k):
            if counts[r] == 0:
                if repair_empty(samples, labels, counts, means) > 0:
                    changed = True
                break
        for r in range(k):
            for t in range(d):
                means[r, t] = 0.0
        for i in range(n):
            r = labels[i]
            for t in range(d):
                means[r, t] += samples[i, t]
        for r in range(k):
            for t in range(d):
                means[r, t] /= counts[r]
        if not changed:
            break
    return it
