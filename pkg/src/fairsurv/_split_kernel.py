"""Compiled inner loop of the split search.

One call scores every candidate split of a node: for each offered
feature, members are bucketed (threshold interval or category code), the
per-bucket risk/event tables are accumulated over the node's event-time
grid, and each candidate's three log-rank statistics (between the
children, and deprived-vs-rest inside each child) are folded into the
split score log1p(|z_between|) - log1p(|z_left|) - log1p(|z_right|). A
comparison with zero variance contributes zero. Candidates are valid
only when both children keep at least one event; features are scanned in
the order given and thresholds ascending, with strict improvement
required, so ties resolve to the lower feature index and threshold.

The statistic matches estimators.log_rank term for term (up to float
regrouping): summing over the node's full event grid equals each
comparison's own pooled grid because times without pooled events
contribute zero. The hot loop trades divisions for multiplications by
precomputing per-time reciprocals of the pooled counts and folding each
within-child variance into a single reciprocal.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def thin_indices(length, cap):
    """Indices keeping at most cap evenly spaced entries of range(length)."""
    if length <= cap:
        return np.arange(length)
    if cap == 1:
        return np.asarray([(length - 1) // 2], dtype=np.int64)
    step = (length - 1.0) / (cap - 1.0)
    out = np.empty(cap, dtype=np.int64)
    kept = 0
    for i in range(cap):
        idx = np.int64(np.rint(i * step))
        if kept == 0 or idx != out[kept - 1]:
            out[kept] = idx
            kept += 1
    return out[:kept]


@njit(cache=True, fastmath=True)
def scan_node(feature_values, cardinalities, times, events, dep, cap, fairness):
    """Best valid split over the given features of one node.

    feature_values: (k, m) array, one row per offered feature.
    cardinalities: (k,) ints, -1 for continuous features.
    Returns (found, feature_row, threshold_or_category, is_categorical,
    score); threshold means "left when x <= threshold" for continuous
    rows and "left when x == value" for categorical rows.
    """
    k, m = feature_values.shape

    # node event-time grid
    n_ev = 0
    for i in range(m):
        if events[i]:
            n_ev += 1
    raw = np.empty(n_ev)
    j = 0
    for i in range(m):
        if events[i]:
            raw[j] = times[i]
            j += 1
    raw.sort()
    u = 0
    for i in range(n_ev):
        if i == 0 or raw[i] != raw[u - 1]:
            raw[u] = raw[i]
            u += 1
    grid = raw[:u]
    # pos: count of grid times <= t (risk-set boundary); slot: exact grid
    # index of an event member's time
    pos = np.searchsorted(grid, times, side="right")
    slot = np.searchsorted(grid, times, side="left")

    # pooled per-time totals, shared by every candidate at this node
    n_all = np.zeros(u)
    d_all = np.zeros(u)
    n_dp = np.zeros(u)
    d_dp = np.zeros(u)
    risk_hist = np.zeros(u + 1)
    risk_hist_dep = np.zeros(u + 1)
    for i in range(m):
        risk_hist[pos[i]] += 1.0
        if events[i]:
            d_all[slot[i]] += 1.0
        if dep[i]:
            risk_hist_dep[pos[i]] += 1.0
            if events[i]:
                d_dp[slot[i]] += 1.0
    acc = 0.0
    acc_dep = 0.0
    for jj in range(u, 0, -1):
        acc += risk_hist[jj]
        acc_dep += risk_hist_dep[jj]
        n_all[jj - 1] = acc
        n_dp[jj - 1] = acc_dep
    d_total = d_all.sum()

    w_rate = np.zeros(u)     # d_j / n_j
    w_between = np.zeros(u)  # d_j (n_j - d_j) / (n_j^2 (n_j - 1))
    for jj in range(u):
        nj = n_all[jj]
        if nj > 0.0:
            dj = d_all[jj]
            w_rate[jj] = dj / nj
            if nj > 1.0:
                w_between[jj] = dj * (nj - dj) / (nj * nj * (nj - 1.0))

    best_score = -np.inf
    best_feature = -1
    best_threshold = 0.0
    best_categorical = False
    found = False

    nl = np.zeros(u)
    dl = np.zeros(u)
    ndl = np.zeros(u)
    ddl = np.zeros(u)

    # reciprocal tables over integer at-risk counts: index i holds 1/i and
    # 1/(i^2 (i-1)), turning the hot loop's divisions into loads
    recip = np.zeros(m + 1)
    recip_vb = np.zeros(m + 1)
    for i in range(1, m + 1):
        recip[i] = 1.0 / i
        if i > 1:
            recip_vb[i] = 1.0 / (float(i) * i * (i - 1.0))

    for f in range(k):
        values = feature_values[f]
        categorical = cardinalities[f] >= 0
        thresholds = np.zeros(0)
        if categorical:
            n_buckets = cardinalities[f]
            bucket = values.astype(np.int64)
            n_candidates = n_buckets
        else:
            sorted_values = np.sort(values.copy())
            distinct = 0
            for i in range(m):
                if i == 0 or sorted_values[i] != sorted_values[distinct - 1]:
                    sorted_values[distinct] = sorted_values[i]
                    distinct += 1
            if distinct < 2:
                continue
            mids = np.empty(distinct - 1)
            for i in range(distinct - 1):
                mids[i] = 0.5 * (sorted_values[i] + sorted_values[i + 1])
            thresholds = mids[thin_indices(distinct - 1, cap)]
            bucket = np.searchsorted(thresholds, values, side="left")
            n_buckets = thresholds.size + 1
            n_candidates = thresholds.size

        risk = np.zeros((n_buckets, u + 1))
        d = np.zeros((n_buckets, u))
        risk_dep = np.zeros((n_buckets, u + 1))
        d_dep = np.zeros((n_buckets, u))
        for i in range(m):
            b = bucket[i]
            risk[b, pos[i]] += 1.0
            if events[i]:
                d[b, slot[i]] += 1.0
            if dep[i]:
                risk_dep[b, pos[i]] += 1.0
                if events[i]:
                    d_dep[b, slot[i]] += 1.0
        # suffix sums: risk[b, j + 1] becomes the at-risk count at event j
        for b in range(n_buckets):
            for jj in range(u - 1, -1, -1):
                risk[b, jj] += risk[b, jj + 1]
                risk_dep[b, jj] += risk_dep[b, jj + 1]

        for jj in range(u):
            nl[jj] = 0.0
            dl[jj] = 0.0
            ndl[jj] = 0.0
            ddl[jj] = 0.0

        for c in range(n_candidates):
            dl_total = 0.0
            if categorical:
                for jj in range(u):
                    nl[jj] = risk[c, jj + 1]
                    dl[jj] = d[c, jj]
                    ndl[jj] = risk_dep[c, jj + 1]
                    ddl[jj] = d_dep[c, jj]
                    dl_total += d[c, jj]
            else:
                for jj in range(u):
                    nl[jj] += risk[c, jj + 1]
                    dl[jj] += d[c, jj]
                    ndl[jj] += risk_dep[c, jj + 1]
                    ddl[jj] += d_dep[c, jj]
                    dl_total += dl[jj]
            if dl_total < 1.0 or d_total - dl_total < 1.0:
                continue
            num_b = 0.0
            var_b = 0.0
            for jj in range(u):
                nlj = nl[jj]
                # (dl*nr - dr*nl)/n == dl - (d/n)*nl
                num_b += dl[jj] - w_rate[jj] * nlj
                var_b += w_between[jj] * nlj * (n_all[jj] - nlj)
            score = 0.0
            if var_b > 0.0:
                score = np.log1p(abs(num_b) / np.sqrt(var_b))
            if fairness:
                # the penalty is non-negative, so a candidate whose
                # between-children term cannot beat the running best is
                # settled without the within-child pass
                if score <= best_score:
                    continue
                num_l = 0.0
                var_l = 0.0
                num_r = 0.0
                var_r = 0.0
                for jj in range(u):
                    nlj = nl[jj]
                    dlj = dl[jj]
                    ndlj = ndl[jj]
                    ddlj = ddl[jj]
                    nrj = n_all[jj] - nlj
                    drj = d_all[jj] - dlj
                    ndrj = n_dp[jj] - ndlj
                    ddrj = d_dp[jj] - ddlj
                    il = int(nlj)
                    ir = int(nrj)
                    num_l += ddlj - dlj * ndlj * recip[il]
                    var_l += dlj * ndlj * (nlj - ndlj) * (nlj - dlj) * recip_vb[il]
                    num_r += ddrj - drj * ndrj * recip[ir]
                    var_r += drj * ndrj * (nrj - ndrj) * (nrj - drj) * recip_vb[ir]
                if var_l > 0.0:
                    score -= np.log1p(abs(num_l) / np.sqrt(var_l))
                if var_r > 0.0:
                    score -= np.log1p(abs(num_r) / np.sqrt(var_r))
            if score > best_score:
                best_score = score
                best_feature = f
                best_categorical = categorical
                best_threshold = float(c) if categorical else thresholds[c]
                found = True
    return found, best_feature, best_threshold, best_categorical, best_score
