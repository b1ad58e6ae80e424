"""Independent brute-force reimplementations used as test oracles.

These are deliberately written with plain loops and no shared helpers from
the package, so that an error in a vectorised kernel cannot be mirrored here.
"""

import math

import numpy as np


def knn_edges(tensor, k):
    """Sorted 1-based edge list ``(t_src, epc_src, t_dst, epc_dst)`` by all-pairs search."""
    T, N, _ = tensor.shape
    edges = []
    for t in range(1, T):
        for j in range(N):
            cands = []
            for i in range(N):
                cands.append((math.dist(tensor[t, j], tensor[t - 1, i]), i))
            cands.sort()
            for _, i in cands[:k]:
                edges.append((t, i + 1, t + 1, j + 1))
    edges.sort()
    return edges


def _row_mean_distance(a_rows, b_rows):
    total = 0.0
    for ra, rb in zip(a_rows, b_rows):
        total += math.sqrt((ra[0] - rb[0]) ** 2 + (ra[1] - rb[1]) ** 2)
    return total / len(a_rows)


def _average(arrays):
    acc = 0.0
    for a in arrays:
        acc = acc + a
    return acc / len(arrays)


def impute(features, available, pool_features, pool_available, pool_ids, nu, mode, self_id, pairs):
    """Null-dataframe imputation by literal case analysis.

    Returns ``(filled, branches)`` where ``branches`` maps each missing EPC
    (1-based) to one of ``med``, ``proximity``, ``class_mean``, ``zero``.
    Exhausted EPCs are zero filled.
    """
    out = np.array(features, dtype=float)
    N = len(available)
    partner = {}
    for a, b in pairs:
        partner[a], partner[b] = b, a
    missing = [n + 1 for n in range(N) if not available[n]]
    branches = {}
    if not missing:
        return out, branches

    zeta = []
    if mode == "train":
        present = [n for n in range(N) if available[n]]
        table = []
        for m in range(len(pool_ids)):
            if pool_ids[m] == self_id:
                continue
            if not all(pool_available[m][n] for n in present):
                continue
            ref_rows = [features[n][q] for n in present for q in range(features.shape[1])]
            oth_rows = [pool_features[m][n][q] for n in present for q in range(features.shape[1])]
            kappa = _row_mean_distance(ref_rows, oth_rows) if ref_rows else 0.0
            table.append((kappa, int(pool_ids[m]), m))
        table.sort(key=lambda r: (r[0], r[1]))
        zeta = [r[2] for r in table[:nu]]

    def omega(mu):
        return [m for m in zeta if pool_available[m][mu - 1]]

    def class_mean(mu):
        rows = [
            pool_features[m][mu - 1]
            for m in range(len(pool_ids))
            if pool_available[m][mu - 1] and pool_ids[m] != self_id
        ]
        return _average(rows) if rows else None

    def med_fill(mu):
        om = omega(mu)
        if om:
            out[mu - 1] = _average([pool_features[m][mu - 1] for m in om])
            branches[mu] = "med"
            return True
        return False

    def fallback(mu):
        if mode == "train":
            cm = class_mean(mu)
            if cm is not None:
                out[mu - 1] = cm
                branches[mu] = "class_mean"
                return
        out[mu - 1] = 0.0
        branches[mu] = "zero"

    done = set()
    for mu in missing:
        if mu in done:
            continue
        delta = partner.get(mu)
        if delta in missing:
            # same pair: nearest neighbours for both, else for one and copy
            # into the other, else the class-wide average
            first, second = sorted((mu, delta))
            got_first = mode == "train" and med_fill(first)
            got_second = mode == "train" and med_fill(second)
            if not got_first:
                if got_second:
                    out[first - 1] = out[second - 1]
                    branches[first] = "proximity"
                else:
                    fallback(first)
            if not got_second:
                if got_first:
                    out[second - 1] = out[first - 1]
                    branches[second] = "proximity"
                else:
                    fallback(second)
            done.update((first, second))
        else:
            if not (mode == "train" and med_fill(mu)):
                if delta is not None and available[delta - 1]:
                    out[mu - 1] = features[delta - 1]
                    branches[mu] = "proximity"
                else:
                    fallback(mu)
            done.add(mu)
    return out, branches


def numerical_gradient(f, w, step):
    """Central differences of scalar ``f()`` with respect to array ``w`` (in place)."""
    g = np.zeros_like(w)
    it = np.nditer(w, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = w[idx]
        w[idx] = orig + step
        fp = f()
        w[idx] = orig - step
        fm = f()
        w[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
    return g
