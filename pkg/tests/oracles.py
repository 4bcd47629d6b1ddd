"""Slow, literal re-implementations used as independent references in tests.

Plain Python floats and loops only: no numpy, no tanh, no prefix sums.
"""

import math


def grid_points(d):
    return [-1.0 + 2 * p / (d - 1) for p in range(d)]


def omega(a_i, b_i, B_i, a):
    if b_i < a < B_i:
        return 1.0
    if a <= b_i:
        if a == b_i:
            return 0.0
        if a_i == b_i:
            return -1.0
        y = 1 + (a - a_i) / (a_i - b_i)
    else:
        if a == B_i:
            return 0.0
        if a_i == B_i:
            return -1.0
        y = 1 + (a_i - a) / (B_i - a_i)
    return (math.exp(y) - 1) / (math.exp(y) + 1)


def segment_attitude(obs, tgt, d, factor=1.0):
    """``obs``/``tgt`` are ``(a, b, B)``; sum over the whole grid with max(w_j, 0) weights."""
    num = 0.0
    den = 0.0
    for ap in grid_points(d):
        wj = max(omega(*tgt, ap), 0.0)
        num += omega(*obs, ap) * wj
        den += wj
    return factor * num / den


def identity_attitude(obs, tgt, d, factor=1.0):
    return sum(segment_attitude(o, t, d, factor) for o, t in zip(obs, tgt)) / len(obs)


def indicators(identities, groups, d, k=3):
    """Brute-force mean/std per ordered group pair, ``i != j``."""
    mean = [[0.0] * k for _ in range(k)]
    std = [[0.0] * k for _ in range(k)]
    for g in range(k):
        for h in range(k):
            vals = [identity_attitude(identities[i], identities[j], d)
                    for i in range(len(identities)) for j in range(len(identities))
                    if i != j and groups[i] == g and groups[j] == h]
            m = sum(vals) / len(vals)
            mean[g][h] = m
            std[g][h] = math.sqrt(sum((v - m) ** 2 for v in vals) / len(vals))
    return mean, std
