"""Independent brute-force oracles: loops over raw observations, no moment tables."""

import math


def emp_L(data, h, g):
    tot = 0.0
    for x, y, z in zip(data.x, data.y, data.z):
        tot += 0.5 * h[x] ** 2 + (y - h[x]) * g[z]
    return tot / len(data.x)


def emp_psi(data, h, g):
    tot = 0.0
    for x, y, z in zip(data.x, data.y, data.z):
        tot += -0.5 * g[z] ** 2 + (y - h[x]) * g[z]
    return tot / len(data.x)


def emp_sq(data, h):
    return sum(h[x] ** 2 for x in data.x) / len(data.x)


def pick(values, norms, candidates):
    """Tie rule: near-minimal value, then smallest norm, then lowest index."""
    vmin = min(values[i] for i in candidates)
    tied = [i for i in candidates if values[i] <= vmin + 1e-12 * max(1.0, abs(vmin))]
    nmin = min(norms[i] for i in tied)
    tied = [i for i in tied if norms[i] <= nmin + 1e-12 * max(1.0, abs(nmin))]
    return min(tied)


def minimax(data, H, G, obj, extra=None, candidates=None):
    inner = []
    for h in H:
        best = -math.inf
        for g in G:
            v = obj(data, h, g) + (extra(data, h) if extra else 0.0)
            best = max(best, v)
        inner.append(best)
    norms = [math.sqrt(emp_sq(data, h)) for h in H]
    cand = list(range(len(H))) if candidates is None else list(candidates)
    return pick(inner, norms, cand), inner


def flip(data, H, G):
    outer = []
    for g in G:
        outer.append(min(emp_L(data, h, g) for h in H))
    gnorms = [math.sqrt(sum(g[z] ** 2 for z in data.z) / len(data.z)) for g in G]
    j = pick([-v for v in outer], gnorms, range(len(G)))
    hnorms = [math.sqrt(emp_sq(data, h)) for h in H]
    return pick([emp_L(data, h, G[j]) for h in H], hnorms, range(len(H)))
