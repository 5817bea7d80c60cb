"""Exact inference over single-root projective dependency trees.

Arc scores come as an (n+1) x n float64 matrix: entry `[h, d-1]` scores head
`h` (0 = the artificial root) governing dependent `d` (1-based).  The inside
pass is the O(n^3) Eisner span dynamic program in log space; marginals are
its exact reverse-mode derivative; `viterbi_decode` swaps logsumexp for max;
`enumerate_projective_trees` is a brute-force oracle used by the tests.

Single-rootedness is enforced by combining, per candidate root r, a complete
left span 1..r and a complete right span r..n, so the root attaches exactly
one dependent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, MorphoparseError


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def _check_scores(scores: np.ndarray) -> int:
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1] + 1 or scores.shape[1] < 1:
        raise MorphoparseError(f"arc scores must be (n+1) x n with n >= 1, got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise MorphoparseError("arc scores contain non-finite entries")
    return scores.shape[1]


def _pad(scores: np.ndarray, n: int) -> np.ndarray:
    """Internal (n+1) x (n+1) layout indexed [h][d] with d 1-based."""
    padded = np.full((n + 1, n + 1), -np.inf)
    padded[:, 1:] = scores
    return padded


def _inside(sp: np.ndarray, n: int):
    """Run the inside pass; returns the four span tables and logZ.

    cr[s,t]: complete span s..t headed at s;  cl[s,t]: headed at t;
    ir[s,t]: incomplete with arc s->t;        il[s,t]: arc t->s.
    """
    shape = (n + 1, n + 1)
    cr = np.full(shape, -np.inf)
    cl = np.full(shape, -np.inf)
    ir = np.full(shape, -np.inf)
    il = np.full(shape, -np.inf)
    for i in range(1, n + 1):
        cr[i, i] = 0.0
        cl[i, i] = 0.0
    for length in range(1, n):
        for s in range(1, n - length + 1):
            t = s + length
            split = cr[s, s:t] + cl[s + 1 : t + 1, t]
            m = _logsumexp(split)
            ir[s, t] = m + sp[s, t]
            il[s, t] = m + sp[t, s]
            cr[s, t] = _logsumexp(ir[s, s + 1 : t + 1] + cr[s + 1 : t + 1, t])
            cl[s, t] = _logsumexp(cl[s, s:t] + il[s:t, t])
    root_terms = np.array([cl[1, r] + cr[r, n] + sp[0, r] for r in range(1, n + 1)])
    return cr, cl, ir, il, root_terms, _logsumexp(root_terms)


def inside_log_partition(scores: np.ndarray) -> float:
    """log sum over all single-root projective trees of exp(sum of arc scores)."""
    n = _check_scores(scores)
    sp = _pad(np.asarray(scores, dtype=np.float64), n)
    return _inside(sp, n)[5]


@dataclass
class TreeDistribution:
    log_partition: float
    #: (n+1) x n matrix of arc posteriors, same layout as the scores
    marginals: np.ndarray


def marginals(scores: np.ndarray) -> TreeDistribution:
    """Exact arc posteriors P(arc h->d), i.e. d logZ / d scores."""
    n = _check_scores(scores)
    sp = _pad(np.asarray(scores, dtype=np.float64), n)
    cr, cl, ir, il, root_terms, log_z = _inside(sp, n)

    shape = (n + 1, n + 1)
    a_cr = np.zeros(shape)
    a_cl = np.zeros(shape)
    a_ir = np.zeros(shape)
    a_il = np.zeros(shape)
    marg = np.zeros(shape)

    root_w = np.exp(root_terms - log_z)
    for r in range(1, n + 1):
        marg[0, r] = root_w[r - 1]
        a_cl[1, r] += root_w[r - 1]
        a_cr[r, n] += root_w[r - 1]

    for length in range(n - 1, 0, -1):
        for s in range(1, n - length + 1):
            t = s + length
            if a_cr[s, t] != 0.0:
                w = np.exp(ir[s, s + 1 : t + 1] + cr[s + 1 : t + 1, t] - cr[s, t])
                a_ir[s, s + 1 : t + 1] += a_cr[s, t] * w
                a_cr[s + 1 : t + 1, t] += a_cr[s, t] * w
            if a_cl[s, t] != 0.0:
                w = np.exp(cl[s, s:t] + il[s:t, t] - cl[s, t])
                a_cl[s, s:t] += a_cl[s, t] * w
                a_il[s:t, t] += a_cl[s, t] * w
        for s in range(1, n - length + 1):
            t = s + length
            marg[s, t] += a_ir[s, t]
            marg[t, s] += a_il[s, t]
            a_split = a_ir[s, t] + a_il[s, t]
            if a_split != 0.0:
                split = cr[s, s:t] + cl[s + 1 : t + 1, t]
                w = np.exp(split - (ir[s, t] - sp[s, t]))
                a_cr[s, s:t] += a_split * w
                a_cl[s + 1 : t + 1, t] += a_split * w

    out = marg[:, 1:].copy()
    col_sums = out.sum(axis=0)
    root_sum = out[0].sum()
    if np.abs(col_sums - 1.0).max() > 1e-8 or abs(root_sum - 1.0) > 1e-8:
        raise MorphoparseError("marginal normalization check failed")
    return TreeDistribution(log_z, out)


def viterbi_decode(scores: np.ndarray) -> list[int]:
    """Highest-scoring single-root projective tree as a head vector.

    Exact ties are broken toward the lexicographically smallest head vector
    by tracking, alongside each span's score, the integer
    sum_d h_d * (n+1)^(n-d), which orders head vectors lexicographically and
    is minimized among equal-score candidates.
    """
    n = _check_scores(scores)
    s_arr = np.asarray(scores, dtype=np.float64)
    base = n + 1

    def arc_tie(h: int, d: int) -> int:
        return h * base ** (n - d)

    # each table cell holds (score, tiebreak, split point)
    def table():
        return [[None] * (n + 1) for _ in range(n + 1)]

    cr, cl, ir, il = table(), table(), table(), table()
    for i in range(1, n + 1):
        cr[i][i] = (0.0, 0, -1)
        cl[i][i] = (0.0, 0, -1)

    def best(candidates):
        top = None
        for score, tie, r in candidates:
            if top is None or score > top[0] or (score == top[0] and tie < top[1]):
                top = (score, tie, r)
        return top

    for length in range(1, n):
        for s in range(1, n - length + 1):
            t = s + length
            splits = [
                (cr[s][r][0] + cl[r + 1][t][0], cr[s][r][1] + cl[r + 1][t][1], r)
                for r in range(s, t)
            ]
            m = best(splits)
            ir[s][t] = (m[0] + s_arr[s, t - 1], m[1] + arc_tie(s, t), m[2])
            il[s][t] = (m[0] + s_arr[t, s - 1], m[1] + arc_tie(t, s), m[2])
            cr[s][t] = best(
                (ir[s][r][0] + cr[r][t][0], ir[s][r][1] + cr[r][t][1], r)
                for r in range(s + 1, t + 1)
            )
            cl[s][t] = best(
                (cl[s][r][0] + il[r][t][0], cl[s][r][1] + il[r][t][1], r)
                for r in range(s, t)
            )

    root = best(
        (
            cl[1][r][0] + cr[r][n][0] + s_arr[0, r - 1],
            cl[1][r][1] + cr[r][n][1] + arc_tie(0, r),
            r,
        )
        for r in range(1, n + 1)
    )

    heads = [0] * (n + 1)

    def walk(kind: str, s: int, t: int) -> None:
        if s == t:
            return
        if kind == "cr":
            r = cr[s][t][2]
            walk("ir", s, r)
            walk("cr", r, t)
        elif kind == "cl":
            r = cl[s][t][2]
            walk("cl", s, r)
            walk("il", r, t)
        elif kind == "ir":
            heads[t] = s
            r = ir[s][t][2]
            walk("cr", s, r)
            walk("cl", r + 1, t)
        else:  # il
            heads[s] = t
            r = il[s][t][2]
            walk("cr", s, r)
            walk("cl", r + 1, t)

    heads[root[2]] = 0
    walk("cl", 1, root[2])
    walk("cr", root[2], n)
    return heads[1:]


def _arcs_cross(a: tuple[int, int], b: tuple[int, int]) -> bool:
    (a_lo, a_hi), (b_lo, b_hi) = sorted(a), sorted(b)
    return a_lo < b_lo < a_hi < b_hi or b_lo < a_lo < b_hi < a_hi


def is_projective_single_root(heads: list[int] | tuple[int, ...]) -> bool:
    """True when `heads` (1-based dependents, 0 = root) is a connected,
    acyclic, single-root tree whose arcs (root arc included) never cross."""
    n = len(heads)
    if n == 0 or sum(1 for h in heads if h == 0) != 1:
        return False
    if any(not 0 <= h <= n or h == d for d, h in enumerate(heads, start=1)):
        return False
    for d in range(1, n + 1):  # every node must reach the root
        seen = set()
        node = d
        while node != 0:
            if node in seen:
                return False
            seen.add(node)
            node = heads[node - 1]
    arcs = [(heads[d - 1], d) for d in range(1, n + 1)]
    for i in range(len(arcs)):
        for j in range(i + 1, len(arcs)):
            if _arcs_cross(arcs[i], arcs[j]):
                return False
    return True


def enumerate_projective_trees(n: int) -> list[tuple[int, ...]]:
    """All single-root projective head vectors for n words, in lexicographic
    order.  Brute force with incremental pruning; intended as a test oracle."""
    if not 1 <= n <= 8:
        raise MorphoparseError(f"enumeration oracle supports 1 <= n <= 8, got {n}")
    results: list[tuple[int, ...]] = []
    heads = [0] * (n + 1)

    def assign(d: int, root_used: bool, arcs: list[tuple[int, int]]) -> None:
        if d > n:
            if root_used and is_projective_single_root(heads[1:]):
                results.append(tuple(heads[1:]))
            return
        for h in range(0, n + 1):
            if h == d or (h == 0 and root_used):
                continue
            arc = (h, d)
            if any(_arcs_cross(arc, other) for other in arcs):
                continue
            heads[d] = h
            arcs.append(arc)
            assign(d + 1, root_used or h == 0, arcs)
            arcs.pop()
        heads[d] = 0

    assign(1, False, [])
    return results


def crf_nll_and_grad(
    scores: np.ndarray, gold_heads: list[int] | tuple[int, ...]
) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of the gold tree and its score gradient
    (marginals minus the gold indicator)."""
    n = _check_scores(scores)
    if len(gold_heads) != n:
        raise MorphoparseError(f"gold head vector length {len(gold_heads)} != {n}")
    if not is_projective_single_root(gold_heads):
        raise FormatError(f"gold tree is not a single-root projective tree: {gold_heads}")
    dist = marginals(scores)
    s_arr = np.asarray(scores, dtype=np.float64)
    gold_score = sum(s_arr[h, d] for d, h in enumerate(gold_heads))
    grad = dist.marginals.copy()
    for d, h in enumerate(gold_heads):
        grad[h, d] -= 1.0
    return max(dist.log_partition - float(gold_score), 0.0), grad
