"""Brute-force reference implementations used to pin expected test values.

Everything here is written with explicit Python loops and no imports from the
package under test, so a bug in the fast paths cannot hide in its own oracle.
Slow on purpose; keep instances small.
"""
from __future__ import annotations

import math

import numpy as np


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += float(a[i, p]) * float(b[p, j])
            out[i, j] = acc
    return out


def softmax_rows_loops(m: np.ndarray) -> np.ndarray:
    out = np.zeros_like(np.asarray(m, dtype=np.float64))
    for i in range(m.shape[0]):
        row = [float(v) for v in m[i]]
        top = max(row)
        exps = [math.exp(v - top) for v in row]
        total = sum(exps)
        for j, e in enumerate(exps):
            out[i, j] = e / total
    return out


def pool3d_loops(x: np.ndarray, kernel: tuple[int, int, int], mode: str) -> np.ndarray:
    """Stride-1 same-size pooling; max ignores out-of-bounds positions, avg
    divides by the in-bounds count."""
    c, t, h, w = x.shape
    kt, kh, kw = kernel
    out = np.zeros_like(np.asarray(x, dtype=np.float64))
    for ci in range(c):
        for ti in range(t):
            for hi in range(h):
                for wi in range(w):
                    values = []
                    for dt in range(-(kt // 2), kt // 2 + 1):
                        for dh in range(-(kh // 2), kh // 2 + 1):
                            for dw in range(-(kw // 2), kw // 2 + 1):
                                tt, hh, ww = ti + dt, hi + dh, wi + dw
                                if 0 <= tt < t and 0 <= hh < h and 0 <= ww < w:
                                    values.append(float(x[ci, tt, hh, ww]))
                    out[ci, ti, hi, wi] = max(values) if mode == "max" else sum(values) / len(values)
    return out


def channel_mix_loops(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    c_in, t, h, w_ = x.shape
    c_out = w.shape[0]
    out = np.zeros((c_out, t, h, w_), dtype=np.float64)
    for o in range(c_out):
        for ti in range(t):
            for hi in range(h):
                for wi in range(w_):
                    acc = 0.0
                    for i in range(c_in):
                        acc += float(w[o, i]) * float(x[i, ti, hi, wi])
                    out[o, ti, hi, wi] = acc
    return out


def conv3d_loops(
    x: np.ndarray, w: np.ndarray, stride: tuple[int, int, int], padding: str
) -> np.ndarray:
    """Direct-summation cross-correlation. same mode zero-pads with the total
    split as before = total // 2; output extent = ceil(in / stride)."""
    c_in, t, h, wd = x.shape
    c_out, c_in2, kt, kh, kw = w.shape
    assert c_in == c_in2
    st, sh, sw = stride

    def geometry(extent, kernel, s):
        if padding == "same":
            out = -(-extent // s)
            total = max((out - 1) * s + kernel - extent, 0)
            return out, total // 2
        return (extent - kernel) // s + 1, 0

    ot, pt = geometry(t, kt, st)
    oh, ph = geometry(h, kh, sh)
    ow, pw = geometry(wd, kw, sw)
    out = np.zeros((c_out, ot, oh, ow), dtype=np.float64)
    for o in range(c_out):
        for ti in range(ot):
            for hi in range(oh):
                for wi in range(ow):
                    acc = 0.0
                    for i in range(c_in):
                        for a in range(kt):
                            for b in range(kh):
                                for g in range(kw):
                                    tt = ti * st - pt + a
                                    hh = hi * sh - ph + b
                                    ww = wi * sw - pw + g
                                    if 0 <= tt < t and 0 <= hh < h and 0 <= ww < wd:
                                        acc += float(x[i, tt, hh, ww]) * float(w[o, i, a, b, g])
                    out[o, ti, hi, wi] = acc
    return out


def reshape_matrix_loops(f: np.ndarray) -> np.ndarray:
    """Flatten (c,t,h,w) to (c*t) x (h*w) with row = c_idx*t + t_idx and
    column = h_idx*w + w_idx."""
    c, t, h, w = f.shape
    out = np.zeros((c * t, h * w), dtype=np.float64)
    for ci in range(c):
        for ti in range(t):
            for hi in range(h):
                for wi in range(w):
                    out[ci * t + ti, hi * w + wi] = float(f[ci, ti, hi, wi])
    return out


def fam_mask_loops(
    f: np.ndarray,
    dimension: str,
    resolution: int,
    pool: str,
    reduction: int,
    temperature: float,
    weight: np.ndarray,
) -> np.ndarray:
    """Channel reduction, axis pooling, flatten, gram matrix, row softmax."""
    reduced = channel_mix_loops(f, weight)
    kernel = (resolution, 1, 1) if dimension == "temporal" else (1, resolution, resolution)
    pooled = pool3d_loops(reduced, kernel, pool)
    tmat = reshape_matrix_loops(pooled)
    sites = tmat.shape[1]
    gram = np.zeros((sites, sites), dtype=np.float64)
    for i in range(sites):
        for j in range(sites):
            acc = 0.0
            for r in range(tmat.shape[0]):
                acc += tmat[r, i] * tmat[r, j]
            gram[i, j] = temperature * acc
    return softmax_rows_loops(gram)


def ffm_apply_loops(f: np.ndarray, mask: np.ndarray) -> np.ndarray:
    c, t, h, w = f.shape
    flat = reshape_matrix_loops(f)
    mixed = matmul_loops(flat, np.asarray(mask, dtype=np.float64))
    out = np.zeros((c, t, h, w), dtype=np.float64)
    for ci in range(c):
        for ti in range(t):
            for hi in range(h):
                for wi in range(w):
                    out[ci, ti, hi, wi] = mixed[ci * t + ti, hi * w + wi]
    return out


def cross_entropy_loops(logits: np.ndarray, labels) -> float:
    total = 0.0
    for i, label in enumerate(labels):
        row = [float(v) for v in logits[i]]
        top = max(row)
        denom = sum(math.exp(v - top) for v in row)
        total += -(row[int(label)] - top - math.log(denom))
    return total / len(labels)


def cosine_distance_loops(u, v) -> float:
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    nu = math.sqrt(sum(float(a) ** 2 for a in u))
    nv = math.sqrt(sum(float(b) ** 2 for b in v))
    return 1.0 - dot / (nu * nv)


def batch_hard_loops(embeddings: np.ndarray, labels, margin: float) -> float:
    n = embeddings.shape[0]
    labels = [int(x) for x in labels]
    total = 0.0
    for a in range(n):
        hardest_pos = None
        hardest_neg = None
        for other in range(n):
            if other == a:
                continue
            d = cosine_distance_loops(embeddings[a], embeddings[other])
            if labels[other] == labels[a]:
                hardest_pos = d if hardest_pos is None else max(hardest_pos, d)
            else:
                hardest_neg = d if hardest_neg is None else min(hardest_neg, d)
        assert hardest_pos is not None and hardest_neg is not None
        total += max(0.0, hardest_pos - hardest_neg + margin)
    return total / n


def evaluate_loops(distances, query_ids, query_cams, gallery_ids, gallery_cams, max_rank):
    """Definitional CMC/mAP: sort with index tie-break, drop same-id+same-cam
    entries, precision-at-relevant AP, first-hit CMC."""
    n_query = len(query_ids)
    cmc = [0.0] * max_rank
    aps = []
    skipped = 0
    for q in range(n_query):
        pairs = sorted((float(distances[q][g]), g) for g in range(len(gallery_ids)))
        ranked = [
            g
            for _, g in pairs
            if not (gallery_ids[g] == query_ids[q] and gallery_cams[g] == query_cams[q])
        ]
        hits = [int(gallery_ids[g] == query_ids[q]) for g in ranked]
        if sum(hits) == 0:
            skipped += 1
            continue
        first = hits.index(1)
        for k in range(max_rank):
            if first <= k:
                cmc[k] += 1.0
        precisions = []
        seen = 0
        for pos, hit in enumerate(hits, start=1):
            seen += hit
            if hit:
                precisions.append(seen / pos)
        aps.append(sum(precisions) / sum(hits))
    counted = n_query - skipped
    if counted == 0:
        raise ZeroDivisionError("all queries skipped")
    return [c / counted for c in cmc], sum(aps) / counted, counted, skipped
