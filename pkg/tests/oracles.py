"""Brute-force reference implementations, written as plain per-pixel loops.

They share no code with the package; the unit and acceptance tests compare
the vectorised paths against these.
"""

import math


def cumulative_alpha_bar(betas):
    out, prod = [], 1.0
    for b in betas:
        prod *= 1.0 - b
        out.append(prod)
    return out


def confusion_loop(pred, obs):
    tp = fp = fn = tn = 0
    for i in range(len(pred)):
        for j in range(len(pred[0])):
            p, o = bool(pred[i][j]), bool(obs[i][j])
            if p and o:
                tp += 1
            elif p:
                fp += 1
            elif o:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def csi_loop(tp, fp, fn, tn):
    den = tp + fp + fn
    return tp / den if den else None


def hss_loop(tp, fp, fn, tn, mode="standard"):
    if mode == "standard":
        num = 2 * (tp * tn - fn * fp)
        den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn)
    else:
        num = tp * tn - fn * fp
        den = (tp + tn) * (fn + tn) + (tp + fp) * (fp + tn)
    return num / den if den else None


def fractions_loop(mask, n):
    h, w = len(mask), len(mask[0])
    r = n // 2
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            s = c = 0
            for a in range(i - r, i + r + 1):
                for b in range(j - r, j + r + 1):
                    if 0 <= a < h and 0 <= b < w:
                        s += 1 if mask[a][b] else 0
                        c += 1
            out[i][j] = s / c
    return out


def fss_loop(pred, obs, threshold, n):
    pm = [[v > threshold for v in row] for row in pred]
    om = [[v > threshold for v in row] for row in obs]
    pf, po = fractions_loop(pm, n), fractions_loop(om, n)
    cells = [(i, j) for i in range(len(pm)) for j in range(len(pm[0]))]
    count = len(cells)
    mse_n = math.fsum((pf[i][j] - po[i][j]) ** 2 for i, j in cells) / count
    ref = (
        math.fsum(pf[i][j] ** 2 for i, j in cells) / count
        + math.fsum(po[i][j] ** 2 for i, j in cells) / count
    )
    return 1.0 - mse_n / ref if ref else None


def mse_loop(pred, obs):
    vals = []
    for i in range(len(pred)):
        for j in range(len(pred[0])):
            d = float(pred[i][j]) - float(obs[i][j])
            vals.append(d * d)
    return math.fsum(vals) / len(vals)


def weighted_l1_loop(gen, target, mode="max24"):
    total, count = 0.0, 0
    for g_row, t_row in zip(gen, target):
        for g, t in zip(g_row, t_row):
            w = max(t, 24.0) if mode == "max24" else min(t, 24.0)
            total += abs((g - t) * w)
            count += 1
    return total / count
