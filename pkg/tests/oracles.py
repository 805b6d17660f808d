"""Independent reference implementations written as plain loops."""
import math

import numpy as np


def conv2d_loops(x, w, b, stride=1, padding=0):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for i in range(n):
        for o in range(f):
            for r in range(ho):
                for s in range(wo):
                    acc = 0.0 if b is None else float(b[o])
                    for ch in range(c):
                        for p in range(k):
                            for q in range(k):
                                acc += xp[i, ch, r * stride + p, s * stride + q] * w[o, ch, p, q]
                    out[i, o, r, s] = acc
    return out


def depthwise_loops(x, w, b, padding=0):
    n, c, h, wd = x.shape
    k = w.shape[-1]
    out = np.zeros((n, c, h + 2 * padding - k + 1, wd + 2 * padding - k + 1))
    for ch in range(c):
        single = conv2d_loops(x[:, ch:ch + 1], w[ch:ch + 1], None if b is None else b[ch:ch + 1],
                              padding=padding)
        out[:, ch] = single[:, 0]
    return out


def maxpool_loops(x, window=2):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // window, w // window))
    for i in range(n):
        for ch in range(c):
            for r in range(h // window):
                for s in range(w // window):
                    best = -math.inf
                    for p in range(window):
                        for q in range(window):
                            best = max(best, x[i, ch, r * window + p, s * window + q])
                    out[i, ch, r, s] = best
    return out


def dense_loops(x, w, b):
    x = x.reshape(x.shape[0], -1)
    out = np.zeros((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for o in range(w.shape[1]):
            out[i, o] = sum(x[i, d] * w[d, o] for d in range(w.shape[0])) + (0 if b is None else b[o])
    return out


def relu_loops(x):
    return np.array([v if v > 0 else 0.0 for v in x.ravel()]).reshape(x.shape)


def sigmoid_loops(x):
    return np.array([1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))
                     for v in x.ravel()]).reshape(x.shape)


def _two_pass(values):
    values = list(values)
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, var


def layer_norm_loops(x, scale, shift, eps=1e-5):
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(n):
        for ch in range(c):
            mean, var = _two_pass(x[i, ch].ravel())
            out[i, ch] = (x[i, ch] - mean) / math.sqrt(var + eps) * scale[ch] + shift[ch]
    return out


def batch_norm_loops(x, scale, shift, eps=1e-5):
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    stats = []
    for ch in range(c):
        mean, var = _two_pass(x[:, ch].ravel())
        stats.append((mean, var))
        out[:, ch] = (x[:, ch] - mean) / math.sqrt(var + eps) * scale[ch] + shift[ch]
    return out, stats


def cross_entropy_loops(logits, labels):
    total = 0.0
    for row, y in zip(logits, labels):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[y]
    return total / len(labels)


def confusion_tally(preds, labels, c):
    cm = [[0] * c for _ in range(c)]
    for p, t in zip(preds, labels):
        cm[t][p] += 1
    return np.array(cm)


def metrics_tally(cm):
    c = len(cm)
    total = sum(sum(r) for r in cm)
    recalls, f1s, precisions = [], [], []
    for i in range(c):
        tp = cm[i][i]
        fn = sum(cm[i]) - tp
        fp = sum(cm[r][i] for r in range(c)) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    acc = sum(cm[i][i] for i in range(c)) / total
    return acc, sum(f1s) / c, sum(recalls) / c, precisions, recalls, f1s
