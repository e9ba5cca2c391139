"""Independent scalar re-implementations used as test oracles."""

import math

import numpy as np


def roi_align_oracle(fmap, box, out_size, samples):
    """Brute-force bilinear ROIAlign over a ``[C, H, W]`` array, written from
    the bilinear formula with explicit loops."""
    c, h, w = fmap.shape
    ph, pw = out_size
    x0, y0 = box[0] * w - 0.5, box[1] * h - 0.5
    x1, y1 = box[2] * w - 0.5, box[3] * h - 0.5
    bin_h, bin_w = (y1 - y0) / ph, (x1 - x0) / pw
    out = np.zeros((c, ph, pw))
    for i in range(ph):
        for j in range(pw):
            acc = np.zeros(c)
            for a in range(samples):
                for b in range(samples):
                    y = y0 + (i + (a + 0.5) / samples) * bin_h
                    x = x0 + (j + (b + 0.5) / samples) * bin_w
                    y = min(max(y, 0.0), h - 1.0)
                    x = min(max(x, 0.0), w - 1.0)
                    yl, xl = int(math.floor(y)), int(math.floor(x))
                    yh, xh = min(yl + 1, h - 1), min(xl + 1, w - 1)
                    dy, dx = y - yl, x - xl
                    acc = acc + ((1 - dy) * (1 - dx) * fmap[:, yl, xl] + (1 - dy) * dx * fmap[:, yl, xh]
                                 + dy * (1 - dx) * fmap[:, yh, xl] + dy * dx * fmap[:, yh, xh])
            out[:, i, j] = acc / (samples * samples)
    return out


def knn_oracle(boxes, n_max):
    """Exhaustive sort of (distance, index) pairs."""
    centers = [((b[0] + b[2]) / 2, (b[1] + b[3]) / 2) for b in boxes]
    result = []
    for j, cj in enumerate(centers):
        cand = sorted((math.dist(cj, ck), k) for k, ck in enumerate(centers) if k != j)
        result.append([k for _, k in cand[:n_max]])
    return result


def _linear(x, w, b):
    out = [sum(x[i] * w[i][o] for i in range(len(x))) for o in range(len(w[0]))]
    return [v + (b[o] if b is not None else 0.0) for o, v in enumerate(out)]


def correlation_oracle(net, features, neighbors):
    """Direct summation over neighbours with per-pair scalar scoring."""
    fc_w = net.fc.weight.data.tolist()
    m1_w, m1_b = net.mlp1.weight.data.tolist(), net.mlp1.bias.data.tolist()
    m2_w, m2_b = net.mlp2.weight.data.tolist(), net.mlp2.bias.data.tolist()
    feats = np.asarray(features).tolist()
    d = len(feats[0])
    out = []
    for j, nb in enumerate(neighbors):
        if not nb:
            out.append([0.0] * d)
            continue
        hj = _linear(feats[j], fc_w, None)
        scores = []
        for k in nb:
            hk = _linear(feats[k], fc_w, None)
            diff = [a - b for a, b in zip(hj, hk)]
            hidden = [max(v, 0.0) for v in _linear(diff, m1_w, m1_b)]
            scores.append(_linear(hidden, m2_w, m2_b)[0])
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        z = sum(ex)
        weights = [e / z for e in ex]
        out.append([sum(wt * feats[k][t] for wt, k in zip(weights, nb)) for t in range(d)])
    return np.array(out)


def nt_xent_oracle(z, tau):
    """Scalar NT-Xent over interleaved rows (partner of i is i ^ 1)."""
    rows = [list(map(float, r)) for r in z]
    norms = [math.sqrt(sum(v * v for v in r)) for r in rows]
    unit = [[v / n for v in r] for r, n in zip(rows, norms)]
    n2 = len(unit)
    total = 0.0
    for i in range(n2):
        sims = [sum(a * b for a, b in zip(unit[i], unit[k])) / tau for k in range(n2)]
        denom = sum(math.exp(sims[k]) for k in range(n2) if k != i)
        total += -(sims[i ^ 1] - math.log(denom))
    return total / n2
