# Neighbour graph over a frame's boxes and attention-weighted aggregation.

import numpy as np

from cgmm.correlationnet import CorrelationNet, build_neighbor_graph, final_feature
from cgmm.numeric import Tensor

boxes = np.array([
    [0.10, 0.05, 0.90, 0.15],  # caption
    [0.05, 0.55, 0.40, 0.62],  # person info
    [0.10, 0.80, 0.90, 0.90],  # subtitle
    [0.70, 0.30, 0.95, 0.35],  # ticker
    [0.00, 0.93, 1.00, 0.99],  # ticker
])
g = build_neighbor_graph(boxes, n_max=2)
for j, nb in enumerate(g.neighbors):
    print(f"box {j}: nearest {nb}")

rng = np.random.default_rng(0)
feats = rng.standard_normal((5, 6))
net = CorrelationNet(6, rng, d_corr=8)
idx, mask = g.padded()
f_b = net(Tensor(feats), idx, mask)
print("weights per box (rows sum to 1):\n", np.round(net.last_weights, 3))
print("final feature width:", final_feature(f_b, Tensor(feats)).shape[-1], "= 2 x", feats.shape[1])

# A lone box has no neighbours, so its aggregate is zero.
solo = net(Tensor(feats[:1]), *build_neighbor_graph(boxes[:1], 2).padded())
print("single box aggregate:", solo.data)
