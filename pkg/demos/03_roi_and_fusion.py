# From pixels to a per-box feature: CNN map, ROIAlign patch, patch-frame transformer, text, concat.

import numpy as np

from cgmm.encoders import TextEncoder, VisualEncoder
from cgmm.fusion import PatchFrameTransformer, cross_attend, fuse, roi_align

rng = np.random.default_rng(1)
frame = rng.random((3, 96, 128))
box = (0.1, 0.70, 0.9, 0.82)  # a subtitle-like strip, normalized x0, y0, x1, y1

cnn = VisualEncoder(rng)
fmap = cnn(frame)
print("feature map", fmap.values.shape, "stride", (fmap.stride_y, fmap.stride_x))

# ROIAlign samples the map bilinearly, no rounding of the box.
patch = roi_align(fmap, box, out_size=(3, 3), samples_per_bin=2)
print("patch", patch.shape)

# A constant map gives a constant patch, whatever the box.
const = roi_align(type(fmap)(fmap.values * 0 + 2.5, fmap.stride_y, fmap.stride_x), box)
print("constant map ->", np.unique(const.data))

pft = PatchFrameTransformer(cnn.channels, rng, d_vis=32, frame_pool=4)
f_vis = cross_attend(pft, patch, fmap, box)
print("f_vis", f_vis.shape, "attention rows sum to", pft.attention_maps[0].sum(axis=-1).ravel()[:3])

text = TextEncoder(256, rng, d_text=32, max_tokens=8)
f_text = text(np.array([17, 40, 3, 0, 0, 0, 0, 0]))
f1 = fuse(f_vis, f_text)
print("fused", f1.shape)
print("w/o CV zeroes the visual half:", np.all(fuse(f_vis, f_text, drop={"CV"}).data[:32] == 0))
