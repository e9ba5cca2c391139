# Positive views and the NT-Xent loss.

import numpy as np

from cgmm.contrastive import AugmentConfig, ContrastiveBatch, augment, contrastive_loss, nt_xent
from cgmm.data import FrameSample, SynonymTable, TextBox
from cgmm.numeric import Tensor

rng = np.random.default_rng(3)
syn = SynonymTable([(2, 5), (3, 6, 7)])
sample = FrameSample(rng.random((3, 8, 8)), [TextBox((0.1, 0.1, 0.6, 0.3), (2, 3, 4, 0), "", "caption")],
                     "train", 0)

for modes in (["POS"], ["CV"], ["NLP"], ["POS", "CV", "NLP"]):
    view = augment(sample, modes, rng, syn, AugmentConfig(replace_prob=0.5))
    b = view.boxes[0]
    moved = np.abs(np.subtract(b.box, sample.boxes[0].box)).max()
    print(f"{'+'.join(modes):12s} box moved {moved:.3f}  pixels changed {not np.array_equal(view.frame, sample.frame)}"
          f"  tokens {b.tokens}")

# Identical embeddings: every other item is as similar as the positive, loss = ln(2N - 1).
z = Tensor(np.ones((4, 3)))
print("all identical, N=2:", contrastive_loss(ContrastiveBatch(z)).item(), "ln 3 =", np.log(3))

# Well separated pairs drive the loss toward zero.
a = np.eye(4)[:2] * 5
print("separated pairs:", nt_xent(Tensor(a), Tensor(a + 0.01), 0.2).item())
