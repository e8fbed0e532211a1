"""Scaled dot-product attention, multi-head mixing, and a gradient check."""
import numpy as np

from emgvit import Tensor, backward
from emgvit import tensor as T
from emgvit.vit import VitConfig, init_params, multi_head_attention

cfg = VitConfig(
    embed_dim=8, mlp_size=16, depth=1, num_heads=2, patch_side=1,
    num_classes=3, num_patches=4, patch_dim=4,
)
params = init_params(cfg, seed=0)
lp = params.layers[0]
rng = np.random.default_rng(0)
z = rng.standard_normal((5, 8))

# attention rows are probability distributions
q = z @ lp.wq.values + lp.bq.values
k = z @ lp.wk.values + lp.bk.values
scores = q[:, :4] @ k[:, :4].T / np.sqrt(4)  # head 0
weights = np.exp(scores - scores.max(axis=1, keepdims=True))
weights /= weights.sum(axis=1, keepdims=True)
print("head-0 attention row sums:", weights.sum(axis=1).round(12))

out = multi_head_attention(Tensor(z), lp, cfg)
print("MSA output shape:", out.shape)

# autodiff: gradient of a scalar readout wrt the input sequence
readout = rng.standard_normal((5, 8))
leaf = Tensor(z, requires_grad=True)
loss = T.tensor_sum(T.mul(multi_head_attention(leaf, lp, cfg), Tensor(readout)))
backward(loss)
analytic = leaf.grad[2, 3]

h = 1e-5
zp, zm = z.copy(), z.copy()
zp[2, 3] += h
zm[2, 3] -= h
with T.no_grad():
    fp = float(np.sum(multi_head_attention(Tensor(zp), lp, cfg).values * readout))
    fm = float(np.sum(multi_head_attention(Tensor(zm), lp, cfg).values * readout))
numeric = (fp - fm) / (2 * h)
print(f"d(loss)/dz[2,3]: autodiff {analytic:+.8f}  finite-difference {numeric:+.8f}")
