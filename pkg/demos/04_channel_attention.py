"""Attention across channels rather than pixels.

Every channel is a token whose "embedding" is the whole flattened feature
map, so the attention matrix is C x C no matter how large the image is.
"""
import torch

from uwunfold.isf_former import attention_weights, pixel_self_attention

torch.manual_seed(0)
c = 4
q = torch.randn(1, 1, c, 32 * 32)
k = torch.randn(1, 1, c, 32 * 32)
w = attention_weights(q, k)
print("attention matrix:\n", w[0, 0].numpy().round(3))
print("rows sum to one:", w.sum(-1).squeeze().numpy().round(6))

print("with a zero query every channel attends uniformly:")
print(attention_weights(torch.zeros_like(q), k)[0, 0].numpy())

# make channel 2 of the keys match channel 0 of the queries
k[..., 2, :] = q[..., 0, :]
print("query 0 after aligning key 2:", attention_weights(q, k)[0, 0, 0].numpy().round(3))

v = torch.randn(1, c, 64, 64)
out = pixel_self_attention(torch.randn(1, c, 64, 64), torch.randn(1, c, 64, 64), v)
print("output shape follows the values:", tuple(out.shape))
