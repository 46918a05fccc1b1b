"""Cross-attention forward pass and analytic gradients.

Runs the single-head cross-attention block on a small query/anchor
feature pair, shows the attention rows, and then verifies one analytic
gradient from the backward pass against a central finite difference —
the same check the test suite performs over every parameter.
"""

import numpy as np

from rocpose import attention_backward, cross_attention


def main() -> None:
    rng = np.random.default_rng(0)
    fq = rng.normal(size=(4, 3))   # 4 query tokens, 3-dim features
    fa = rng.normal(size=(6, 3))   # 6 anchor tokens
    wq = rng.normal(size=(3, 5))
    wk = rng.normal(size=(3, 5))
    wv = rng.normal(size=(3, 5))

    out, attn = cross_attention(fq, fa, wq, wk, wv)
    print(f"output shape {out.shape}, attention shape {attn.shape}")
    print("attention rows (each sums to 1):")
    with np.printoptions(precision=3, suppress=True):
        print(attn)
    print(f"row sums: {attn.sum(axis=1)}\n")

    grad_out = rng.normal(size=out.shape)
    grads = attention_backward(fq, fa, wq, wk, wv, grad_out)
    print("analytic gradient shapes:",
          {k: v.shape for k, v in grads.items()})

    # finite-difference check on wq
    h = 1e-6
    num = np.zeros_like(wq)
    for idx in np.ndindex(*wq.shape):
        bump = np.zeros_like(wq)
        bump[idx] = h
        up, _ = cross_attention(fq, fa, wq + bump, wk, wv)
        dn, _ = cross_attention(fq, fa, wq - bump, wk, wv)
        num[idx] = np.sum(grad_out * (up - dn)) / (2 * h)
    gap = np.max(np.abs(grads["wq"] - num))
    print(f"max |analytic - numeric| on wq: {gap:.3e}")


if __name__ == "__main__":
    main()
