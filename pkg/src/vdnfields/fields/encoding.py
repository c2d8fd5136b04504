"""Sinusoidal positional encoding with a forward-mode tangent rule.

x -> (x, sin(2^j pi x), cos(2^j pi x)) per axis for j < n_freqs. The tangent
path reuses the primal sin/cos tensors, so differentiating through an encoded
directional derivative stays a first-order reverse pass.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, add, concat, cos, mul, neg, narrow, reduce_sum, reshape, sin, sub


class PositionalEncoding:
    def __init__(self, n_freqs: int):
        self.n_freqs = int(n_freqs)
        self.freqs = (2.0 ** np.arange(self.n_freqs) * np.pi).astype(np.float64)

    def out_dim(self, in_dim: int) -> int:
        return in_dim * (1 + 2 * self.n_freqs)

    def _scaled(self, x: Tensor) -> Tensor:
        n, d = x.shape
        f = Tensor(self.freqs.reshape(1, 1, -1).astype(x.dtype))
        xf = mul(reshape(x, (n, d, 1)), f)
        return reshape(xf, (n, d * self.n_freqs))

    def encode(self, x: Tensor) -> Tensor:
        if self.n_freqs == 0:
            return x
        xf = self._scaled(x)
        return concat([x, sin(xf), cos(xf)], axis=1)

    def encode_jvp(self, x: Tensor, t: Tensor, k: int):
        """Encode x (N,d) and propagate a stack of k tangents t (k,N,d).

        Returns (enc (N,D), tenc (k,N,D)). The tangent path broadcasts the
        cached primal sin/cos over the probe axis.
        """
        if self.n_freqs == 0:
            return x, t
        xf = self._scaled(x)
        s, c = sin(xf), cos(xf)
        enc = concat([x, s, c], axis=1)
        kn, n, d = t.shape
        f = Tensor(self.freqs.reshape(1, 1, 1, -1).astype(x.dtype))
        tf = reshape(mul(reshape(t, (kn, n, d, 1)), f), (kn, n, d * self.n_freqs))
        tenc = concat([t, mul(c, tf), neg(mul(s, tf))], axis=2)
        return enc, tenc

    def backprop_input(self, x: Tensor, g: Tensor) -> Tensor:
        """Pull a cotangent g (N,D) on the encoding back to x-space (N,d).

        Expressed in tape operations so the result stays differentiable;
        used by the reverse-composition spatial gradient.
        """
        if self.n_freqs == 0:
            return g
        n, d = x.shape
        nf = self.n_freqs
        g_raw = narrow(g, 1, 0, d)
        g_sin = reshape(narrow(g, 1, d, d * nf), (n, d, nf))
        g_cos = reshape(narrow(g, 1, d + d * nf, d * nf), (n, d, nf))
        f = Tensor(self.freqs.reshape(1, 1, -1).astype(x.dtype))
        xf = reshape(mul(reshape(x, (n, d, 1)), f), (n, d, nf))
        c, s = cos(xf), sin(xf)
        term = sub(mul(mul(c, f), g_sin), mul(mul(s, f), g_cos))
        return add(g_raw, reduce_sum(term, axis=2))
