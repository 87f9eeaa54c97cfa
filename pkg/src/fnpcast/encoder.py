"""Probabilistic sequence encoder: GRU, attention pooling, Gaussian embedding.

Parameters live in a flat mapping ``name -> Tensor`` so the same functions
run on watched leaves during training and on constants at inference.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError

# additive score for masked attention slots; exp() of it underflows to 0
_MASKED = -1e30


@dataclass(frozen=True)
class DiagonalGaussian:
    """Gaussian with diagonal covariance, stored as mean and log-variance."""

    mean: Tensor
    logvar: Tensor

    def __post_init__(self):
        if self.mean.shape != self.logvar.shape:
            raise ContractError(
                f"mean shape {self.mean.shape} != log-variance shape {self.logvar.shape}")

    @property
    def variance(self):
        return np.exp(self.logvar.data)

    def sample(self, rng):
        return reparameterize(self, rng.standard_normal(self.mean.shape))


def standard_normal(shape):
    """The N(0, I) Gaussian of the given shape as constants."""
    return DiagonalGaussian(ad.constant(np.zeros(shape)), ad.constant(np.zeros(shape)))


def reparameterize(g, noise):
    """``mean + exp(logvar / 2) * noise``, differentiable in mean and log-variance."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != g.mean.shape:
        raise ContractError(f"noise shape {noise.shape} != Gaussian shape {g.mean.shape}")
    return g.mean + ad.exp(0.5 * g.logvar) * noise


def linear(P, name, x):
    return ad.matmul(x, P[name + ".W"]) + P[name + ".b"]


def mlp(P, name, x, n_layers):
    """Stack of ``n_layers`` linear maps with ReLU between them."""
    for i in range(n_layers):
        if i:
            x = ad.relu(x)
        x = linear(P, f"{name}.{i}", x)
    return x


def pad_sequences(sequences):
    """Right-pad with zeros; returns ``(X, lengths)``."""
    seqs = [np.asarray(s, dtype=np.float64).reshape(-1) for s in sequences]
    if not seqs:
        raise ContractError("no sequences to encode")
    lengths = np.array([len(s) for s in seqs])
    if lengths.min() < 1:
        raise ContractError("cannot encode an empty sequence")
    X = np.zeros((len(seqs), lengths.max()))
    for i, s in enumerate(seqs):
        X[i, : len(s)] = s
    return X, lengths


def gru_forward(P, X):
    """Run the GRU over a ``(batch, time)`` array from a zero initial state.

    Gates follow the update/reset/candidate convention with the reset gate
    applied to the previous state inside the candidate preactivation::

        z = sigmoid(x Wxz + h Whz + bz)
        r = sigmoid(x Wxr + h Whr + br)
        n = tanh(x Wxn + (r * h) Whn + bn)
        h' = z * h + (1 - z) * n

    Returns the list of hidden states, one ``(batch, hidden)`` tensor per step.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] < 1:
        raise ContractError("cannot run the GRU on an empty sequence")
    W_hn = P["gru.W_hn"]
    hidden = W_hn.shape[0]
    xw = ad.matmul(X[:, :, None], P["gru.W_x"]) + P["gru.b"]
    h = ad.constant(np.zeros((X.shape[0], hidden)))
    states = []
    for t in range(X.shape[1]):
        zr = ad.sigmoid(xw[:, t, : 2 * hidden] + ad.matmul(h, P["gru.W_hzr"]))
        z = zr[:, :hidden]
        r = zr[:, hidden:]
        n = ad.tanh(xw[:, t, 2 * hidden:] + ad.matmul(r * h, W_hn))
        h = n + z * (h - n)
        states.append(h)
    return states


def stack_states(states):
    """``T`` tensors of shape ``(B, H)`` -> one ``(B, T, H)`` tensor."""
    B, H = states[0].shape
    return ad.reshape(ad.concat(states), (B, len(states), H))


def attention_scores(P, name, keys_src, query_src):
    """Scaled dot-product scores of averaged queries against every key.

    ``query_src`` rows are already-averaged inputs; since the query map is
    affine, projecting the mean equals averaging the per-step queries, so the
    score a step receives is its mean score across all querying steps.
    """
    q = linear(P, name + ".q", query_src)
    k = linear(P, name + ".k", keys_src)
    return ad.matmul(q, ad.swapaxes(k)) * (1.0 / np.sqrt(k.shape[-1]))


def set_attention(P, name, X):
    """Attention pooling over the second-to-last axis of ``X``.

    Returns ``(weights, pooled)`` with shapes ``(..., n)`` and ``(..., d)``.
    """
    n, d = X.shape[-2:]
    if n < 1:
        raise ContractError("attention over an empty set")
    lead = X.shape[:-2]
    q_src = ad.mean(X, axis=-2, keepdims=True)
    weights = ad.softmax(attention_scores(P, name, X, q_src))
    pooled = ad.matmul(weights, X)
    return ad.reshape(weights, lead + (n,)), ad.reshape(pooled, lead + (d,))


def attention_summary(P, hidden):
    """Pool hidden states ``(..., T, H)`` into ``(alpha, h_bar)``."""
    return set_attention(P, "attn", ad.constant(hidden))


def prefix_summaries(P, H):
    """Attention summaries of every prefix of every sequence at once.

    ``H`` is ``(B, T, hidden)``. Row ``[b, t]`` of the result equals
    ``attention_summary`` applied to ``H[b, : t + 1]``: queries are causal
    running means and keys beyond ``t`` are masked out. Padded tail steps
    therefore never leak into shorter prefixes.
    """
    T = H.shape[1]
    tri = np.tril(np.ones((T, T)))
    running_mean = tri / tri.sum(axis=1, keepdims=True)
    q_src = ad.matmul(running_mean, H)
    scores = attention_scores(P, "attn", H, q_src) + np.where(tri > 0, 0.0, _MASKED)
    alpha = ad.softmax(scores)
    return ad.matmul(alpha, H)


def embed(P, h_bar):
    """Gaussian embedding from summaries: mean ``g1(h)``, log-variance ``g2(h)``."""
    return DiagonalGaussian(mlp(P, "g1", h_bar, 3), mlp(P, "g2", h_bar, 3))


def encode_all_prefixes(P, X):
    """Summaries ``(B, T, hidden)`` for all prefixes of the padded batch ``X``."""
    return prefix_summaries(P, stack_states(gru_forward(P, X)))


def summarize(P, sequences):
    """Attention summary of the full length of each sequence, ``(B, hidden)``."""
    X, lengths = pad_sequences(sequences)
    h_all = encode_all_prefixes(P, X)
    return h_all[np.arange(len(lengths)), lengths - 1]


def encode(P, sequences):
    """Encode sequences into their Gaussian embeddings.

    Returns ``(DiagonalGaussian of shape (B, dim), h_bar of shape (B, hidden))``.
    """
    h_bar = summarize(P, sequences)
    return embed(P, h_bar), h_bar
