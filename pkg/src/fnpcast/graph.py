"""Stochastic bipartite correlation graph between reference and query embeddings."""

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError

PROB_FLOOR = 1e-12


def edge_probabilities(gamma, refs, queries):
    """RBF kernel ``exp(-gamma * |u_ref - u_query|^2)``.

    ``refs`` is ``(..., n_ref, d)`` and ``queries`` is ``(..., n_query, d)``;
    the result is ``(..., n_ref, n_query)``. ``gamma`` may be a float or a
    scalar tensor.
    """
    refs, queries = ad.constant(refs), ad.constant(queries)
    if refs.shape[-1] != queries.shape[-1]:
        raise ContractError(
            f"embedding dimensions differ: {refs.shape[-1]} vs {queries.shape[-1]}")
    gamma = ad.constant(gamma)
    if np.any(gamma.data <= 0):
        raise ContractError("kernel bandwidth must be positive")
    return ad.exp(-(gamma * ad.sq_euclid_dist(refs, queries)))


def sample_hard(probs, rng):
    """Independent Bernoulli draw per edge, as a float array of 0s and 1s."""
    p = np.asarray(getattr(probs, "data", probs), dtype=np.float64)
    return (rng.random(p.shape) < p).astype(np.float64)


def logistic_noise(shape, rng):
    u = rng.random(shape)
    # rng.random lies in [0, 1); keep both logs finite
    u = np.clip(u, 1e-300, 1.0 - 2.0 ** -53)
    return np.log(u) - np.log1p(-u)


def sample_relaxed(probs, temperature, rng=None, noise=None):
    """Binary-concrete relaxation ``sigmoid((logit p + L) / temperature)``.

    ``L`` is standard logistic noise, drawn from ``rng`` unless ``noise`` is
    given. Probabilities are clamped to ``[1e-12, 1 - 1e-12]`` before the logit.
    """
    if temperature <= 0:
        raise ContractError("temperature must be positive")
    probs = ad.constant(probs)
    if noise is None:
        noise = logistic_noise(probs.shape, rng)
    p = ad.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    logits = ad.log(p) - ad.log(1.0 - p)
    return ad.sigmoid((logits + noise) * (1.0 / temperature))
