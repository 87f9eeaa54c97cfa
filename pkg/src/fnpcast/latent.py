"""Local and global latents, the predictive head, and the variational posterior."""

import numpy as np

from . import autodiff as ad
from .encoder import DiagonalGaussian, linear, mlp, set_attention
from .exceptions import ContractError

LOG_2PI = float(np.log(2.0 * np.pi))


def local_latent(P, adjacency, refs):
    """Per-query Gaussian averaged over its parent references.

    ``adjacency`` is ``(..., n_ref, n_query)`` with entry ``[j, i]`` the
    (possibly relaxed) edge from reference ``j`` to query ``i``; ``refs`` is
    ``(..., n_ref, d)``. Mean and log-variance are the edge-weighted averages
    of ``h1(u_ref)`` and ``h2(u_ref)``. A query without parents gets N(0, I).
    """
    A = ad.constant(adjacency)
    refs = ad.constant(refs)
    if A.shape[-2] != refs.shape[-2]:
        raise ContractError(
            f"adjacency has {A.shape[-2]} reference rows but {refs.shape[-2]} references given")
    A_t = ad.swapaxes(A)
    counts = ad.tsum(A_t, axis=-1, keepdims=True)
    # parentless queries have zero numerators; dividing by 1 keeps them at 0
    denom = counts + (counts.data == 0).astype(np.float64)
    mean = ad.matmul(A_t, linear(P, "h1", refs)) / denom
    logvar = ad.matmul(A_t, linear(P, "h2", refs)) / denom
    return DiagonalGaussian(mean, logvar)


def global_latent(P, refs):
    """Attention readout over references: ``(beta, v)``."""
    refs = ad.constant(refs)
    if refs.ndim < 2 or refs.shape[-2] < 1:
        raise ContractError("global latent needs at least one reference")
    return set_attention(P, "gattn", refs)


def predict(P, z, v, u):
    """Gaussian over the scalar target from ``concat(z, v, u)``."""
    e = ad.concat([z, v, u])
    mean = mlp(P, "d1", e, 2)
    logvar = mlp(P, "d2", e, 2)
    lead = mean.shape[:-1]
    return DiagonalGaussian(ad.reshape(mean, lead), ad.reshape(logvar, lead))


def posterior_q(P, h_bar):
    """Variational Gaussian over z from a query's attention summary."""
    out = linear(P, "q", h_bar)
    d = out.shape[-1] // 2
    return DiagonalGaussian(out[..., :d], out[..., d:])


def gaussian_log_density(g, x, event_dims=1):
    """Log-density of ``x`` under a diagonal Gaussian.

    The last ``event_dims`` axes are summed (0 gives elementwise densities).
    """
    x = ad.constant(x)
    if x.shape != g.mean.shape:
        raise ContractError(f"point shape {x.shape} != Gaussian shape {g.mean.shape}")
    diff = x - g.mean
    terms = -0.5 * LOG_2PI - 0.5 * g.logvar - 0.5 * diff * diff * ad.exp(-g.logvar)
    if event_dims == 0:
        return terms
    return ad.tsum(terms, axis=tuple(range(-event_dims, 0)))
