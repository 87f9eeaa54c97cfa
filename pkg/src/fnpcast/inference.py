"""Monte-Carlo predictive distributions and autoregressive rollout."""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import ndtr

from . import autodiff as ad
from .encoder import encode
from .exceptions import ContractError
from .graph import edge_probabilities
from .latent import global_latent, local_latent, predict
from .model import as_constants

DEFAULT_LEVELS = (0.5, 0.8, 0.9, 0.95)
MIN_STABLE_DRAWS = 100
# rows per vectorized sampling pass; fixed so results do not depend on S
CHUNK = 2048


@dataclass
class PredictiveDistribution:
    """Equally weighted mixture of scalar Gaussians plus realized draws."""

    means: np.ndarray
    logvars: np.ndarray
    draws: Optional[np.ndarray] = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1)
        self.logvars = np.asarray(self.logvars, dtype=np.float64).reshape(-1)
        if self.means.size < 1 or self.means.shape != self.logvars.shape:
            raise ContractError("a predictive distribution needs S >= 1 matching components")
        if self.draws is not None:
            self.draws = np.asarray(self.draws, dtype=np.float64).reshape(-1)

    @property
    def n_components(self):
        return self.means.size

    @property
    def stds(self):
        return np.exp(0.5 * self.logvars)

    def mean(self):
        return float(self.means.mean())

    def variance(self):
        m = self.means
        return float(np.mean(np.exp(self.logvars) + m * m) - m.mean() ** 2)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = (x[..., None] - self.means) / self.stds
        return ndtr(z).mean(axis=-1)

    def mass(self, lo, hi):
        """Probability of ``[lo, hi]`` under the mixture, per component then averaged."""
        sd = self.stds
        return float(np.mean(ndtr((hi - self.means) / sd) - ndtr((lo - self.means) / sd)))

    def sample(self, n, rng):
        idx = rng.integers(self.n_components, size=n)
        return self.means[idx] + self.stds[idx] * rng.standard_normal(n)


class Interval(NamedTuple):
    lo: float
    hi: float
    low_sample: bool


def interval(dist, confidence):
    """Equal-tailed interval from the realized draws.

    ``low_sample`` is set when fewer than 100 draws back the quantiles.
    """
    if not 0 < confidence < 1:
        raise ContractError("confidence must lie strictly between 0 and 1")
    if dist.draws is None or dist.draws.size == 0:
        raise ContractError("distribution carries no draws")
    lo, hi = np.quantile(dist.draws, [(1 - confidence) / 2, (1 + confidence) / 2])
    return Interval(float(lo), float(hi), dist.draws.size < MIN_STABLE_DRAWS)


@dataclass
class ForecastSummary:
    point: float
    intervals: dict = field(default_factory=dict)
    n_components: int = 0

    def to_dict(self):
        return {
            "point": self.point,
            "intervals": {f"{c:g}": [lo, hi] for c, (lo, hi) in self.intervals.items()},
            "n_components": self.n_components,
        }


def summarize(dist, levels=DEFAULT_LEVELS):
    intervals = {}
    for c in sorted(levels):
        iv = interval(dist, c)
        intervals[c] = (iv.lo, iv.hi)
    return ForecastSummary(dist.mean(), intervals, dist.n_components)


class _Encoded(NamedTuple):
    mean: np.ndarray
    logvar: np.ndarray


def encode_arrays(P, sequences):
    """Embedding mean and log-variance arrays for sequences, in chunks."""
    means, logvars = [], []
    for i in range(0, len(sequences), CHUNK):
        g, _ = encode(P, sequences[i:i + CHUNK])
        means.append(g.mean.data)
        logvars.append(g.logvar.data)
    return _Encoded(np.concatenate(means), np.concatenate(logvars))


def sample_components(P, refs, queries, rng, hp):
    """One predictive Gaussian per query row, marginalizing one latent sample each.

    ``refs`` encodes all references, ``queries`` has one row per requested
    component. Per row: sample reference and query embeddings, a hard parent
    vector from the kernel probabilities, ``z`` from its local prior, and the
    global readout ``v``. Returns model-unit ``(means, logvars)``.
    """
    n_ref, dim = refs.mean.shape
    gamma = float(np.exp(P["log_gamma"].data))
    ref_sd = np.exp(0.5 * refs.logvar)
    means, logvars = [], []
    for start in range(0, len(queries.mean), CHUNK):
        q_mean = queries.mean[start:start + CHUNK]
        q_logvar = queries.logvar[start:start + CHUNK]
        S = len(q_mean)
        eps_ref = rng.standard_normal((S, n_ref, dim))
        eps_q = rng.standard_normal((S, dim))
        unif = rng.random((S, n_ref))
        eps_z = rng.standard_normal((S, dim))
        if hp.deterministic_encoder:
            u_ref = np.broadcast_to(refs.mean, (S, n_ref, dim))
            u_q = q_mean
        else:
            u_ref = refs.mean + ref_sd * eps_ref
            u_q = q_mean + np.exp(0.5 * q_logvar) * eps_q
        if hp.no_local:
            z = np.zeros((S, dim))
        else:
            probs = edge_probabilities(gamma, u_ref, u_q[:, None, :]).data
            adjacency = (unif[:, :, None] < probs).astype(np.float64)
            prior = local_latent(P, adjacency, u_ref)
            z = (prior.mean.data + np.exp(0.5 * prior.logvar.data) * eps_z[:, None, :])[:, 0, :]
        if hp.no_global:
            v = np.zeros((S, dim))
        else:
            v = global_latent(P, u_ref)[1].data
        out = predict(P, ad.constant(z), ad.constant(v), ad.constant(u_q))
        means.append(out.mean.data)
        logvars.append(out.logvar.data)
    return np.concatenate(means), np.concatenate(logvars)


def _to_raw(model, means, logvars):
    return means * model.scale + model.loc, logvars + 2.0 * np.log(model.scale)


def _draw(means, logvars, per_component, rng):
    eps = rng.standard_normal((means.size, per_component))
    return (means[:, None] + np.exp(0.5 * logvars)[:, None] * eps).reshape(-1)


def forecast_from_embedding(model, query, n_samples, rng, draws_per_component):
    """Predictive mixture for a query whose embedding ``(mean, logvar)`` is given."""
    if n_samples < 1:
        raise ContractError("need at least one Monte-Carlo sample")
    P = as_constants(model.params)
    refs = encode_arrays(P, model.scaled_references())
    q_mean = np.broadcast_to(np.asarray(query[0], dtype=np.float64), (n_samples, refs.mean.shape[1]))
    q_logvar = np.broadcast_to(np.asarray(query[1], dtype=np.float64), q_mean.shape)
    means, logvars = sample_components(P, refs, _Encoded(q_mean, q_logvar), rng, model.hyperparams)
    means, logvars = _to_raw(model, means, logvars)
    return PredictiveDistribution(means, logvars, _draw(means, logvars, draws_per_component, rng))


def embed_query(model, prefix):
    """Embedding ``(mean, logvar)`` of one raw-unit prefix, each of shape ``(dim,)``."""
    prefix = _check_prefix(prefix)
    enc = encode_arrays(as_constants(model.params), [model.to_model_units(prefix)])
    return enc.mean[0], enc.logvar[0]


def _check_prefix(prefix):
    prefix = np.asarray(prefix, dtype=np.float64).reshape(-1)
    if prefix.size == 0:
        raise ContractError("prefix must be nonempty")
    if not np.isfinite(prefix).all():
        raise ContractError("prefix contains non-finite values")
    return prefix


def forecast(model, prefix, n_samples=None, rng=None, draws_per_component=None):
    """Predictive distribution for the value ``horizon`` weeks after ``prefix``.

    Builds an ``n_samples``-component uniform Gaussian mixture with
    ``draws_per_component`` realized draws per component.
    """
    hp = model.hyperparams
    n_samples = hp.n_samples if n_samples is None else n_samples
    draws_per_component = hp.draws_per_component if draws_per_component is None else draws_per_component
    rng = rng if rng is not None else np.random.default_rng(hp.seed)
    return forecast_from_embedding(model, embed_query(model, prefix), n_samples, rng,
                                   draws_per_component)


def autoregressive_forecast(model, prefix, k, n_candidates, rng):
    """Roll a one-step model forward ``k`` weeks by resampling candidate paths.

    Candidate set ``Z_0`` holds the prefix. Step ``i`` draws ``n_candidates``
    sequences uniformly from ``Z_{i-1}``, samples one model output for each
    and appends it, forming ``Z_i``. The result keeps the final step's
    component Gaussians and the last elements of ``Z_k`` as draws.
    """
    if k < 1 or n_candidates < 1:
        raise ContractError("k and the candidate count must be at least 1")
    prefix = _check_prefix(prefix)
    hp = model.hyperparams
    P = as_constants(model.params)
    refs = encode_arrays(P, model.scaled_references())
    candidates = prefix[None, :]
    for _ in range(k):
        if len(candidates) == 1:
            picked = np.repeat(candidates, n_candidates, axis=0)
            enc = encode_arrays(P, [model.to_model_units(candidates[0])])
            queries = _Encoded(np.repeat(enc.mean, n_candidates, axis=0),
                               np.repeat(enc.logvar, n_candidates, axis=0))
        else:
            picked = candidates[rng.integers(len(candidates), size=n_candidates)]
            queries = encode_arrays(P, list(model.to_model_units(picked)))
        means, logvars = _to_raw(model, *sample_components(P, refs, queries, rng, hp))
        y = _draw(means, logvars, 1, rng)
        candidates = np.concatenate([picked, y[:, None]], axis=1)
    return PredictiveDistribution(means, logvars, candidates[:, -1].copy())


def check_draw_count(dist):
    if dist.draws is not None and dist.draws.size < MIN_STABLE_DRAWS:
        warnings.warn(f"only {dist.draws.size} draws back the interval estimates", stacklevel=2)
