"""Training set assembly, the single-sample ELBO, Adam, and the training loop."""

import contextlib
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .encoder import embed, encode_all_prefixes, pad_sequences, reparameterize
from .exceptions import ContractError, NumericDomainError, TrainingDivergedError
from .graph import edge_probabilities, logistic_noise, sample_relaxed
from .latent import gaussian_log_density, global_latent, local_latent, posterior_q, predict
from .model import FittedModel, Hyperparams, as_constants, init_params, watch_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingExample:
    season_index: int
    season_id: str
    t: int
    horizon: int
    prefix: np.ndarray
    target: float


def season_values(season):
    """``(season_id, values)`` from a SeasonSeries-like object or a plain array."""
    values = getattr(season, "values", season)
    season_id = getattr(season, "season_id", None)
    return season_id, np.asarray(values, dtype=np.float64).reshape(-1)


def build_datasets(seasons, horizon, min_prefix=1):
    """All ``(prefix, k-ahead target)`` pairs, plus the full seasons as references.

    Every prefix length ``t`` with ``min_prefix <= t <= T - horizon`` is used.
    """
    if not seasons:
        raise ContractError("no seasons given")
    examples, references = [], []
    for i, season in enumerate(seasons):
        sid, values = season_values(season)
        sid = sid if sid is not None else str(i)
        if len(values) < min_prefix + horizon:
            raise ContractError(
                f"season {sid} has {len(values)} weeks; need at least {min_prefix + horizon}")
        references.append(values)
        for t in range(min_prefix, len(values) - horizon + 1):
            examples.append(TrainingExample(i, sid, t, horizon, values[:t], float(values[t + horizon - 1])))
    if not examples:
        raise ContractError("training set is empty")
    return examples, references


@dataclass
class PackedData:
    """Training data laid out for one encoder pass over the full seasons.

    A prefix of length ``t`` of season ``s`` is the row ``(s, t - 1)`` of the
    all-prefix summaries, so query and reference sequences share one GRU run.
    """

    X: np.ndarray
    lengths: np.ndarray
    season_idx: np.ndarray
    t_idx: np.ndarray
    y: np.ndarray

    @classmethod
    def from_examples(cls, examples, references):
        X, lengths = pad_sequences(references)
        return cls(
            X=X,
            lengths=lengths,
            season_idx=np.array([e.season_index for e in examples]),
            t_idx=np.array([e.t - 1 for e in examples]),
            y=np.array([e.target for e in examples]),
        )

    def scaled(self, loc, scale):
        return PackedData((self.X - loc) / scale, self.lengths, self.season_idx, self.t_idx,
                          (self.y - loc) / scale)

    def subset(self, rows):
        rows = np.asarray(rows)
        return PackedData(self.X, self.lengths, self.season_idx[rows], self.t_idx[rows], self.y[rows])


@contextlib.contextmanager
def _stage(name):
    try:
        yield
    except NumericDomainError as err:
        raise NumericDomainError(f"{name} term: {err}") from err


def draw_noise(data, hidden, rng):
    """All random numbers of one ELBO sample, in a fixed draw order."""
    n_ref, n_query = len(data.lengths), len(data.y)
    return {
        "u_ref": rng.standard_normal((n_ref, hidden)),
        "u_query": rng.standard_normal((n_query, hidden)),
        "graph": logistic_noise((n_ref, n_query), rng),
        "z": rng.standard_normal((n_query, hidden)),
    }


def elbo_terms(P, data, noise, hp):
    """Per-example negated ELBO, single Monte-Carlo sample.

    Returns ``(loss, pred_mean)`` where ``loss`` is an ``(n_query,)`` tensor of
    ``-(log p(y|z,v,u) + log p(z|G,U_R) - log q(z|x))`` and ``pred_mean`` the
    predictive means as an array.
    """
    n_ref, n_query = len(data.lengths), len(data.y)
    with _stage("encoder"):
        h_all = encode_all_prefixes(P, data.X)
        rows = np.concatenate([np.arange(n_ref), data.season_idx])
        cols = np.concatenate([data.lengths - 1, data.t_idx])
        h = h_all[rows, cols]
        g = embed(P, h)
        if hp.deterministic_encoder:
            u = g.mean
        else:
            u = reparameterize(g, np.concatenate([noise["u_ref"], noise["u_query"]]))
        u_ref, u_query = u[:n_ref], u[n_ref:]
        h_query = h[n_ref:]

    hidden = u.shape[-1]
    if hp.no_local:
        z = ad.constant(np.zeros((n_query, hidden)))
        kl_part = 0.0
    else:
        with _stage("graph"):
            gamma = ad.exp(P["log_gamma"]) if hp.learn_gamma else float(np.exp(P["log_gamma"].data))
            probs = edge_probabilities(gamma, u_ref, u_query)
            adjacency = sample_relaxed(probs, hp.temperature, noise=noise["graph"])
        with _stage("local latent"):
            prior = local_latent(P, adjacency, u_ref)
            q = posterior_q(P, h_query)
            z = reparameterize(q, noise["z"])
            kl_part = gaussian_log_density(prior, z) - gaussian_log_density(q, z)

    with _stage("global latent"):
        if hp.no_global:
            v = ad.constant(np.zeros((n_query, hidden)))
        else:
            _, v_shared = global_latent(P, u_ref)
            v = ad.constant(np.zeros((n_query, hidden))) + v_shared
    with _stage("likelihood"):
        out = predict(P, z, v, u_query)
        loglik = gaussian_log_density(out, data.y, event_dims=0)
        loss = -(loglik + kl_part)
    return loss, out.mean.data


def elbo_step(params, data, rng, hp):
    """Mean negated ELBO over the batch ``data`` and its gradients.

    Returns ``(loss_value, grads, pred_mean)``. With ``learn_gamma`` off the
    bandwidth gradient is zero.
    """
    if len(data.y) == 0:
        raise ContractError("empty batch")
    tape = Tape()
    P = watch_params(tape, params)
    per_example, pred_mean = elbo_terms(P, data, draw_noise(data, hp.hidden_size, rng), hp)
    loss = ad.mean(per_example)
    names = list(P)
    grads = dict(zip(names, tape.gradients(loss, [P[n] for n in names])))
    return loss.item(), grads, pred_mean


def elbo_loss(params, data, noise, hp):
    """Mean negated ELBO without gradients, for fixed ``noise``."""
    per_example, _ = elbo_terms(as_constants(params), data, noise, hp)
    return float(per_example.data.mean())


class Adam:
    """Adam with bias correction; ``step`` returns new arrays, never mutating inputs."""

    def __init__(self, params, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, frozen=()):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.frozen = set(frozen)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = {}
        for k, p in params.items():
            g = grads[k]
            if np.shape(g) != np.shape(p):
                raise ContractError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)} for {k}")
            if k in self.frozen:
                out[k] = p
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            out[k] = p - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return out


def adam_update(optimizer, params, grads):
    return optimizer.step(params, grads)


def validation_split(n, fraction, rng):
    """Seeded disjoint ``(train_rows, val_rows)``; at least one row in each."""
    if n < 2:
        raise ContractError("need at least two training examples to hold out a validation set")
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(seasons, hp=None, callback=None):
    """Fit the model by Adam on the negated ELBO with early stopping.

    Returns ``(FittedModel, log)`` where ``log`` has one dict per epoch with
    keys ``epoch, train_loss, val_loss, train_rmse``. The returned parameters
    are those with the lowest validation loss.
    """
    hp = hp or Hyperparams()
    examples, references = build_datasets(seasons, hp.horizon, hp.min_prefix)
    ids = [season_values(s)[0] or str(i) for i, s in enumerate(seasons)]
    seed_init, seed_split, seed_val, seed_noise = np.random.SeedSequence(hp.seed).spawn(4)

    if hp.standardize:
        flat = np.concatenate(references)
        loc, scale = float(flat.mean()), float(flat.std()) or 1.0
    else:
        loc, scale = 0.0, 1.0
    data = PackedData.from_examples(examples, references).scaled(loc, scale)

    params = init_params(np.random.default_rng(seed_init), hp.hidden_size, hp.gamma_init)
    train_rows, val_rows = validation_split(len(examples), hp.validation_fraction,
                                            np.random.default_rng(seed_split))
    val_data = data.subset(val_rows)
    # one frozen noise draw makes validation losses comparable across epochs
    val_noise = draw_noise(val_data, hp.hidden_size, np.random.default_rng(seed_val))
    rng = np.random.default_rng(seed_noise)
    opt = Adam(params, hp.learning_rate, frozen=() if hp.learn_gamma else ("log_gamma",))

    best_params, best_val, since_best = params, np.inf, 0
    log = []
    for epoch in range(1, hp.max_epochs + 1):
        try:
            val_loss = elbo_loss(params, val_data, val_noise, hp)
        except NumericDomainError as err:
            raise TrainingDivergedError(epoch, str(err)) from err
        if val_loss < best_val:
            best_val, best_params, since_best = val_loss, params, 0
        else:
            since_best += 1
            if since_best > hp.patience:
                logger.info("early stop at epoch %d (best val %.4f)", epoch, best_val)
                break
        if hp.batch_size:
            order = rng.permutation(train_rows)
            batches = [np.sort(order[i:i + hp.batch_size]) for i in range(0, len(order), hp.batch_size)]
        else:
            batches = [train_rows]
        losses, sq_err = [], []
        for rows in batches:
            batch = data.subset(rows)
            try:
                loss, grads, pred = elbo_step(params, batch, rng, hp)
            except NumericDomainError as err:
                raise TrainingDivergedError(epoch, str(err)) from err
            losses.append(loss * len(rows))
            sq_err.append(((pred - batch.y) * scale) ** 2)
            params = opt.step(params, grads)
        log.append({
            "epoch": epoch,
            "train_loss": float(np.sum(losses) / len(train_rows)),
            "val_loss": val_loss,
            "train_rmse": float(np.sqrt(np.concatenate(sq_err).mean())),
        })
        if callback is not None:
            callback(log[-1])

    model = FittedModel(params=best_params, hyperparams=hp, references=references,
                        reference_ids=ids, loc=loc, scale=scale)
    return model, log
