"""Parameter layout, hyperparameters, and the fitted-model container."""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError

HIDDEN = 50


@dataclass(frozen=True)
class Hyperparams:
    horizon: int = 1
    min_prefix: int = 1
    learning_rate: float = 1e-4
    max_epochs: int = 3000
    patience: int = 300
    validation_fraction: float = 0.05
    batch_size: int = 0  # 0 means full batch
    gamma_init: float = 1.0
    learn_gamma: bool = True
    temperature: float = 0.3
    n_samples: int = 2000
    draws_per_component: int = 10
    standardize: bool = False
    no_local: bool = False
    no_global: bool = False
    deterministic_encoder: bool = False
    hidden_size: int = HIDDEN
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if not 0 < self.validation_fraction < 0.5:
            raise ContractError("validation_fraction must lie in (0, 0.5)")
        if self.horizon < 1 or self.min_prefix < 1:
            raise ContractError("horizon and min_prefix must be at least 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise ContractError("max_epochs and patience must be at least 1")
        if self.gamma_init <= 0 or self.temperature <= 0:
            raise ContractError("gamma_init and temperature must be positive")
        if self.n_samples < 1 or self.draws_per_component < 1:
            raise ContractError("sample counts must be at least 1")
        if self.batch_size < 0 or self.hidden_size < 1:
            raise ContractError("batch_size must be >= 0 and hidden_size >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


def param_shapes(hidden=HIDDEN):
    """Ordered ``name -> shape`` of every model parameter.

    Embedding, local-latent and global-latent widths equal ``hidden``.
    """
    H = D = hidden
    shapes = {
        "gru.W_x": (1, 3 * H),
        "gru.W_hzr": (H, 2 * H),
        "gru.W_hn": (H, H),
        "gru.b": (3 * H,),
    }
    for name in ("attn.q", "attn.k", "h1", "h2", "gattn.q", "gattn.k"):
        shapes[name + ".W"] = (H, H)
        shapes[name + ".b"] = (H,)
    for g in ("g1", "g2"):
        for i in range(3):
            shapes[f"{g}.{i}.W"] = (H, H)
            shapes[f"{g}.{i}.b"] = (H,)
    for d in ("d1", "d2"):
        shapes[f"{d}.0.W"] = (3 * D, H)
        shapes[f"{d}.0.b"] = (H,)
        shapes[f"{d}.1.W"] = (H, 1)
        shapes[f"{d}.1.b"] = (1,)
    shapes["q.W"] = (H, 2 * D)
    shapes["q.b"] = (2 * D,)
    shapes["log_gamma"] = ()
    return shapes


def init_params(rng, hidden=HIDDEN, gamma=1.0):
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialization.

    GRU weights and biases all use ``fan_in = hidden``; every other layer uses
    its input width. The kernel bandwidth starts at ``gamma``.
    """
    params = {}
    fan_in = {}
    for name, shape in param_shapes(hidden).items():
        layer = name.rsplit(".", 1)[0]
        if name.startswith("gru."):
            fan_in[layer] = hidden
        elif name.endswith(".W"):
            fan_in[layer] = shape[0]
    for name, shape in param_shapes(hidden).items():
        if name == "log_gamma":
            params[name] = np.array(np.log(gamma))
            continue
        bound = 1.0 / np.sqrt(fan_in[name.rsplit(".", 1)[0]])
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(hidden=HIDDEN, gamma=1.0):
    """All-zero weights; the predictive head then emits N(0, 1)."""
    params = {name: np.zeros(shape) for name, shape in param_shapes(hidden).items()}
    params["log_gamma"] = np.array(np.log(gamma))
    return params


def as_constants(params):
    return {name: ad.constant(value) for name, value in params.items()}


def watch_params(tape, params):
    return {name: tape.watch(value) for name, value in params.items()}


@dataclass
class FittedModel:
    """Everything a forecast needs: parameters, references, and data scaling.

    ``references`` hold the full training seasons in raw units; ``loc`` and
    ``scale`` map raw values into model units (identity unless standardizing).
    """

    params: dict
    hyperparams: Hyperparams
    references: list
    reference_ids: list = field(default_factory=list)
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        expected = param_shapes(self.hyperparams.hidden_size)
        if set(self.params) != set(expected):
            missing = set(expected) - set(self.params)
            extra = set(self.params) - set(expected)
            raise ContractError(f"parameter set mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
        for name, shape in expected.items():
            if np.shape(self.params[name]) != shape:
                raise ContractError(f"parameter {name} has shape {np.shape(self.params[name])}, expected {shape}")
        if not self.references:
            raise ContractError("a fitted model needs at least one reference sequence")
        if self.scale <= 0:
            raise ContractError("scale must be positive")

    def to_model_units(self, x):
        return (np.asarray(x, dtype=np.float64) - self.loc) / self.scale

    def scaled_references(self):
        return [self.to_model_units(r) for r in self.references]
