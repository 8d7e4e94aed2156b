"""Subject-specific hyperconnectome autoencoder with adversarial
regularization.

Encoder: two hypergraph convolutions, ``Y1 = relu(P X T1)`` and
``Z = P Y1 T2`` where ``P`` is the propagation operator and ``X`` the
stacked connectivity features. Decoder: ``sigmoid(Z W)`` read as Bernoulli
probabilities of the incidence entries. A small MLP discriminator scores
latent rows against samples from a prior.

The architecture is fixed, so gradients are accumulated in reverse by
hand-written layer adjoints; ``numerics.grad_check`` verifies them.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numerics as nx
from .data import Cohort, MultiViewConnectome
from .errors import HyperconnectomeError, ParameterError, ShapeError, TrainingError
from .hypergraph import Hyperconnectome, StackedFeatures, build_hyperconnectome, propagation_operator

PROB_CLAMP = 1e-7
PRIORS = ("projection", "gaussian")


@dataclass(frozen=True)
class HcaeConfig:
    hidden_dim: int = 32
    latent_dim: int = 16
    disc_hidden_dims: Tuple[int, ...] = (64, 16)
    epochs: int = 30
    lr: float = 0.01
    disc_lr: float = 0.001
    seed: int = 0
    k: int = 5
    prior: str = "projection"
    recon_weight: float = 1.0
    adv_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "disc_hidden_dims", tuple(int(d) for d in self.disc_hidden_dims))
        dims = [self.hidden_dim, self.latent_dim, *self.disc_hidden_dims]
        if any(int(d) != d or d < 1 for d in dims):
            raise ParameterError(f"all layer sizes must be >= 1, got {dims}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0 or self.disc_lr <= 0:
            raise ParameterError("learning rates must be positive")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.prior not in PRIORS:
            raise ParameterError(f"prior must be one of {PRIORS}, got {self.prior!r}")
        if self.recon_weight < 0 or self.adv_weight < 0:
            raise ParameterError("loss weights must be non-negative")


@dataclass
class HcaeParams:
    theta1: np.ndarray
    theta2: np.ndarray
    decoder_w: np.ndarray
    disc: List[Tuple[np.ndarray, np.ndarray]]

    def generator_dict(self) -> Dict[str, np.ndarray]:
        return {"theta1": self.theta1, "theta2": self.theta2, "decoder_w": self.decoder_w}

    def discriminator_dict(self) -> Dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(self.disc):
            out[f"disc_w{i}"] = w
            out[f"disc_b{i}"] = b
        return out

    def with_generator(self, d: Dict[str, np.ndarray]) -> "HcaeParams":
        return replace(self, theta1=d["theta1"], theta2=d["theta2"], decoder_w=d["decoder_w"])

    def with_discriminator(self, d: Dict[str, np.ndarray]) -> "HcaeParams":
        layers = [(d[f"disc_w{i}"], d[f"disc_b{i}"]) for i in range(len(self.disc))]
        return replace(self, disc=layers)

    @property
    def latent_dim(self) -> int:
        return self.theta2.shape[1]


@dataclass(frozen=True)
class Embedding:
    z: np.ndarray
    subject_id: str
    recon_error: float = float("nan")

    @property
    def flattened(self) -> np.ndarray:
        return np.ascontiguousarray(self.z).reshape(-1)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    recon_loss: float
    disc_loss: float
    gen_loss: float


@dataclass
class TrainTrace:
    records: List[EpochRecord] = field(default_factory=list)
    final_recon_loss: float = float("nan")

    @property
    def initial_recon_loss(self) -> float:
        return self.records[0].recon_loss

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "recon_loss", "disc_loss", "gen_loss"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.recon_loss), repr(r.disc_loss), repr(r.gen_loss)])
        return buf.getvalue()


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(n_nodes: int, n_views: int, cfg: HcaeConfig, seed: Optional[int] = None) -> HcaeParams:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    d_in = n_nodes * n_views
    theta1 = _glorot(rng, d_in, cfg.hidden_dim)
    theta2 = _glorot(rng, cfg.hidden_dim, cfg.latent_dim)
    decoder_w = _glorot(rng, cfg.latent_dim, d_in)
    sizes = [cfg.latent_dim, *cfg.disc_hidden_dims, 1]
    disc = [(_glorot(rng, a, b), np.zeros((1, b))) for a, b in zip(sizes[:-1], sizes[1:])]
    return HcaeParams(theta1, theta2, decoder_w, disc)


# --------------------------------------------------------------------------
# forward pieces
# --------------------------------------------------------------------------


def _delta_of(h: Hyperconnectome, delta: Optional[np.ndarray]) -> np.ndarray:
    return propagation_operator(h) if delta is None else delta


def encode(
    features: StackedFeatures,
    h: Hyperconnectome,
    params: HcaeParams,
    delta: Optional[np.ndarray] = None,
    subject_id: str = "",
) -> Embedding:
    d = _delta_of(h, delta)
    y1 = nx.relu(nx.matmul(nx.matmul(d, features.values), params.theta1))
    z = nx.matmul(nx.matmul(d, y1), params.theta2)
    return Embedding(z, subject_id)


def decode(z, params: HcaeParams) -> np.ndarray:
    z = z.z if isinstance(z, Embedding) else z
    return nx.sigmoid(nx.matmul(z, params.decoder_w))


def reconstruction_loss(probs: np.ndarray, h) -> float:
    """Mean binary cross-entropy against the incidence, probabilities clamped
    to ``[1e-7, 1 - 1e-7]``."""
    target = h.incidence if isinstance(h, Hyperconnectome) else np.asarray(h, dtype=np.float64)
    if probs.shape != target.shape:
        raise ShapeError(f"reconstruction shape {probs.shape} != incidence shape {target.shape}")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def _mlp_forward(x: np.ndarray, layers) -> Tuple[np.ndarray, list]:
    if x.shape[1] != layers[0][0].shape[0]:
        raise ShapeError(f"discriminator expects {layers[0][0].shape[0]} columns, got {x.shape[1]}")
    cache = []
    a = x
    for i, (w, b) in enumerate(layers):
        pre = a @ w + b
        cache.append((a, pre))
        a = pre if i == len(layers) - 1 else nx.relu(pre)
    return a, cache


def _mlp_backward(g_out: np.ndarray, layers, cache) -> Tuple[list, np.ndarray]:
    grads = [None] * len(layers)
    g = g_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_in, pre = cache[i]
        if i != len(layers) - 1:
            g = g * (pre > 0)
        grads[i] = (a_in.T @ g, g.sum(axis=0, keepdims=True))
        g = g @ w.T
    return grads, g


def discriminator_forward(samples: np.ndarray, params: HcaeParams) -> np.ndarray:
    """One logit per row."""
    logits, _ = _mlp_forward(nx.as_matrix(samples), params.disc)
    return logits[:, 0]


def adversarial_losses(z, real_samples: np.ndarray, params: HcaeParams) -> Tuple[float, float]:
    """``(disc_loss, gen_loss)``.

    disc_loss = -1/2 mean log D(real) - 1/2 mean log(1 - D(z));
    gen_loss = -mean log D(z). Logs of sigmoids are taken in logit space
    (softplus), so they stay finite for any finite logit.
    """
    z = z.z if isinstance(z, Embedding) else np.asarray(z)
    real = np.asarray(real_samples, dtype=np.float64)
    if z.size == 0 or real.size == 0:
        raise ParameterError("adversarial losses need non-empty real and generated samples")
    lr_ = discriminator_forward(real, params)
    lf = discriminator_forward(z, params)
    disc = 0.5 * float(np.mean(nx.softplus(-lr_))) + 0.5 * float(np.mean(nx.softplus(lf)))
    gen = float(np.mean(nx.softplus(-lf)))
    return disc, gen


# --------------------------------------------------------------------------
# objectives with gradients
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SubjectProblem:
    """Fixed per-subject tensors: propagation operator, features, target
    incidence and the propagated features ``P X`` reused by layer one."""

    delta: np.ndarray
    features: np.ndarray
    incidence: np.ndarray
    propagated: np.ndarray

    @classmethod
    def build(cls, h: Hyperconnectome, features: StackedFeatures) -> "SubjectProblem":
        d = propagation_operator(h)
        return cls(d, features.values, h.incidence, d @ features.values)


def generator_objective(
    gen: Dict[str, np.ndarray],
    disc_layers,
    problem: SubjectProblem,
    recon_weight: float = 1.0,
    adv_weight: float = 1.0,
) -> Tuple[float, Dict[str, np.ndarray], dict]:
    """``recon_weight * recon + adv_weight * gen_loss`` and its gradient with
    respect to ``theta1``, ``theta2`` and ``decoder_w``."""
    t1, t2, w = gen["theta1"], gen["theta2"], gen["decoder_w"]
    d, pxf, target = problem.delta, problem.propagated, problem.incidence

    a1 = nx.matmul(pxf, t1)
    y1 = nx.relu(a1)
    b = d @ y1
    z = nx.matmul(b, t2)
    logits = nx.matmul(z, w)
    probs = nx.sigmoid(logits)

    n_out = target.size
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    recon = float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))
    inside = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
    g_logits = np.where(inside, (probs - target) / n_out, 0.0) * recon_weight

    d_logit, cache = _mlp_forward(z, disc_layers)
    rows = z.shape[0]
    gen_loss = float(np.mean(nx.softplus(-d_logit)))
    g_dlogit = (nx.sigmoid(d_logit) - 1.0) / rows * adv_weight
    _, g_z_adv = _mlp_backward(g_dlogit, disc_layers, cache)

    g_w = z.T @ g_logits
    g_z = g_logits @ w.T + g_z_adv
    g_t2 = b.T @ g_z
    g_y1 = d.T @ (g_z @ t2.T)
    g_a1 = g_y1 * (a1 > 0)
    g_t1 = pxf.T @ g_a1

    loss = recon_weight * recon + adv_weight * gen_loss
    grads = {"theta1": g_t1, "theta2": g_t2, "decoder_w": g_w}
    return loss, grads, {"recon": recon, "gen": gen_loss, "z": z}


def discriminator_objective(
    disc: Dict[str, np.ndarray], z: np.ndarray, real: np.ndarray
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Discriminator loss and its gradient; ``z`` is held constant."""
    n_layers = len(disc) // 2
    layers = [(disc[f"disc_w{i}"], disc[f"disc_b{i}"]) for i in range(n_layers)]
    out_r, cache_r = _mlp_forward(real, layers)
    out_f, cache_f = _mlp_forward(z, layers)
    loss = 0.5 * float(np.mean(nx.softplus(-out_r))) + 0.5 * float(np.mean(nx.softplus(out_f)))
    g_r = -0.5 * nx.sigmoid(-out_r) / out_r.shape[0]
    g_f = 0.5 * nx.sigmoid(out_f) / out_f.shape[0]
    grads_r, _ = _mlp_backward(g_r, layers, cache_r)
    grads_f, _ = _mlp_backward(g_f, layers, cache_f)
    grads = {}
    for i in range(n_layers):
        grads[f"disc_w{i}"] = grads_r[i][0] + grads_f[i][0]
        grads[f"disc_b{i}"] = grads_r[i][1] + grads_f[i][1]
    return loss, grads


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def prior_projection(n_in: int, latent_dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(latent_dim), size=(n_in, latent_dim))


def _prior_sampler(problem: SubjectProblem, cfg: HcaeConfig, rng: np.random.Generator):
    rows = problem.features.shape[0]
    if cfg.prior == "projection":
        real = problem.features @ prior_projection(problem.features.shape[1], cfg.latent_dim, rng)
        return lambda: real
    return lambda: rng.standard_normal((rows, cfg.latent_dim))


def _check_finite(epoch: int, **values: float) -> None:
    for name, v in values.items():
        if not np.isfinite(v):
            raise TrainingError(f"non-finite {name} at epoch {epoch}")


def train_subject(
    subject: MultiViewConnectome,
    cfg: HcaeConfig,
    sample_seed: Optional[int] = None,
) -> Tuple[HcaeParams, Embedding, TrainTrace]:
    """Train one autoencoder on one subject.

    Weights are initialized from ``cfg.seed``, so subjects trained with the
    same config start from the same point and their latent coordinates are
    comparable. ``sample_seed`` (default ``cfg.seed``) drives the prior: the
    frozen projection or the Gaussian draws.
    """
    if not isinstance(cfg, HcaeConfig):
        raise ParameterError("cfg must be an HcaeConfig")
    h, features = build_hyperconnectome(subject, cfg.k)
    problem = SubjectProblem.build(h, features)
    params = init_params(subject.n_nodes, subject.n_views, cfg)
    rng = np.random.default_rng(cfg.seed if sample_seed is None else sample_seed)
    draw_real = _prior_sampler(problem, cfg, rng)

    gen_state, disc_state = nx.AdamState(), nx.AdamState()
    trace = TrainTrace()
    for epoch in range(1, cfg.epochs + 1):
        gen = params.generator_dict()
        z = _latent(gen, problem)
        d_loss, d_grads = discriminator_objective(params.discriminator_dict(), z, draw_real())
        _check_finite(epoch, disc_loss=d_loss)
        new_disc, disc_state = nx.adaptive_sgd_step(params.discriminator_dict(), d_grads, disc_state, cfg.disc_lr)
        params = params.with_discriminator(new_disc)

        _, g_grads, parts = generator_objective(
            gen, params.disc, problem, cfg.recon_weight, cfg.adv_weight
        )
        _check_finite(epoch, recon_loss=parts["recon"], gen_loss=parts["gen"])
        try:
            new_gen, gen_state = nx.adaptive_sgd_step(gen, g_grads, gen_state, cfg.lr)
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from None
        params = params.with_generator(new_gen)
        trace.records.append(EpochRecord(epoch, parts["recon"], d_loss, parts["gen"]))

    z = _latent(params.generator_dict(), problem)
    final = reconstruction_loss(decode(z, params), h)
    _check_finite(cfg.epochs, final_recon_loss=final)
    trace.final_recon_loss = final
    if not np.all(np.isfinite(z)):
        raise TrainingError(f"non-finite embedding after epoch {cfg.epochs}")
    z.setflags(write=False)
    return params, Embedding(z, subject.subject_id, final), trace


def _latent(gen: Dict[str, np.ndarray], problem: SubjectProblem) -> np.ndarray:
    y1 = nx.relu(problem.propagated @ gen["theta1"])
    return problem.delta @ y1 @ gen["theta2"]


def subject_seed(seed: int, index: int) -> int:
    """Per-subject seed derived from the top-level seed and subject index."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def embed_cohort(
    cohort: Cohort,
    cfg: HcaeConfig,
    workers: Optional[int] = None,
) -> List[Embedding]:
    """Train every subject independently; results keep cohort order."""

    def run(item):
        i, s = item
        try:
            return train_subject(s, cfg, sample_seed=subject_seed(cfg.seed, i))[1]
        except HyperconnectomeError as exc:
            raise type(exc)(f"subject {s.subject_id}: {exc}") from exc

    items = list(enumerate(cohort.subjects))
    if workers is None or workers <= 1:
        return [run(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, items))


def config_dict(cfg: HcaeConfig) -> dict:
    d = asdict(cfg)
    d["disc_hidden_dims"] = list(cfg.disc_hidden_dims)
    return d


def stack_embeddings(embeddings: Sequence[Embedding]) -> np.ndarray:
    return np.vstack([e.flattened for e in embeddings])
