"""Training loop: VAE + MI update, discriminator update, adversarial GCN update.

Modes
-----
``full``          all three updates, MI weight ``lam``, adversarial weight ``beta``
``no_adversary``  discriminator and adversarial updates skipped
``no_mi``         MI weight forced to 0
``gcn_vae``       GCN encoder VAE only (no adversary, no MI)
``vanilla_vae``   MLP encoder with a dense Gaussian head, no graph, no adversary, no MI
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses
from .errors import ConfigurationError, NumericalError, SchemaError
from .graph import (
    AttributedGraph,
    LabelMask,
    UserPartition,
    build_feature_matrix,
    normalize_adjacency,
    partition_users,
)
from .metrics import accuracy_cell, predict_labels
from .model import (
    ModelDims,
    ModelParams,
    decode_backward,
    decode_forward,
    discriminate_backward,
    discriminate_forward,
    encode_gnn_backward,
    encode_gnn_forward,
    encode_head_backward,
    encode_head_forward,
    encode_mlp_backward,
    encode_mlp_forward,
    init_params,
)
from .numerics import AdamState, adam_step

MODES = ("full", "no_adversary", "no_mi", "vanilla_vae", "gcn_vae")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    lr_model: float = 0.01
    lr_disc: float = 0.001
    beta: float = 0.3
    lam: float = 0.2
    enc_hidden: int = 64
    latent: int = 64
    gcn_hidden: int = 64
    dec_hidden: int = 128
    disc_hidden: tuple = (16, 4)
    seed: int = 0
    mode: str = "full"
    eval_every: int = 10
    kl_weight: float | None = None  # None: 1 / n_users
    # when False, an empty V^L drops the adversarial and MI terms instead of failing
    require_labeled: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1")
        if self.lr_model <= 0 or self.lr_disc <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.beta < 0 or self.lam < 0:
            raise ConfigurationError("beta and lambda must be non-negative")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be at least 1")
        if self.kl_weight is not None and self.kl_weight < 0:
            raise ConfigurationError("kl_weight must be non-negative")

    @property
    def uses_graph(self) -> bool:
        return self.mode != "vanilla_vae"

    @property
    def adversarial(self) -> bool:
        return self.mode in ("full", "no_mi")

    @property
    def effective_beta(self) -> float:
        return self.beta if self.adversarial else 0.0

    @property
    def effective_lam(self) -> float:
        return self.lam if self.mode in ("full", "no_adversary") else 0.0

    def kl_weight_for(self, n_users: int) -> float:
        return 1.0 / n_users if self.kl_weight is None else self.kl_weight

    def dims(self, n_features: int) -> ModelDims:
        return ModelDims(n_features, self.enc_hidden, self.latent, self.gcn_hidden, self.dec_hidden, tuple(self.disc_hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["disc_hidden"] = list(self.disc_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "disc_hidden" in d:
            d["disc_hidden"] = tuple(d["disc_hidden"])
        return cls(**d)


def seed_streams(seed: int) -> dict:
    """Independent generators for each consumer of randomness in one run."""
    names = ("split", "sparsify", "init", "noise")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.Generator(np.random.PCG64(c)) for n, c in zip(names, children)}


@dataclass
class GraphData:
    """Everything derived from a graph and a split that training consumes."""

    graph: AttributedGraph
    mask: LabelMask
    x: np.ndarray
    a_norm: object
    partition: UserPartition | None

    @property
    def schema(self):
        return self.graph.schema

    @property
    def n_users(self) -> int:
        return self.graph.n_users


def prepare(graph: AttributedGraph, mask: LabelMask) -> GraphData:
    x = build_feature_matrix(graph, mask.train)
    try:
        partition = partition_users(graph, mask.train)
    except ConfigurationError:
        partition = None
    return GraphData(graph, mask, x, normalize_adjacency(graph), partition)


# ------------------------------------------------------------------ forward


@dataclass
class Forward:
    z_m: np.ndarray
    mu: np.ndarray
    log_var: np.ndarray
    z_u: np.ndarray
    x_hat: np.ndarray | None = None
    x_hat_m: np.ndarray | None = None
    caches: dict = field(default_factory=dict)


def encode(params: ModelParams, data: GraphData, eps: np.ndarray) -> Forward:
    z_m, mlp_cache = encode_mlp_forward(data.x, params)
    if params.head:
        (mu, log_var, z_u), enc_cache = encode_head_forward(z_m, params, eps)
    else:
        (mu, log_var, z_u), enc_cache = encode_gnn_forward(z_m, data.a_norm, params, eps)
    return Forward(z_m, mu, log_var, z_u, caches={"mlp": mlp_cache, "enc": enc_cache})


def forward(params: ModelParams, data: GraphData, eps: np.ndarray, decode_mid: bool = True) -> Forward:
    fw = encode(params, data, eps)
    blocks = data.schema.blocks
    fw.x_hat, fw.caches["dec_u"] = decode_forward(fw.z_u, params, blocks)
    if decode_mid:
        fw.x_hat_m, fw.caches["dec_m"] = decode_forward(fw.z_m, params, blocks)
    return fw


def _encoder_backward(params, fw, dmu, dlog_var, dz_u, dz_m_extra=None):
    """Gradients for the encoder groups (mlp + gcn or head)."""
    if params.head:
        g_enc, dz_m = encode_head_backward(dmu, dlog_var, dz_u, fw.caches["enc"], params)
        enc_name = "head"
    else:
        g_enc, dz_m = encode_gnn_backward(dmu, dlog_var, dz_u, fw.caches["enc"], params)
        enc_name = "gcn"
    if dz_m_extra is not None:
        dz_m = dz_m + dz_m_extra
    return {"mlp": encode_mlp_backward(dz_m, fw.caches["mlp"]), enc_name: g_enc}


def _add(acc: dict, group: str, grads: dict) -> None:
    if group not in acc:
        acc[group] = {k: v.copy() for k, v in grads.items()}
    else:
        for k, v in grads.items():
            acc[group][k] += v


def _flat(grads: dict, groups) -> dict:
    return {f"{g}.{k}": v for g in groups for k, v in grads[g].items()}


def full_objective(params: ModelParams, data: GraphData, eps: np.ndarray, beta: float, lam: float, kl_weight: float = 1.0):
    """Weighted total loss and its exact gradient w.r.t. every parameter.

    Unlike the training step, no gradient is blocked here: the MI term
    reaches the encoders and the adversarial terms reach every network.
    Used to verify the hand-written backward passes.
    """
    if data.partition is None:
        raise ConfigurationError("V^L is empty")
    part = data.partition
    fw = forward(params, data, eps)
    schema = data.schema

    l_recon, drecon = losses.recon_loss_grad(fw.x_hat, data.x, data.mask.train, schema)
    l_kl, dmu, dlv = losses.kl_gauss_grad(fw.mu, fw.log_var)
    dmu, dlv = kl_weight * dmu, kl_weight * dlv
    l_mi, dxm, dxu = losses.mi_constraint_grad(fw.x_hat_m, fw.x_hat, part)

    s_pos, c_pos = discriminate_forward(fw.z_m[part.labeled], params)
    s_neg, c_neg = discriminate_forward(fw.z_u, params)
    l_d, dpos, dneg = losses.disc_loss_grad(s_pos, s_neg)
    l_gnn, dgen = losses.gen_loss_grad(s_neg)

    grads: dict = {}
    g_dec_u, dz_u = decode_backward(dprobs=lam * dxu, cache=fw.caches["dec_u"], dlogits=drecon)
    g_dec_m, dz_m_dec = decode_backward(dprobs=lam * dxm, cache=fw.caches["dec_m"])
    _add(grads, "decoder", g_dec_u)
    _add(grads, "decoder", g_dec_m)

    g_dpos, dz_pos = discriminate_backward(beta * dpos, c_pos)
    g_dneg, dz_neg = discriminate_backward(beta * (dneg + dgen), c_neg)
    _add(grads, "disc", g_dpos)
    _add(grads, "disc", g_dneg)

    dz_m_extra = dz_m_dec.copy()
    dz_m_extra[part.labeled] += dz_pos
    for g, v in _encoder_backward(params, fw, dmu, dlv, dz_u + dz_neg, dz_m_extra).items():
        _add(grads, g, v)

    l_vae = l_recon + kl_weight * l_kl
    total = losses.total_loss(l_vae, l_d, l_gnn, l_mi, beta, lam)
    groups = [g for g in ("mlp", "gcn", "head", "decoder", "disc") if params.group(g)]
    return total, _flat(grads, groups)


# ------------------------------------------------------------------- state


@dataclass
class TrainState:
    config: TrainConfig
    params: ModelParams
    adam_model: AdamState
    adam_disc: AdamState
    adam_adv: AdamState
    noise_rng: np.random.Generator
    iteration: int = 0
    history: list = field(default_factory=list)
    best_val: float = -math.inf
    best_iteration: int = 0
    best_params: ModelParams | None = None
    audit: list | None = None


def encoder_groups(params: ModelParams) -> tuple:
    return ("mlp", "head", "decoder") if params.head else ("mlp", "gcn", "decoder")


def init_state(config: TrainConfig, data: GraphData, audit: bool = False) -> TrainState:
    streams = seed_streams(config.seed)
    params = init_params(config.dims(data.schema.n_features), streams["init"], with_head=not config.uses_graph)
    return TrainState(
        config=config,
        params=params,
        adam_model=AdamState.for_params(params.flat(encoder_groups(params)), config.lr_model),
        adam_disc=AdamState.for_params(params.flat(("disc",)), config.lr_disc),
        adam_adv=AdamState.for_params(params.flat(("gcn",)), config.lr_model * max(config.effective_beta, 1e-12)),
        noise_rng=streams["noise"],
        audit=[] if audit else None,
    )


def _check_finite(state, parts: dict):
    for name, v in parts.items():
        if not math.isfinite(v):
            raise NumericalError(f"iteration {state.iteration + 1}: non-finite {name}; breakdown {parts}")


def train_step(state: TrainState, data: GraphData) -> losses.LossBreakdown:
    """One iteration; mutates ``state`` and returns the recorded losses."""
    cfg = state.config
    params = state.params
    adversarial, beta, lam = cfg.adversarial, cfg.effective_beta, cfg.effective_lam
    if (adversarial or lam > 0) and data.partition is None:
        if cfg.require_labeled:
            raise ConfigurationError("no user has every attribute visible in training; V^L is empty")
        adversarial, beta, lam = False, 0.0, 0.0
    part = data.partition
    schema = data.schema
    n, dz = data.n_users, cfg.latent
    prints = {"start": params.fingerprints()} if state.audit is not None else None

    # generate dual representations and both reconstructions
    eps = state.noise_rng.standard_normal((n, dz))
    fw = forward(params, data, eps, decode_mid=lam > 0)

    # VAE + MI update; the MI gradient stops at the decoder
    l_recon, drecon = losses.recon_loss_grad(fw.x_hat, data.x, data.mask.train, schema)
    kl_w = cfg.kl_weight_for(n)
    l_kl, dmu, dlv = losses.kl_gauss_grad(fw.mu, fw.log_var)
    dmu, dlv = kl_w * dmu, kl_w * dlv
    grads: dict = {}
    g_dec, dz_u = decode_backward(cache=fw.caches["dec_u"], dlogits=drecon)
    _add(grads, "decoder", g_dec)
    l_mi = 0.0
    if lam > 0:
        l_mi, dxm, dxu = losses.mi_constraint_grad(fw.x_hat_m, fw.x_hat, part)
        _add(grads, "decoder", decode_backward(dprobs=lam * dxu, cache=fw.caches["dec_u"])[0])
        _add(grads, "decoder", decode_backward(dprobs=lam * dxm, cache=fw.caches["dec_m"])[0])
    for g, v in _encoder_backward(params, fw, dmu, dlv, dz_u).items():
        _add(grads, g, v)
    l_vae = l_recon + kl_w * l_kl
    _check_finite(state, {"l_recon": l_recon, "l_kl": l_kl, "l_mi": l_mi})
    groups = encoder_groups(params)
    new, _ = adam_step(params.flat(groups), _flat(grads, groups), state.adam_model)
    params.assign(new)
    if prints is not None:
        prints["after_vae"] = params.fingerprints()

    l_d = l_gnn = 0.0
    if adversarial:
        # discriminator update on fresh representations
        eps2 = state.noise_rng.standard_normal((n, dz))
        enc = encode(params, data, eps2)
        s_pos, c_pos = discriminate_forward(enc.z_m[part.labeled], params)
        s_neg, c_neg = discriminate_forward(enc.z_u, params)
        l_d, dpos, dneg = losses.disc_loss_grad(s_pos, s_neg)
        g_pos, _ = discriminate_backward(dpos, c_pos)
        g_neg, _ = discriminate_backward(dneg, c_neg)
        g_disc = {k: g_pos[k] + g_neg[k] for k in g_pos}
        _check_finite(state, {"l_d": l_d})
        new, _ = adam_step(params.flat(("disc",)), {f"disc.{k}": v for k, v in g_disc.items()}, state.adam_disc)
        params.assign(new)
        if prints is not None:
            prints["after_disc"] = params.fingerprints()

        # adversarial update of the GCN weights only
        s_neg, c_neg = discriminate_forward(enc.z_u, params)
        l_gnn, dgen = losses.gen_loss_grad(s_neg)
        _, dz_u_adv = discriminate_backward(beta * dgen, c_neg)
        g_gcn, _ = encode_gnn_backward(np.zeros_like(enc.mu), np.zeros_like(enc.log_var), dz_u_adv, enc.caches["enc"], params)
        _check_finite(state, {"l_gnn": l_gnn})
        new, _ = adam_step(params.flat(("gcn",)), {f"gcn.{k}": v for k, v in g_gcn.items()}, state.adam_adv)
        params.assign(new)
        if prints is not None:
            prints["after_adv"] = params.fingerprints()

    total = losses.total_loss(l_vae, l_d, l_gnn, l_mi, beta, lam)
    state.iteration += 1
    rec = losses.LossBreakdown(l_recon, l_kl, l_vae, l_d, l_gnn, l_mi, total, beta, lam)
    if prints is not None:
        state.audit.append(prints)
    return rec


# -------------------------------------------------------------- inference


def infer(params: ModelParams, data: GraphData) -> np.ndarray:
    """Deterministic reconstruction (posterior mean, no noise) for all users."""
    if params.mlp["W1"].shape[0] != data.schema.n_features:
        raise SchemaError(
            f"parameters expect {params.mlp['W1'].shape[0]} features, schema has {data.schema.n_features}"
        )
    eps = np.zeros((data.n_users, params.mlp["W2"].shape[1]))
    fw = forward(params, data, eps, decode_mid=False)
    return fw.x_hat


@dataclass
class TrainResult:
    params: ModelParams  # best-validation snapshot (final parameters if never validated)
    final_params: ModelParams
    history: list  # one dict per iteration
    best_iteration: int
    config: TrainConfig
    state: TrainState | None = None

    def history_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.history)


def train(config: TrainConfig, data: GraphData, audit: bool = False, state: TrainState | None = None) -> TrainResult:
    state = state or init_state(config, data, audit=audit)
    validate = bool(data.mask.val.any())
    truth = data.graph.assignments
    for _ in range(config.iterations):
        rec = train_step(state, data).as_dict()
        rec["iteration"] = state.iteration
        if validate and state.iteration % config.eval_every == 0:
            pred = predict_labels(infer(state.params, data), data.schema)
            acc = accuracy_cell(pred, truth, data.mask.val)
            rec["val_accuracy"] = acc
            if acc > state.best_val:
                state.best_val = acc
                state.best_iteration = state.iteration
                state.best_params = state.params.copy()
        state.history.append(rec)
    best = state.best_params if state.best_params is not None else state.params.copy()
    best_iter = state.best_iteration if state.best_params is not None else state.iteration
    return TrainResult(best, state.params.copy(), state.history, best_iter, config, state)
