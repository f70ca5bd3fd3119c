"""The four networks and their hand-written backward passes.

* MLP encoder: observed features -> mid latent ``z_m`` (deterministic).
* GCN encoder: ``z_m`` and the normalised adjacency -> Gaussian ``(mu, log_var)``
  and the reparameterised user latent ``z_u``.
* Decoder: latent -> per-attribute categorical distributions. One set of
  weights decodes both ``z_u`` and ``z_m``.
* Discriminator: latent row -> probability that it is a mid latent of a
  fully observed user.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
consumes the cache and returns parameter gradients (and the input gradient
where the caller needs one).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, SchemaError
from .numerics import dense_matmul, fingerprint, sigmoid, softmax_blocks, softmax_blocks_backward, sparse_dense_matmul

CHECKPOINT_FORMAT = "attrinfer-checkpoint"
CHECKPOINT_VERSION = 1

GROUPS = ("mlp", "gcn", "head", "decoder", "disc")


@dataclass(frozen=True)
class ModelDims:
    n_features: int
    enc_hidden: int = 64
    latent: int = 64
    gcn_hidden: int = 64
    dec_hidden: int = 128
    disc_hidden: tuple = (16, 4)


@dataclass
class ModelParams:
    mlp: dict = field(default_factory=dict)
    gcn: dict = field(default_factory=dict)
    head: dict = field(default_factory=dict)  # dense (mu, log_var) head, MLP-only baseline
    decoder: dict = field(default_factory=dict)
    disc: dict = field(default_factory=dict)

    def group(self, name: str) -> dict:
        return getattr(self, name)

    def flat(self, groups=GROUPS) -> dict:
        return {f"{g}.{k}": v for g in groups for k, v in self.group(g).items()}

    def assign(self, flat: dict) -> None:
        for key, value in flat.items():
            g, k = key.split(".", 1)
            self.group(g)[k] = value

    def copy(self) -> "ModelParams":
        return ModelParams(**{g: {k: v.copy() for k, v in self.group(g).items()} for g in GROUPS})

    def fingerprints(self) -> dict:
        return {g: fingerprint(self.group(g)) for g in GROUPS}


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(dims: ModelDims, rng: np.random.Generator, with_head: bool = False) -> ModelParams:
    """Glorot-uniform weights and zero biases, drawn in a fixed order."""
    f, he, dz, hg, hd = dims.n_features, dims.enc_hidden, dims.latent, dims.gcn_hidden, dims.dec_hidden
    p = ModelParams()
    p.mlp = {"W1": _glorot(rng, f, he), "b1": np.zeros(he), "W2": _glorot(rng, he, dz), "b2": np.zeros(dz)}
    p.gcn = {"W0": _glorot(rng, dz, hg), "W1": _glorot(rng, hg, 2 * dz)}
    p.decoder = {"W1": _glorot(rng, dz, hd), "b1": np.zeros(hd), "W2": _glorot(rng, hd, f), "b2": np.zeros(f)}
    sizes = (dz, *dims.disc_hidden, 1)
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        p.disc[f"W{i}"] = _glorot(rng, a, b)
        p.disc[f"b{i}"] = np.zeros(b)
    if with_head:
        # the GCN weights are still drawn so every mode shares the other groups' initial values
        p.gcn = {}
        p.head = {"W": _glorot(rng, dz, 2 * dz), "b": np.zeros(2 * dz)}
    return p


# ------------------------------------------------------------ dense stacks


def _layers(group: dict):
    n = sum(1 for k in group if k.startswith("W"))
    return [(group[f"W{i}"], group[f"b{i}"]) for i in range(1, n + 1)]


def mlp_forward(x, layers, relu_hidden=True):
    """Affine layers with ReLU between them (none after the last)."""
    cache = []
    h = x
    for i, (w, b) in enumerate(layers):
        if h.shape[1] != w.shape[0]:
            raise DimensionError(f"layer {i + 1} expects {w.shape[0]} inputs, got {h.shape[1]}")
        pre = dense_matmul(h, w) + b
        last = i == len(layers) - 1
        out = pre if last or not relu_hidden else np.maximum(pre, 0.0)
        cache.append((h, pre, last or not relu_hidden))
        h = out
    return h, (cache, layers)


def mlp_backward(dout, cache_and_layers):
    cache, layers = cache_and_layers
    grads = [None] * len(layers)
    d = dout
    for i in range(len(layers) - 1, -1, -1):
        h, pre, linear = cache[i]
        w, _ = layers[i]
        if not linear:
            d = d * (pre > 0)
        grads[i] = (h.T @ d, d.sum(axis=0))
        d = d @ w.T
    return d, grads


def _as_group(grads):
    out = {}
    for i, (dw, db) in enumerate(grads, start=1):
        out[f"W{i}"] = dw
        out[f"b{i}"] = db
    return out


# ------------------------------------------------------------ MLP encoder


def encode_mlp_forward(x, params: ModelParams):
    return mlp_forward(x, _layers(params.mlp))


def encode_mlp(x, params: ModelParams):
    return encode_mlp_forward(x, params)[0]


def encode_mlp_backward(dz_m, cache) -> dict:
    _, grads = mlp_backward(dz_m, cache)
    return _as_group(grads)


# ------------------------------------------------------------ GCN encoder


def reparameterize(mu, log_var, eps):
    return mu + np.exp(0.5 * log_var) * eps


def encode_gnn_forward(z_m, a_norm, params: ModelParams, eps):
    w0, w1 = params.gcn["W0"], params.gcn["W1"]
    n, dz = z_m.shape
    if a_norm.shape != (n, n):
        raise DimensionError(f"adjacency is {a_norm.shape[0]}x{a_norm.shape[1]} but there are {n} users")
    if eps.shape != (n, w1.shape[1] // 2):
        raise DimensionError(f"noise shape {eps.shape} != {(n, w1.shape[1] // 2)}")
    zw = dense_matmul(z_m, w0)
    pre = sparse_dense_matmul(a_norm, zw)
    hidden = np.maximum(pre, 0.0)
    hw = dense_matmul(hidden, w1)
    out = sparse_dense_matmul(a_norm, hw)
    d = w1.shape[1] // 2
    mu, log_var = out[:, :d], out[:, d:]
    z_u = reparameterize(mu, log_var, eps)
    return (mu, log_var, z_u), (z_m, a_norm, pre, hidden, log_var, eps)


def encode_gnn(z_m, a_norm, params: ModelParams, eps):
    return encode_gnn_forward(z_m, a_norm, params, eps)[0]


def reparam_backward(dmu, dlog_var, dz_u, log_var, eps):
    """Fold the ``z_u`` gradient into the (mu, log_var) gradients."""
    dmu = dmu + dz_u
    dlog_var = dlog_var + dz_u * eps * 0.5 * np.exp(0.5 * log_var)
    return dmu, dlog_var


def encode_gnn_backward(dmu, dlog_var, dz_u, cache, params: ModelParams):
    z_m, a_norm, pre, hidden, log_var, eps = cache
    dmu, dlog_var = reparam_backward(dmu, dlog_var, dz_u, log_var, eps)
    dout = np.concatenate([dmu, dlog_var], axis=1)
    at = a_norm.T
    dhw = sparse_dense_matmul(at, dout)
    dw1 = hidden.T @ dhw
    dpre = (dhw @ params.gcn["W1"].T) * (pre > 0)
    dzw = sparse_dense_matmul(at, dpre)
    dw0 = z_m.T @ dzw
    dz_m = dzw @ params.gcn["W0"].T
    return {"W0": dw0, "W1": dw1}, dz_m


# ------------------------------------------- dense Gaussian head (baseline)


def encode_head_forward(z_m, params: ModelParams, eps):
    w, b = params.head["W"], params.head["b"]
    out = dense_matmul(z_m, w) + b
    d = w.shape[1] // 2
    mu, log_var = out[:, :d], out[:, d:]
    return (mu, log_var, reparameterize(mu, log_var, eps)), (z_m, log_var, eps)


def encode_head_backward(dmu, dlog_var, dz_u, cache, params: ModelParams):
    z_m, log_var, eps = cache
    dmu, dlog_var = reparam_backward(dmu, dlog_var, dz_u, log_var, eps)
    dout = np.concatenate([dmu, dlog_var], axis=1)
    return {"W": z_m.T @ dout, "b": dout.sum(axis=0)}, dout @ params.head["W"].T


# ---------------------------------------------------------------- decoder


def decode_forward(z, params: ModelParams, blocks):
    logits, cache = mlp_forward(z, _layers(params.decoder))
    probs = softmax_blocks(logits, blocks)
    return probs, (cache, probs, blocks)


def decode(z, params: ModelParams, schema):
    return decode_forward(z, params, schema.blocks)[0]


def decode_backward(dprobs=None, cache=None, dlogits=None):
    """Backward through the decoder from either the probability gradient or
    the logit gradient (the latter when the loss already folded the softmax in)."""
    mlp_cache, probs, blocks = cache
    if dlogits is None:
        dlogits = softmax_blocks_backward(probs, dprobs, blocks)
    elif dprobs is not None:
        dlogits = dlogits + softmax_blocks_backward(probs, dprobs, blocks)
    dz, grads = mlp_backward(dlogits, mlp_cache)
    return _as_group(grads), dz


# ---------------------------------------------------------- discriminator


def discriminate_forward(z, params: ModelParams):
    logits, cache = mlp_forward(z, _layers(params.disc))
    return sigmoid(logits[:, 0]), (cache, logits[:, 0])


def discriminate(z, params: ModelParams):
    return discriminate_forward(z, params)[0]


def discriminate_backward(dlogit, cache):
    """``dlogit`` is the gradient w.r.t. the pre-sigmoid score, one per row."""
    mlp_cache, _ = cache
    dz, grads = mlp_backward(dlogit[:, None], mlp_cache)
    return _as_group(grads), dz


# ------------------------------------------------------------- checkpoint


def save_checkpoint(path, params: ModelParams, schema, config: dict, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "schema_digest": schema.digest(),
        "schema": schema.to_json(),
        "config": config,
        "params": {
            g: {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in sorted(params.group(g).items())}
            for g in GROUPS
        },
        "fingerprint": fingerprint(params.flat()),
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path, schema=None):
    """Return ``(params, config, payload)``; rejects a schema that does not match."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a JSON checkpoint ({exc.msg})") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path}: unrecognised checkpoint format")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if schema is not None and payload["schema_digest"] != schema.digest():
        raise SchemaError(f"{path}: checkpoint was trained on a different attribute schema")
    params = ModelParams()
    for g, tensors in payload["params"].items():
        for k, t in tensors.items():
            params.group(g)[k] = np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
    if fingerprint(params.flat()) != payload["fingerprint"]:
        raise ParseError(f"{path}: parameter fingerprint mismatch")
    return params, payload["config"], payload
