"""Training objectives and their gradients.

Each loss has a plain value function and a ``*_grad`` companion that also
returns the gradient w.r.t. the quantity the network produces directly
(logits for softmax/sigmoid heads, raw rows for InfoNCE).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericalError

LOG_FLOOR = 1e-12


def _safe_log(p):
    return np.log(np.maximum(p, LOG_FLOOR))


@dataclass
class LossBreakdown:
    l_recon: float
    l_kl: float
    l_vae: float
    l_d: float
    l_gnn: float
    l_mi: float
    total: float
    beta: float
    lam: float

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------- reconstruction


def _target_cells(x, train_mask, schema):
    for j, (start, end) in enumerate(schema.blocks):
        users = np.flatnonzero(train_mask[:, j])
        if users.size == 0:
            continue
        targets = np.argmax(x[users, start:end], axis=1)
        if np.any(x[users, start + targets] != 1.0):
            raise ConfigurationError(f"train-visible cells of attribute {j} have no one-hot target in the features")
        yield j, start, end, users, targets


def recon_loss(x_hat, x, train_mask, schema) -> float:
    """Mean negative log-probability of the observed label over train-visible cells."""
    if x_hat.shape != x.shape:
        raise ConfigurationError(f"reconstruction shape {x_hat.shape} != feature shape {x.shape}")
    total = 0.0
    count = 0
    for j, start, _, users, targets in _target_cells(x, train_mask, schema):
        p = x_hat[users, start + targets]
        if np.any(~(p > 0)):
            i = users[np.flatnonzero(~(p > 0))[0]]
            raise NumericalError(f"non-positive probability at target of user {i}, attribute {j}")
        total += float(-np.log(p).sum())
        count += users.size
    if count == 0:
        raise ConfigurationError("no train-visible cells to reconstruct")
    return total / count


def recon_loss_grad(x_hat, x, train_mask, schema):
    """Loss and gradient w.r.t. the decoder logits (softmax folded in)."""
    loss = recon_loss(x_hat, x, train_mask, schema)
    n_cells = int(train_mask.sum())
    dlogits = np.zeros_like(x_hat)
    for _, start, end, users, targets in _target_cells(x, train_mask, schema):
        g = x_hat[users, start:end].copy()
        g[np.arange(users.size), targets] -= 1.0
        dlogits[users, start:end] = g / n_cells
    return loss, dlogits


# ---------------------------------------------------------------------- KL


def kl_gauss(mu, log_var) -> float:
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over dimensions, averaged over rows."""
    if mu.shape != log_var.shape:
        raise ConfigurationError(f"mu shape {mu.shape} != log_var shape {log_var.shape}")
    per_row = 0.5 * (np.exp(log_var) + mu * mu - 1.0 - log_var).sum(axis=1)
    return float(max(per_row.mean(), 0.0))


def kl_gauss_grad(mu, log_var):
    n = mu.shape[0]
    return kl_gauss(mu, log_var), mu / n, 0.5 * (np.exp(log_var) - 1.0) / n


# ------------------------------------------------------------- adversarial


def disc_loss(scores_pos, scores_neg) -> float:
    scores_pos = np.asarray(scores_pos, dtype=np.float64)
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    if scores_pos.size == 0:
        raise ConfigurationError("discriminator has no positive rows (V^L is empty)")
    if scores_neg.size == 0:
        raise ConfigurationError("discriminator has no negative rows")
    return float(-_safe_log(scores_pos).mean() - _safe_log(1.0 - scores_neg).mean())


def disc_loss_grad(scores_pos, scores_neg):
    """Loss and gradients w.r.t. the pre-sigmoid logits of positives and negatives."""
    loss = disc_loss(scores_pos, scores_neg)
    dpos = -(1.0 - scores_pos) * (scores_pos >= LOG_FLOOR) / scores_pos.size
    dneg = scores_neg * (1.0 - scores_neg >= LOG_FLOOR) / scores_neg.size
    return loss, dpos, dneg


def gen_loss(scores_neg) -> float:
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    return float(-_safe_log(scores_neg).mean())


def gen_loss_grad(scores_neg):
    loss = gen_loss(scores_neg)
    return loss, -(1.0 - scores_neg) * (scores_neg >= LOG_FLOOR) / scores_neg.size


# ------------------------------------------------------ mutual information


def infonce(x, y) -> float:
    """InfoNCE estimate with the inner-product critic; never exceeds ``log K``."""
    return infonce_grad(x, y, need_grad=False)[0]


def infonce_grad(x, y, need_grad=True):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigurationError(f"infonce inputs differ in shape: {x.shape} vs {y.shape}")
    k = x.shape[0]
    if k == 0:
        raise ConfigurationError("infonce needs at least one sample")
    scores = x @ y.T
    lse = logsumexp(scores, axis=1)
    value = float((np.diag(scores) - lse).mean() + math.log(k))
    if not need_grad:
        return value, None, None
    soft = np.exp(scores - lse[:, None])
    dscores = (np.eye(k) - soft) / k
    return value, dscores @ y, dscores.T @ x


def mi_constraint(x_hat_m, x_hat, partition) -> float:
    """-MI(pair over V^L) + MI(pair over V^U); the second term is dropped when V^U is empty."""
    return mi_constraint_grad(x_hat_m, x_hat, partition, need_grad=False)[0]


def mi_constraint_grad(x_hat_m, x_hat, partition, need_grad=True):
    lab, unl = partition.labeled, partition.unlabeled
    if lab.size == 0:
        raise ConfigurationError("MI constraint needs at least one user in V^L")
    v_l, dm_l, dx_l = infonce_grad(x_hat_m[lab], x_hat[lab], need_grad)
    value = -v_l
    if unl.size:
        v_u, dm_u, dx_u = infonce_grad(x_hat_m[unl], x_hat[unl], need_grad)
        value += v_u
    if not need_grad:
        return value, None, None
    dxm = np.zeros_like(x_hat_m)
    dx = np.zeros_like(x_hat)
    dxm[lab] = -dm_l
    dx[lab] = -dx_l
    if unl.size:
        dxm[unl] = dm_u
        dx[unl] = dx_u
    return value, dxm, dx


# -------------------------------------------------------------------- total


def total_loss(l_vae, l_d, l_gnn, l_mi, beta=0.3, lam=0.2) -> float:
    """``l_vae + beta * (l_d + l_gnn) + lam * l_mi``."""
    for name, v in (("l_vae", l_vae), ("l_d", l_d), ("l_gnn", l_gnn), ("l_mi", l_mi)):
        if not math.isfinite(v):
            raise NumericalError(f"loss part {name} is not finite ({v})")
    return l_vae + beta * (l_d + l_gnn) + lam * l_mi
