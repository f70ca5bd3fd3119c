"""Small float64 numerics layer: matrix products, activations, block softmax,
Adam, and a finite-difference gradient checker.

Dense matrices are plain 2-d ``numpy.ndarray`` objects. Sparse matrices are
``scipy.sparse.csr_matrix`` with sorted, de-duplicated indices so that each
row is reduced in ascending column order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DomainError, NumericalError, SchemaError

ELEMENTWISE_KINDS = ("relu", "sigmoid", "exp", "log")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams everywhere."""
    return np.random.Generator(np.random.PCG64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def fingerprint(arrays) -> str:
    """SHA-256 over the raw bytes of a sequence (or dict) of arrays."""
    h = hashlib.sha256()
    if isinstance(arrays, dict):
        items = sorted(arrays.items())
    else:
        items = list(enumerate(arrays))
    for key, a in items:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(key).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _check_2d(m, name):
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {m.shape}")


def dense_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_2d(a, "left operand")
    _check_2d(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def sparse_from_entries(rows: int, cols: int, entries) -> sp.csr_matrix:
    """Build a CSR matrix from ``(row, col, value)`` triples; duplicates are rejected."""
    entries = list(entries)
    if entries:
        r, c, v = (np.asarray(t) for t in zip(*entries))
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    keys = set(zip(r.tolist(), c.tolist()))
    if len(keys) != len(entries):
        raise DimensionError("duplicate (row, col) coordinates in sparse entries")
    m = sp.csr_matrix((v.astype(np.float64), (r, c)), shape=(rows, cols))
    m.sort_indices()
    return m


def is_symmetric(s: sp.spmatrix, atol: float = 0.0) -> bool:
    if s.shape[0] != s.shape[1]:
        return False
    diff = abs(s - s.T)
    return diff.nnz == 0 or diff.max() <= atol


def sparse_dense_matmul(s: sp.spmatrix, d: np.ndarray) -> np.ndarray:
    _check_2d(d, "dense operand")
    if s.shape[1] != d.shape[0]:
        raise DimensionError(f"cannot multiply sparse {s.shape[0]}x{s.shape[1]} by {d.shape[0]}x{d.shape[1]}")
    return np.asarray(s @ d)


def elementwise(op_kind: str, m: np.ndarray) -> np.ndarray:
    if op_kind == "relu":
        return np.maximum(m, 0.0)
    if op_kind == "sigmoid":
        return sigmoid(m)
    if op_kind == "exp":
        return np.exp(m)
    if op_kind == "log":
        bad = np.argwhere(~(m > 0))
        if bad.size:
            i, j = bad[0]
            raise DomainError(f"log of non-positive entry {m[i, j]!r} at ({i}, {j})")
        return np.log(m)
    raise ValueError(f"unknown elementwise op {op_kind!r}; expected one of {ELEMENTWISE_KINDS}")


def elementwise_grad(op_kind: str, m: np.ndarray, out: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Backward pass of :func:`elementwise` given its input ``m`` and output ``out``."""
    if op_kind == "relu":
        return dout * (m > 0)
    if op_kind == "sigmoid":
        return dout * out * (1.0 - out)
    if op_kind == "exp":
        return dout * out
    if op_kind == "log":
        return dout / m
    raise ValueError(f"unknown elementwise op {op_kind!r}")


def sigmoid(m: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_sigmoid(m: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -m)


def validate_blocks(block_bounds, n_cols: int) -> None:
    pos = 0
    for start, end in block_bounds:
        if start != pos or end <= start:
            raise SchemaError(f"blocks {list(block_bounds)} do not partition columns [0, {n_cols})")
        pos = end
    if pos != n_cols:
        raise SchemaError(f"blocks {list(block_bounds)} do not partition columns [0, {n_cols})")


def softmax_blocks(m: np.ndarray, block_bounds) -> np.ndarray:
    _check_2d(m, "logits")
    validate_blocks(block_bounds, m.shape[1])
    out = np.empty_like(m, dtype=np.float64)
    for start, end in block_bounds:
        blk = m[:, start:end]
        e = np.exp(blk - blk.max(axis=1, keepdims=True))
        out[:, start:end] = e / e.sum(axis=1, keepdims=True)
    return out


def log_softmax_blocks(m: np.ndarray, block_bounds) -> np.ndarray:
    validate_blocks(block_bounds, m.shape[1])
    out = np.empty_like(m, dtype=np.float64)
    for start, end in block_bounds:
        blk = m[:, start:end]
        shifted = blk - blk.max(axis=1, keepdims=True)
        out[:, start:end] = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return out


def softmax_blocks_backward(probs: np.ndarray, dprobs: np.ndarray, block_bounds) -> np.ndarray:
    """Gradient w.r.t. the logits given the block-softmax output and upstream gradient."""
    dlogits = np.empty_like(probs)
    for start, end in block_bounds:
        p = probs[:, start:end]
        g = dprobs[:, start:end]
        dlogits[:, start:end] = p * (g - (p * g).sum(axis=1, keepdims=True))
    return dlogits


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update. Returns new parameter arrays and the
    (mutated) state; the input arrays are not modified."""
    if set(grads) != set(params) or set(state.m) != set(params):
        raise DimensionError(f"parameter keys {sorted(params)} do not match gradients {sorted(grads)}")
    for k in params:
        if params[k].shape != grads[k].shape or params[k].shape != state.m[k].shape:
            raise DimensionError(
                f"shape mismatch for {k!r}: param {params[k].shape}, grad {grads[k].shape}, moment {state.m[k].shape}"
            )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    new = {}
    for k in sorted(params):
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        new[k] = params[k] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, state


@dataclass
class GradCheckReport:
    max_rel_error: dict
    failures: list
    rel_tol: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return not self.failures


def grad_check(loss_fn, params: dict, rel_tol: float = 1e-4, h: float = 1e-5, skip_below: float = 1e-8):
    """Compare analytic gradients with central finite differences.

    ``loss_fn(params) -> (loss, grads)`` must be deterministic; any noise it
    uses has to be drawn beforehand and captured. Entries where both the
    analytic and numeric derivative are below ``skip_below`` in magnitude are
    ignored.
    """
    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericalError("loss is not finite at the evaluation point")
    report = {}
    failures = []
    for name in sorted(params):
        p = params[name]
        analytic = np.asarray(grads[name])
        worst = 0.0
        flat = p.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp, _ = loss_fn(params)
            flat[idx] = orig - h
            fm, _ = loss_fn(params)
            flat[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericalError(f"non-finite loss perturbing {name}[{idx}]")
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[idx]
            if abs(a) < skip_below and abs(numeric) < skip_below:
                continue
            rel = abs(a - numeric) / max(abs(a), abs(numeric))
            worst = max(worst, rel)
        report[name] = worst
        if worst > rel_tol:
            failures.append(name)
    return GradCheckReport(report, failures, rel_tol)
