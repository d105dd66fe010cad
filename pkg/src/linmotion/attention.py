"""Attention kernels: softmax reference, ReLU linear attention, RoPE and
RoPE-compatible cosine linear attention (naive O(n^2) and shared-term O(n)).

All kernels take row-vector matrices ``q, k`` of shape (..., n, d) and
``v`` of shape (..., n, d_v); leading axes are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSimilarityError, SearchExhaustedError, ShapeError
from .tensor import Rng, randn

EPS_DEN = 1e-6
EPS_NORM = 1e-12


@dataclass(frozen=True)
class AttentionBatch:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        _check_qkv(self.q, self.k, self.v)

    @property
    def n(self) -> int:
        return self.q.shape[-2]

    @property
    def d(self) -> int:
        return self.q.shape[-1]


@dataclass(frozen=True)
class RoPEConfig:
    dim: int
    base: float = 10000.0
    positions: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise ShapeError(f"RoPE dim must be even and positive, got {self.dim}")

    def angles(self, n: int) -> np.ndarray:
        """(n, dim/2) rotation angles; positions default to 0..n-1."""
        pos = np.arange(n, dtype=np.float64) if self.positions is None else np.asarray(self.positions, dtype=np.float64)
        if pos.shape != (n,):
            raise ShapeError(f"expected {n} positions, got shape {pos.shape}")
        inv_freq = self.base ** (-np.arange(0, self.dim, 2, dtype=np.float64) / self.dim)
        return pos[:, None] * inv_freq[None, :]


def _check_qkv(q, k, v):
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise ShapeError("q, k, v must be at least 2-D")
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"q and k head dims differ: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"k and v lengths differ: {k.shape} vs {v.shape}")
    if k.shape[-2] < 1:
        raise ShapeError("need at least one key")


def _raise_if_degenerate(den: np.ndarray):
    bad = np.argwhere(~(den > EPS_DEN))
    if bad.size:
        row = tuple(int(i) for i in bad[0])
        raise DegenerateSimilarityError(row if len(row) > 1 else row[0], float(den[tuple(bad[0])]))


def softmax_attention(q, k, v, scale: float | None = None) -> np.ndarray:
    """Reference softmax attention with max-subtraction; ``scale`` defaults to 1/sqrt(d)."""
    _check_qkv(q, k, v)
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ np.swapaxes(k, -1, -2)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    return w @ v


def relu_linear_attention(q, k, v) -> np.ndarray:
    """Linear attention with phi = ReLU, via the shared sums phi(K)^T V and sum phi(K)."""
    _check_qkv(q, k, v)
    fq = np.maximum(q, 0.0)
    fk = np.maximum(k, 0.0)
    kv = np.swapaxes(fk, -1, -2) @ v
    ksum = fk.sum(axis=-2)
    den = np.einsum("...nd,...d->...n", fq, ksum)
    _raise_if_degenerate(den)
    return (fq @ kv) / den[..., None]


def apply_rope(x, cfg: RoPEConfig) -> np.ndarray:
    """Rotate each pair (x[2i], x[2i+1]) of row r by angle pos[r] * base**(-2i/d).

    Convention: (a, b) -> (a cos t - b sin t, a sin t + b cos t).
    """
    x = np.asarray(x)
    d = x.shape[-1]
    if d % 2:
        raise ShapeError(f"RoPE needs an even feature dim, got {d}")
    if d != cfg.dim:
        raise ShapeError(f"feature dim {d} != RoPE dim {cfg.dim}")
    theta = cfg.angles(x.shape[-2])
    cos, sin = np.cos(theta), np.sin(theta)
    a, b = x[..., 0::2], x[..., 1::2]
    out = np.empty(x.shape, dtype=np.result_type(x.dtype, np.float32))
    out[..., 0::2] = a * cos - b * sin
    out[..., 1::2] = a * sin + b * cos
    return out


def _unit(x):
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norm, EPS_NORM)


def _unit_rotated(x, rope):
    u = _unit(x)
    return apply_rope(u, rope) if rope is not None else u


def cosine_similarity_matrix(q, k, rope: RoPEConfig | None = None) -> np.ndarray:
    """sim[i, j] = 1 + <R_i q_i/|q_i|, R_j k_j/|k_j|>, in [0, 2]."""
    qh = _unit_rotated(q, rope)
    kh = _unit_rotated(k, rope)
    return 1.0 + qh @ np.swapaxes(kh, -1, -2)


def cosine_linear_attention_naive(q, k, v, rope: RoPEConfig | None = None) -> np.ndarray:
    """Direct O(n^2) evaluation with explicit per-pair cosine similarities."""
    _check_qkv(q, k, v)
    sim = cosine_similarity_matrix(q, k, rope)
    den = sim.sum(axis=-1)
    _raise_if_degenerate(den)
    return (sim @ v) / den[..., None]


class LinearAttentionState:
    """Streaming accumulators for cosine linear attention.

    Holds S = sum k_j^T v_j, z = sum k_j, vsum = sum v_j over unit (and
    optionally rotated) keys. Single owner while ingesting.
    """

    def __init__(self, d: int, d_v: int, batch_shape=(), dtype=np.float64):
        self.S = np.zeros(tuple(batch_shape) + (d, d_v), dtype=dtype)
        self.z = np.zeros(tuple(batch_shape) + (d,), dtype=dtype)
        self.vsum = np.zeros(tuple(batch_shape) + (d_v,), dtype=dtype)
        self.count = 0

    def ingest(self, k_unit, v):
        """Add already-normalized keys ``k_unit`` (..., m, d) with values (..., m, d_v)."""
        self.S += np.swapaxes(k_unit, -1, -2) @ v
        self.z += k_unit.sum(axis=-2)
        self.vsum += v.sum(axis=-2)
        self.count += k_unit.shape[-2]

    def query(self, q_unit) -> np.ndarray:
        num = self.vsum[..., None, :] + q_unit @ self.S
        den = self.count + np.einsum("...nd,...d->...n", q_unit, self.z)
        _raise_if_degenerate(den)
        return num / den[..., None]


def cosine_linear_attention_fast(q, k, v, rope: RoPEConfig | None = None) -> np.ndarray:
    """(vsum + q^ S) / (n + q^ z) with the key sums built once and shared by every query."""
    _check_qkv(q, k, v)
    qh = _unit_rotated(q, rope)
    kh = _unit_rotated(k, rope)
    state = LinearAttentionState(q.shape[-1], v.shape[-1], q.shape[:-2], dtype=np.result_type(qh, v))
    state.ingest(kh, v)
    return state.query(qh)


def temporal_attention_over_frames(x, rope: RoPEConfig | None = None) -> np.ndarray:
    """Self-attention along the frame axis of x (N, tokens, d), independently per token.

    RoPE positions are the frame indices unless ``rope.positions`` says otherwise.
    """
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] < 1:
        raise ShapeError(f"expected (N, tokens, d) with N >= 1, got {x.shape}")
    if rope is None:
        rope = RoPEConfig(dim=x.shape[-1])
    per_token = np.swapaxes(x, 0, 1)  # (tokens, N, d)
    out = cosine_linear_attention_fast(per_token, per_token, per_token, rope)
    return np.swapaxes(out, 0, 1)


@dataclass(frozen=True)
class RopeWitness:
    q: np.ndarray
    k: np.ndarray
    positions: tuple[int, int]
    inner_product: float
    trial: int


def rotated_inner_product(q, k, pos_q, pos_k, base: float = 10000.0) -> float:
    d = q.shape[-1]
    rq = apply_rope(q[None, :], RoPEConfig(d, base, np.array([pos_q])))[0]
    rk = apply_rope(k[None, :], RoPEConfig(d, base, np.array([pos_k])))[0]
    return float(rq @ rk)


def demonstrate_rope_relu_negativity(rng: Rng, d: int, trials: int, max_position: int = 4096, base: float = 10000.0) -> RopeWitness:
    """Search for nonnegative ReLU features whose RoPE-rotated inner product is negative."""
    if d <= 0 or d % 2:
        raise ShapeError(f"d must be even and positive, got {d}")
    for trial in range(trials):
        fq = np.maximum(randn(rng, (d,)), 0.0)
        fk = np.maximum(randn(rng, (d,)), 0.0)
        i, j = (int(p) for p in rng.integers(0, max_position - 1, size=2))
        ip = rotated_inner_product(fq, fk, i, j, base)
        if ip < 0:
            return RopeWitness(fq, fk, (i, j), ip, trial)
    raise SearchExhaustedError(f"no negative rotated inner product in {trials} trials")
