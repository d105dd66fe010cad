"""Toy velocity-prediction transformer over (N, c, h, w) latents.

Per block: spatial ReLU linear attention inside each frame (no positional
encoding), temporal cosine linear attention across frames with RoPE on the
frame index, and a 2-layer MLP. Every sublayer is preceded by an AdaIN
layer whose scale/shift comes from the (timestep, bucket) embedding and is
shared by all frames. The output projection starts at zero.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..attention import EPS_DEN, EPS_NORM, RoPEConfig
from ..dynamics import NUM_BUCKETS
from ..errors import NumericalFailureError, ParameterError, ShapeError
from ..tensor import Rng, randn
from .autodiff import Tape, Var


@dataclass(frozen=True)
class DenoiserConfig:
    frames: int = 8
    channels: int = 1
    height: int = 16
    width: int = 16
    dim: int = 16
    blocks: int = 2
    patch: int = 2
    emb_dim: int = 16
    mlp_ratio: int = 2
    buckets: int = NUM_BUCKETS
    rope_base: float = 10000.0

    def __post_init__(self):
        if self.dim % 2:
            raise ParameterError(f"model dim must be even for RoPE, got {self.dim}")
        if self.emb_dim % 2:
            raise ParameterError(f"embedding dim must be even, got {self.emb_dim}")
        if self.buckets != NUM_BUCKETS:
            raise ParameterError(f"bucket count is fixed at {NUM_BUCKETS}")
        if self.height % self.patch or self.width % self.patch:
            raise ParameterError("latent extents must be divisible by the patch size")

    @property
    def latent_shape(self):
        return (self.frames, self.channels, self.height, self.width)

    @property
    def tokens(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch * self.patch

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    d, e, h = cfg.dim, cfg.emb_dim, cfg.dim * cfg.mlp_ratio
    shapes = {
        "in.w": (cfg.patch_dim, d),
        "t_mlp.w1": (e, e),
        "t_mlp.b1": (e,),
        "t_mlp.w2": (e, e),
        "t_mlp.b2": (e,),
        "b_mlp.w1": (e, e),
        "b_mlp.b1": (e,),
        "b_mlp.w2": (e, e),
        "b_mlp.b2": (e,),
    }
    for i in range(cfg.blocks):
        p = f"blocks.{i}."
        shapes[p + "ada.w"] = (e, 6 * d)
        shapes[p + "ada.b"] = (6 * d,)
        for attn in ("spatial", "temporal"):
            for m in ("wq", "wk", "wv", "wo"):
                shapes[f"{p}{attn}.{m}"] = (d, d)
        shapes[p + "mlp.w1"] = (d, h)
        shapes[p + "mlp.b1"] = (h,)
        shapes[p + "mlp.w2"] = (h, d)
    shapes["final_ada.w"] = (e, 2 * d)
    shapes["final_ada.b"] = (2 * d,)
    shapes["out.w"] = (d, cfg.patch_dim)
    shapes["out.b"] = (cfg.patch_dim,)
    return shapes


def param_count(cfg: DenoiserConfig) -> int:
    return sum(math.prod(s) for s in param_shapes(cfg).values())


def init_params(cfg: DenoiserConfig, rng: Rng, zero_out: bool = True) -> dict[str, np.ndarray]:
    """Scaled-normal weights, zero biases and AdaIN projections, zero output projection.

    ``zero_out=False`` draws every tensor randomly instead (used for gradient checks).
    """
    params = {}
    for i, (name, shape) in enumerate(param_shapes(cfg).items()):
        fan_in = shape[0] if len(shape) == 2 else 1
        zero = zero_out and (len(shape) == 1 or name.endswith("ada.w") or name.startswith("out."))
        if zero:
            params[name] = np.zeros(shape)
        else:
            scale = 1.0 / math.sqrt(fan_in) if len(shape) == 2 else 0.1
            params[name] = scale * randn(rng.split(i), shape)
    return params


def sinusoidal(value: float, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    angle = value * freqs
    return np.concatenate([np.cos(angle), np.sin(angle)])


def patchify(x: np.ndarray, cfg: DenoiserConfig) -> np.ndarray:
    n, c, h, w = x.shape
    p = cfg.patch
    x = x.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(n, (h // p) * (w // p), c * p * p)


def unpatchify(tokens: np.ndarray, cfg: DenoiserConfig) -> np.ndarray:
    n = tokens.shape[0]
    p, c = cfg.patch, cfg.channels
    hp, wp = cfg.height // p, cfg.width // p
    x = tokens.reshape(n, hp, wp, c, p, p).transpose(0, 3, 1, 4, 2, 5)
    return x.reshape(n, c, cfg.height, cfg.width)


def _mlp(tape: Tape, P, prefix, x):
    h = tape.relu(x @ P[prefix + "w1"] + P[prefix + "b1"]) @ P[prefix + "w2"]
    b2 = P.get(prefix + "b2")
    return h if b2 is None else h + b2


def embed_condition(tape: Tape, P, cfg: DenoiserConfig, t: float, b: int | None) -> Var:
    """MLP(sinusoid(1000 t)) + MLP(sinusoid(b)); b=None is the null condition (zero bucket term)."""
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must be in [0, 1], got {t}")
    emb = _mlp(tape, P, "t_mlp.", tape.const(sinusoidal(1000.0 * t, cfg.emb_dim)))
    if b is not None:
        if not 0 <= int(b) < cfg.buckets or int(b) != b:
            raise ParameterError(f"bucket must be an integer in [0, {cfg.buckets - 1}], got {b}")
        emb = emb + _mlp(tape, P, "b_mlp.", tape.const(sinusoidal(float(b), cfg.emb_dim)))
    return emb


def _modulation(tape: Tape, P, prefix, emb, count, d):
    """Split relu(emb) @ W + b into ``count`` (gamma, beta) pairs of width d."""
    mod = tape.relu(emb) @ P[prefix + "w"] + P[prefix + "b"]
    return [(mod[2 * i * d : (2 * i + 1) * d], mod[(2 * i + 1) * d : (2 * i + 2) * d]) for i in range(count)]


def spatial_relu_attention(tape: Tape, q, k, v):
    """Per-frame linear attention with phi = ReLU; (N, T, d) inputs, eps added to the denominator."""
    fq, fk = tape.relu(q), tape.relu(k)
    kv = tape.transpose(fk, (0, 2, 1)) @ v  # (N, d, d)
    ksum = tape.sum(fk, axis=1, keepdims=True)  # (N, 1, d)
    den = tape.sum(fq * ksum, axis=-1, keepdims=True) + EPS_DEN
    return (fq @ kv) / den


def temporal_cosine_attention(tape: Tape, q, k, v, cos, sin):
    """Cosine linear attention across frames, per token; inputs (T, N, d), RoPE on the frame axis."""
    qh = tape.rope(tape.unit(q, EPS_NORM), cos, sin)
    kh = tape.rope(tape.unit(k, EPS_NORM), cos, sin)
    n = q.shape[-2]
    kv = tape.transpose(kh, (0, 2, 1)) @ v  # (T, d, d)
    ksum = tape.sum(kh, axis=1, keepdims=True)  # (T, 1, d)
    vsum = tape.sum(v, axis=1, keepdims=True)  # (T, 1, d)
    num = vsum + qh @ kv
    den = tape.sum(qh * ksum, axis=-1, keepdims=True) + float(n)
    return num / den


def _rope_tables(cfg: DenoiserConfig):
    theta = RoPEConfig(cfg.dim, cfg.rope_base).angles(cfg.frames)  # (N, d/2)
    return np.cos(theta), np.sin(theta)


def _check_finite(var: Var, where: str, index=None):
    if not np.all(np.isfinite(var.value)):
        raise NumericalFailureError(f"non-finite activations in {where}", index=index)


def forward(params, cfg: DenoiserConfig, x_t, t: float, b: int | None, tape: Tape | None = None) -> Var:
    """Velocity prediction for every frame of X_t, shape (N, c, h, w), as a tape node.

    Without a tape the parameters enter as constants and nothing is recorded.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != cfg.latent_shape:
        raise ShapeError(f"input {x_t.shape} does not match config {cfg.latent_shape}")
    record = tape is not None
    tape = tape or Tape()
    P = {name: (tape.param(name, value) if record else tape.const(value)) for name, value in params.items()}
    d = cfg.dim
    cos, sin = _rope_tables(cfg)

    emb = embed_condition(tape, P, cfg, t, b)
    # No input or MLP-output biases: a per-channel constant over tokens is
    # removed by the next token-axis normalization, so it could never be learned.
    h = tape.const(patchify(x_t, cfg)) @ P["in.w"]  # (N, T, d)
    for i in range(cfg.blocks):
        p = f"blocks.{i}."
        (g1, b1), (g2, b2), (g3, b3) = _modulation(tape, P, p + "ada.", emb, 3, d)

        a = tape.adain(h, g1, b1)
        att = spatial_relu_attention(tape, a @ P[p + "spatial.wq"], a @ P[p + "spatial.wk"], a @ P[p + "spatial.wv"])
        h = h + att @ P[p + "spatial.wo"]

        a = tape.transpose(tape.adain(h, g2, b2), (1, 0, 2))  # (T, N, d)
        att = temporal_cosine_attention(
            tape, a @ P[p + "temporal.wq"], a @ P[p + "temporal.wk"], a @ P[p + "temporal.wv"], cos, sin
        )
        h = h + tape.transpose(att, (1, 0, 2)) @ P[p + "temporal.wo"]

        a = tape.adain(h, g3, b3)
        h = h + _mlp(tape, P, p + "mlp.", a)
        _check_finite(h, f"block {i}", index=i)

    ((gf, bf),) = _modulation(tape, P, "final_ada.", emb, 1, d)
    out = tape.adain(h, gf, bf) @ P["out.w"] + P["out.b"]  # (N, T, patch_dim)
    n, tokens, pd = out.shape
    p, c = cfg.patch, cfg.channels
    hp, wp = cfg.height // p, cfg.width // p
    out = tape.reshape(out, (n, hp, wp, c, p, p))
    out = tape.transpose(out, (0, 3, 1, 4, 2, 5))
    out = tape.reshape(out, cfg.latent_shape)
    _check_finite(out, "output projection")
    return out


def predict(params, cfg: DenoiserConfig, x_t, t: float, b: int | None) -> np.ndarray:
    return forward(params, cfg, x_t, t, b).value


def residual_loss(tape: Tape, v_pred: Var, target_v) -> Var:
    """Mean squared velocity error on the residual frames (frame 0 is dropped)."""
    diff = v_pred[1:] - tape.const(target_v)
    return tape.mean(diff * diff)


def loss_and_grads(params, cfg: DenoiserConfig, x_t, target_v, t: float, b: int | None):
    tape = Tape()
    v = forward(params, cfg, x_t, t, b, tape)
    loss = residual_loss(tape, v, target_v)
    return float(loss.value), tape.backward(loss)
