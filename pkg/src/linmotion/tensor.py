"""Dense tensor substrate: seeded RNG, ordered matmul and the TensorFile format.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order. ``float64``
is the working dtype; ``float32`` is only used on the benchmark path.

TensorFile layout (all integers little-endian)::

    magic    8 bytes   b"MKTENSR\\0"
    dtype    1 byte    1 = f32, 2 = f64
    rank     1 byte
    extents  rank x u64
    payload  row-major values, little-endian
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"MKTENSR\x00"
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_OF = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}

# Caps a single allocation made through ``randn``; guards against overflowing extents.
_MAX_ELEMENTS = 1 << 40


class Rng:
    """Counter-based generator (Philox-4x64) with explicit seed splitting.

    Uniforms come from ``numpy.random.Philox`` keyed by ``seed``; normals use
    Box-Muller over that uniform stream, so the output is a pure function of
    the seed and the call sequence.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def split(self, index: int) -> "Rng":
        """Independent child stream number ``index``; does not advance this stream."""
        state = np.random.SeedSequence([self.seed, int(index)]).generate_state(1, np.uint64)
        return Rng(int(state[0]))

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in the closed range [low, high]."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def normal(self, shape) -> np.ndarray:
        return randn(self, shape)


def _check_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ShapeError(f"extents must be positive, got {shape}")
    if math.prod(shape) > _MAX_ELEMENTS:
        raise ShapeError(f"shape {shape} exceeds {_MAX_ELEMENTS} elements")
    return shape


def randn(rng: Rng, shape) -> np.ndarray:
    """Standard normal samples (float64) by Box-Muller over the rng's uniforms."""
    shape = _check_shape(shape)
    n = math.prod(shape)
    pairs = (n + 1) // 2
    u = rng.uniform(2 * pairs).reshape(pairs, 2)
    # Transcendentals go through libm one element at a time: numpy's vectorized
    # log1p/cos/sin dispatch to CPU-specific SIMD kernels whose last bit varies.
    log_term = np.fromiter(map(math.log1p, -u[:, 0]), np.float64, pairs)  # log(1 - u), 1 - u in (0, 1]
    radius = np.sqrt(-2.0 * log_term)
    angle = 2.0 * np.pi * u[:, 1]
    out = np.empty((pairs, 2))
    out[:, 0] = radius * np.fromiter(map(math.cos, angle), np.float64, pairs)
    out[:, 1] = radius * np.fromiter(map(math.sin, angle), np.float64, pairs)
    return out.reshape(-1)[:n].reshape(shape)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2-D product accumulated in index order k = 0..K-1, in the operands' dtype.

    Each step is a separate multiply and add, so the result is bitwise equal to
    the textbook triple loop. Use ``@`` where speed matters more than ordering.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    dtype = np.result_type(a, b)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=dtype)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1].astype(dtype) * b[k : k + 1, :].astype(dtype)
    return out


def save_tensor(path, t: np.ndarray) -> None:
    t = np.asarray(t)
    code = _CODE_OF.get(t.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {t.dtype}")
    if t.ndim > 255:
        raise FormatError("rank exceeds 255")
    header = MAGIC + struct.pack("<BB", code, t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = np.ascontiguousarray(t, dtype=DTYPE_CODES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    return tensor_from_bytes(raw, source=os.fspath(path))


def tensor_from_bytes(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 10 or raw[:8] != MAGIC:
        raise FormatError(f"{source}: bad magic")
    code, rank = struct.unpack_from("<BB", raw, 8)
    if code not in DTYPE_CODES:
        raise FormatError(f"{source}: unknown dtype code {code}")
    offset = 10 + 8 * rank
    if len(raw) < offset:
        raise FormatError(f"{source}: truncated header")
    shape = struct.unpack_from(f"<{rank}Q", raw, 10)
    dtype = DTYPE_CODES[code]
    count = math.prod(shape)
    expected = count * dtype.itemsize
    if len(raw) - offset != expected:
        raise FormatError(
            f"{source}: payload is {len(raw) - offset} bytes, extents {shape} need {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
