"""Block-based compressed sensing: partition, ratio-truncated sampling,
binary quantization with straight-through gradients, measurement
serialization/interpolation, and sampling-matrix diagnostics.

One learnable base matrix of size B^2 x B^2 serves every sampling ratio:
the matrix for ratio gamma is its first M = round(gamma * B^2) rows, so
matrices for all ratios nest as prefixes of each other.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import interp
from .autodiff import Tensor, as_tensor, concat, matmul, reshape, take, transpose

MEAS_MAGIC = b"TCLM"
MEAS_VERSION = 1


class FormatError(ValueError):
    """Raised on malformed container files."""


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def matrix_digest(phi_m) -> int:
    """64-bit FNV-1a over the raw little-endian float32 bytes."""
    a = phi_m.data if isinstance(phi_m, Tensor) else np.asarray(phi_m)
    return fnv1a64(np.ascontiguousarray(a, dtype="<f4").tobytes())


# -- domain types ------------------------------------------------------


@dataclass
class SamplingBaseMatrix:
    """Learnable B^2 x B^2 base; ``mode`` selects float or binary sensing."""

    phi: Tensor
    block_size: int
    mode: str = "float"

    def __post_init__(self):
        b2 = self.block_size**2
        if self.phi.shape != (b2, b2):
            raise ValueError(f"base matrix must be {b2}x{b2}, got {self.phi.shape}")
        if self.mode not in ("float", "binary"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")

    def effective(self) -> Tensor:
        """Forward matrix: the raw base, or its sign-binarized version."""
        return binarize(self.phi) if self.mode == "binary" else self.phi

    @staticmethod
    def initialize(block_size: int, mode: str = "float", rng: np.random.RandomState | None = None):
        """Zero-mean Gaussian init with variance 1/B^2."""
        rng = rng or np.random.RandomState(0)
        b2 = block_size**2
        phi = Tensor(rng.normal(0.0, 1.0 / block_size, size=(b2, b2)).astype(np.float32),
                     requires_grad=True)
        return SamplingBaseMatrix(phi, block_size, mode)


@dataclass
class BlockSequence:
    """Vectorized non-overlapping blocks, one B^2 x L matrix per channel."""

    blocks: Tensor  # (C, B^2, L)
    grid: tuple[int, int]
    channels: int

    @property
    def length(self) -> int:
        return self.grid[0] * self.grid[1]

    def channel(self, c: int) -> Tensor:
        return take(self.blocks, (c, slice(None), slice(None)))


@dataclass
class MeasurementSequence:
    """Serialized CS measurements with grid metadata and matrix provenance."""

    y: Tensor  # (C, M, L)
    m: int
    block_size: int
    grid: tuple[int, int]
    channels: int
    matrix_digest: int = 0

    @property
    def length(self) -> int:
        return self.grid[0] * self.grid[1]

    def channel(self, c: int) -> Tensor:
        return take(self.y, (c, slice(None), slice(None)))


# -- operations --------------------------------------------------------


def binarize(a) -> Tensor:
    """Sign quantization to {-1, +1} (>= 0 maps to +1) with a
    straight-through backward: pass-through inside [-1, 1], zero outside."""
    a = as_tensor(a)
    out = Tensor(np.where(a.data >= 0, 1.0, -1.0).astype(a.dtype), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accum(g * ((a.data >= -1) & (a.data <= 1)))

    out._backward = bwd
    return out


def partition(image, block_size: int) -> BlockSequence:
    """Split a C x H x W image into raster-order vectorized blocks."""
    image = as_tensor(image)
    if image.data.ndim != 3:
        raise ValueError(f"partition: expected C x H x W, got shape {image.shape}")
    c, h, w = image.shape
    b = block_size
    if h % b or w % b:
        raise ValueError(
            f"partition: {h}x{w} not divisible by block size {b}; pad the image to a multiple first")
    gh, gw = h // b, w // b
    x = reshape(image, (c, gh, b, gw, b))
    x = transpose(x, (0, 1, 3, 2, 4))          # (C, gh, gw, b, b)
    x = reshape(x, (c, gh * gw, b * b))
    x = transpose(x, (0, 2, 1))                # (C, B^2, L)
    return BlockSequence(x, (gh, gw), c)


def assemble(blocks: BlockSequence, block_size: int) -> Tensor:
    """Inverse of partition; returns the C x H x W image."""
    b = block_size
    gh, gw = blocks.grid
    c = blocks.channels
    x = transpose(blocks.blocks, (0, 2, 1))    # (C, L, B^2)
    x = reshape(x, (c, gh, gw, b, b))
    x = transpose(x, (0, 1, 3, 2, 4))
    return reshape(x, (c, gh * b, gw * b))


def ratio_to_m(gamma: float, block_size: int) -> int:
    """M = clamp(round(gamma * B^2), 1, B^2); admissible ratios are {1/B^2 .. 1}."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"sampling ratio must be in (0, 1], got {gamma}")
    b2 = block_size**2
    return min(max(int(round(gamma * b2)), 1), b2)


def truncate_sampling(base: SamplingBaseMatrix, m: int) -> Tensor:
    """First m rows of the effective (binarized if binary) base matrix."""
    b2 = base.block_size**2
    if not 1 <= m <= b2:
        raise ValueError(f"measurement count {m} outside [1, {b2}]")
    return take(base.effective(), (slice(0, m), slice(None)))


def sample(x: BlockSequence, phi_m: Tensor) -> MeasurementSequence:
    """Per channel, Y = Phi X; differentiable wrt both Phi and the blocks."""
    phi_m = as_tensor(phi_m)
    m, b2 = phi_m.shape
    if x.blocks.shape[1] != b2:
        raise ValueError(
            f"sample: block length {x.blocks.shape[1]} does not match matrix width {b2}")
    per_channel = [reshape(matmul(phi_m, x.channel(c)), (1, m, x.length))
                   for c in range(x.channels)]
    y = concat(per_channel, axis=0) if x.channels > 1 else per_channel[0]
    b = int(round(b2**0.5))
    return MeasurementSequence(y, m, b, x.grid, x.channels, matrix_digest(phi_m))


def interpolate_measurements(y: MeasurementSequence, new_grid) -> MeasurementSequence:
    """Bilinearly resize each of the M measurement maps to the new grid.

    Only the measurement rasters are touched; no image-domain data enters.
    """
    new_grid = (int(new_grid[0]), int(new_grid[1]))
    if min(new_grid) < 1:
        raise ValueError(f"interpolate_measurements: bad grid {new_grid}")
    if new_grid == y.grid:
        return MeasurementSequence(y.y, y.m, y.block_size, y.grid, y.channels, y.matrix_digest)
    r = interp.grid_matrix(new_grid, y.grid, kind="linear")
    rt = Tensor(r.T.astype(np.float32))
    nl = new_grid[0] * new_grid[1]
    per_channel = [reshape(matmul(y.channel(c), rt), (1, y.m, nl)) for c in range(y.channels)]
    out = concat(per_channel, axis=0) if y.channels > 1 else per_channel[0]
    return MeasurementSequence(out, y.m, y.block_size, new_grid, y.channels, y.matrix_digest)


def orthogonality_diagnostic(phi_m) -> tuple[float, float]:
    """(mean diagonal of Phi Phi^T, off-diagonal Frobenius fraction)."""
    a = (phi_m.data if isinstance(phi_m, Tensor) else np.asarray(phi_m)).astype(np.float64)
    g = a @ a.T
    lam = float(np.mean(np.diag(g)))
    total = float(np.linalg.norm(g))
    off = g - np.diag(np.diag(g))
    return lam, (float(np.linalg.norm(off)) / total if total > 0 else 0.0)


# -- measurement container file ----------------------------------------


def write_measurements(path, y: MeasurementSequence) -> None:
    data = np.ascontiguousarray(y.y.data, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MEAS_MAGIC)
        f.write(struct.pack("<IIIIII", MEAS_VERSION, y.block_size, y.m,
                            y.grid[0], y.grid[1], y.channels))
        f.write(struct.pack("<Q", y.matrix_digest))
        f.write(data.tobytes())


def read_measurements(path) -> MeasurementSequence:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MEAS_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r} at offset 0")
    version, b, m, gh, gw, c = struct.unpack_from("<IIIIII", raw, 4)
    if version != MEAS_VERSION:
        raise FormatError(f"unsupported measurement container version {version}")
    (digest,) = struct.unpack_from("<Q", raw, 28)
    payload = raw[36:]
    n = c * m * gh * gw
    if len(payload) != 4 * n:
        raise FormatError(f"payload length {len(payload)} != {4 * n} at offset 36")
    y = np.frombuffer(payload, dtype="<f4").reshape(c, m, gh * gw)
    return MeasurementSequence(Tensor(y.copy()), m, b, (gh, gw), c, digest)
