"""Graph convolution over image patches.

A feature map is split into a k x k grid of patch tensors (row-major position
ids), every patch goes through one shared conv (or transposed conv) + ReLU,
and the activated patch stack is then mixed by a normalized patch-relation
adjacency matrix before being reassembled into a feature map:

    out = merge( A_normalized . relu(conv_shared(split(x))) )

`RegionRelationBlock` sums three such layers at splits 1x1 (image level),
2x2 (object level) and 8x8 (patch level).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import Tensor, conv2d, deconv2d, he_uniform, matmul, relu, reshape, transpose, zeros

RRMB_SPLITS = (1, 2, 8)


@dataclass(frozen=True)
class PatchSplitSpec:
    """k x k grid over a feature map; both spatial dims must divide by k."""

    k: int
    feature_height: int
    feature_width: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"grid side k must be >= 1, got {self.k}")
        if self.feature_height % self.k or self.feature_width % self.k:
            raise ValueError(
                f"feature size {self.feature_height}x{self.feature_width} "
                f"not divisible by k={self.k}"
            )

    @property
    def num_patches(self) -> int:
        return self.k * self.k

    @property
    def patch_height(self) -> int:
        return self.feature_height // self.k

    @property
    def patch_width(self) -> int:
        return self.feature_width // self.k


def split_patches(feature: Tensor, spec: PatchSplitSpec) -> Tensor:
    """[N,C,H,W] -> [P,N,C,H/k,W/k] with row-major patch position ids."""
    n, c, h, w = feature.shape
    if h != spec.feature_height or w != spec.feature_width:
        raise ValueError(f"feature {h}x{w} does not match split spec "
                         f"{spec.feature_height}x{spec.feature_width}")
    k, ph, pw = spec.k, spec.patch_height, spec.patch_width
    x = reshape(feature, (n, c, k, ph, k, pw))
    x = transpose(x, (2, 4, 0, 1, 3, 5))
    return reshape(x, (spec.num_patches, n, c, ph, pw))


def merge_patches(patches: Tensor, spec: PatchSplitSpec) -> Tensor:
    """Exact inverse of split_patches (for the patch sizes at hand)."""
    if patches.shape[0] != spec.num_patches:
        raise ValueError(f"expected {spec.num_patches} patches, got {patches.shape[0]}")
    p, n, c, ph, pw = patches.shape
    k = spec.k
    x = reshape(patches, (k, k, n, c, ph, pw))
    x = transpose(x, (2, 3, 0, 4, 1, 5))
    return reshape(x, (n, c, k * ph, k * pw))


# ---------------------------------------------------------------------------
# adjacency


@dataclass
class AdjacencyMatrix:
    """Raw binary patch links plus the symmetric-normalized form.

    raw is P x P, symmetric, zero-diagonal, entries in {0,1}. normalized is
    D^-1/2 (raw + I) D^-1/2 with D the degree matrix of raw + I.
    """

    raw: np.ndarray
    normalized: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        _validate_raw(self.raw)
        if self.normalized is None:
            self.normalized = normalize_adjacency(self.raw)

    @property
    def num_patches(self) -> int:
        return self.raw.shape[0]

    def to_text(self, path):
        save_matrix_txt(path, self.raw)

    @classmethod
    def from_text(cls, path) -> "AdjacencyMatrix":
        return cls(load_matrix_txt(path))


def _validate_raw(raw: np.ndarray):
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValueError(f"adjacency must be square, got {raw.shape}")
    if not np.array_equal(raw, raw.T):
        raise ValueError("raw adjacency must be symmetric")
    if np.any(np.diag(raw) != 0):
        raise ValueError("raw adjacency must have a zero diagonal")
    if not np.all(np.isin(raw, (0.0, 1.0))):
        raise ValueError("raw adjacency entries must be 0 or 1")


def normalize_adjacency(raw: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^-1/2 (raw + I) D^-1/2."""
    raw = np.asarray(raw, dtype=np.float64)
    _validate_raw(raw)
    a_hat = raw + np.eye(raw.shape[0])
    d = a_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return (a_hat * inv_sqrt[:, None]) * inv_sqrt[None, :]


def build_adjacency(spec: PatchSplitSpec, mean_image: np.ndarray | None = None,
                    sim_threshold: float | None = None, use_symmetry: bool = True,
                    au_pairs: tuple = ()) -> AdjacencyMatrix:
    """Construct patch links from any of three rules.

    (a) left/right mirror symmetry of the grid, (b) cosine similarity of the
    flattened mean-image patches >= sim_threshold, (c) a static list of
    attribute-related patch index pairs. The similarity rule is enabled by
    passing sim_threshold, which then requires mean_image.
    """
    k = spec.k
    p = spec.num_patches
    raw = np.zeros((p, p), dtype=np.float64)

    if use_symmetry:
        for r in range(k):
            for c in range(k):
                c2 = k - 1 - c
                if c2 != c:
                    i, j = r * k + c, r * k + c2
                    raw[i, j] = raw[j, i] = 1.0

    if sim_threshold is not None:
        if not -1.0 <= sim_threshold <= 1.0:
            raise ValueError(f"sim_threshold must be in [-1, 1], got {sim_threshold}")
        if mean_image is None:
            raise ValueError("mean_image is required when sim_threshold is set")
        flats = _mean_image_patches(np.asarray(mean_image, dtype=np.float64), k)
        norms = np.linalg.norm(flats, axis=1)
        for i in range(p):
            for j in range(i + 1, p):
                denom = norms[i] * norms[j]
                cos = float(flats[i] @ flats[j] / denom) if denom > 0 else 0.0
                # tiny slack so identical patches (cosine 1 up to rounding)
                # pass a threshold of exactly 1
                if cos >= sim_threshold - 1e-12:
                    raw[i, j] = raw[j, i] = 1.0

    for i, j in au_pairs:
        if not (0 <= i < p and 0 <= j < p):
            raise ValueError(f"au pair ({i},{j}) out of range for {p} patches")
        if i != j:
            raw[i, j] = raw[j, i] = 1.0

    np.fill_diagonal(raw, 0.0)
    return AdjacencyMatrix(raw)


def _mean_image_patches(mean_image: np.ndarray, k: int) -> np.ndarray:
    if mean_image.ndim != 3:
        raise ValueError(f"mean_image must be C,H,W, got shape {mean_image.shape}")
    c, h, w = mean_image.shape
    if h % k or w % k:
        raise ValueError(f"mean_image {h}x{w} not divisible by k={k}")
    ph, pw = h // k, w // k
    x = mean_image.reshape(c, k, ph, k, pw).transpose(1, 3, 0, 2, 4)
    return x.reshape(k * k, c * ph * pw)


def spectral_radius(m: np.ndarray, iters: int = 200) -> float:
    """Power iteration estimate of the dominant |eigenvalue|."""
    m = np.asarray(m, dtype=np.float64)
    v = np.ones(m.shape[0]) / np.sqrt(m.shape[0])
    lam = 0.0
    for _ in range(iters):
        nv = m @ v
        norm = np.linalg.norm(nv)
        if norm == 0:
            return 0.0
        v = nv / norm
        lam = float(v @ (m @ v))
    return abs(lam)


def save_matrix_txt(path, m: np.ndarray):
    """One row per line, space-separated, full precision."""
    m = np.asarray(m)
    lines = [" ".join(repr(float(x)) for x in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix_txt(path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().strip().splitlines():
        rows.append([float(tok) for tok in line.split()])
    m = np.asarray(rows, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"matrix file {path} is not rectangular")
    return m


# ---------------------------------------------------------------------------
# layers


class PatchGraphConv:
    """One graph-convolution layer over patch tensors.

    A single shared (weight, bias) pair transforms every patch; mode picks
    conv or transposed conv. ReLU is applied before adjacency mixing.
    """

    def __init__(self, spec: PatchSplitSpec, adjacency: AdjacencyMatrix,
                 in_channels: int, out_channels: int, kernel_size: int,
                 mode: str = "conv", stride: int = 1, padding: int | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if mode not in ("conv", "deconv"):
            raise ValueError(f"mode must be conv or deconv, got {mode!r}")
        if adjacency.num_patches != spec.num_patches:
            raise ValueError(
                f"adjacency is {adjacency.num_patches} patches but split spec "
                f"has {spec.num_patches}"
            )
        self.spec = spec
        self.adjacency = adjacency
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.mode = mode
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        if mode == "conv":
            wshape = (out_channels, in_channels, kernel_size, kernel_size)
        else:
            wshape = (in_channels, out_channels, kernel_size, kernel_size)
        self.weight = he_uniform(wshape, fan_in, rng, dtype=dtype)
        self.bias = zeros((out_channels,), dtype=dtype, requires_grad=True)
        self._mix = Tensor(adjacency.normalized.astype(dtype))

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def forward(self, feature: Tensor) -> Tensor:
        spec = self.spec
        if feature.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {feature.shape[1]}")
        patches = split_patches(feature, spec)
        p, n, c, ph, pw = patches.shape
        flat_batch = reshape(patches, (p * n, c, ph, pw))
        if self.mode == "conv":
            h = conv2d(flat_batch, self.weight, self.bias, self.stride, self.padding)
        else:
            h = deconv2d(flat_batch, self.weight, self.bias, self.stride, self.padding)
        h = relu(h)
        oh, ow = h.shape[2], h.shape[3]
        stack = reshape(h, (p, n, self.out_channels, oh, ow))
        mixed = reshape(matmul(self._as_mix(stack.dtype), reshape(stack, (p, -1))), stack.shape)
        out_spec = PatchSplitSpec(spec.k, spec.k * oh, spec.k * ow)
        return merge_patches(mixed, out_spec)

    def _as_mix(self, dtype) -> Tensor:
        if self._mix.dtype != dtype:
            self._mix = Tensor(self.adjacency.normalized.astype(dtype))
        return self._mix

    def __call__(self, feature: Tensor) -> Tensor:
        return self.forward(feature)


def igcn_forward(layer: PatchGraphConv, feature: Tensor) -> Tensor:
    return layer.forward(feature)


class RegionRelationBlock:
    """Pixel-wise sum of patch-graph convolutions at 1x1, 2x2 and 8x8 splits."""

    def __init__(self, branch_1x1: PatchGraphConv, branch_2x2: PatchGraphConv,
                 branch_8x8: PatchGraphConv):
        branches = (branch_1x1, branch_2x2, branch_8x8)
        for b, k in zip(branches, RRMB_SPLITS):
            if b.spec.k != k:
                raise ValueError(f"branch split {b.spec.k} does not match required {k}")
        ref = branches[0]
        for b in branches[1:]:
            same = (b.in_channels == ref.in_channels and b.out_channels == ref.out_channels
                    and b.mode == ref.mode and b.stride == ref.stride
                    and b.kernel_size == ref.kernel_size and b.padding == ref.padding
                    and (b.spec.feature_height, b.spec.feature_width)
                    == (ref.spec.feature_height, ref.spec.feature_width))
            if not same:
                raise ValueError("region block branches must share channels, kernel, "
                                 "stride, mode, padding and feature size")
        self.branch_1x1, self.branch_2x2, self.branch_8x8 = branches

    def parameters(self) -> list[Tensor]:
        return (self.branch_1x1.parameters() + self.branch_2x2.parameters()
                + self.branch_8x8.parameters())

    def forward(self, feature: Tensor) -> Tensor:
        a = self.branch_1x1(feature)
        b = self.branch_2x2(feature)
        c = self.branch_8x8(feature)
        if not (a.shape == b.shape == c.shape):
            raise ValueError(f"branch outputs differ in shape: {a.shape}, {b.shape}, {c.shape}")
        return a + b + c

    def __call__(self, feature: Tensor) -> Tensor:
        return self.forward(feature)


def rrmb_forward(block: RegionRelationBlock, feature: Tensor) -> Tensor:
    return block.forward(feature)


def make_region_block(feature_height: int, feature_width: int, in_channels: int,
                      out_channels: int, kernel_size: int, rng: np.random.Generator,
                      adjacency_for_k, mode: str = "conv", stride: int = 1,
                      padding: int | None = None, dtype=np.float32) -> RegionRelationBlock:
    """Build the three branches with per-split adjacencies from adjacency_for_k(k)."""
    branches = []
    for k in RRMB_SPLITS:
        spec = PatchSplitSpec(k, feature_height, feature_width)
        branches.append(PatchGraphConv(spec, adjacency_for_k(k), in_channels,
                                       out_channels, kernel_size, mode=mode,
                                       stride=stride, padding=padding, rng=rng, dtype=dtype))
    return RegionRelationBlock(*branches)


def default_au_patch_pairs(k: int = 8) -> tuple:
    """Static attribute-region links for the 8x8 split of a centered face.

    Pairs tie together the two eye regions, eyes with the brows above them,
    the mouth corners, and the nose with the mouth, mirroring how facial
    attributes co-occur across regions.
    """
    if k != 8:
        return ()

    def pid(r, c):
        return r * 8 + c

    pairs = [
        (pid(3, 2), pid(3, 5)),  # left eye <-> right eye
        (pid(3, 2), pid(2, 2)),  # left eye <-> left brow
        (pid(3, 5), pid(2, 5)),  # right eye <-> right brow
        (pid(2, 2), pid(2, 5)),  # brow <-> brow
        (pid(5, 2), pid(5, 5)),  # mouth corners
        (pid(4, 3), pid(5, 3)),  # nose <-> mouth (left of center)
        (pid(4, 4), pid(5, 4)),  # nose <-> mouth (right of center)
    ]
    return tuple(pairs)
