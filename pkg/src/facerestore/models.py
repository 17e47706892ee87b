"""The three networks: restoration generator, discriminator, attribute classifier.

The generator maps a degraded s x s image to an 8s x 8s restoration: head conv,
a stack of region-relation blocks with additive skips, three x2 upsampling
stages (the last two as graph deconvs over the 2x2 split), and a sigmoid output
conv. The baseline generator swaps every region block for a plain residual
conv block and keeps everything else identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .graph import (
    AdjacencyMatrix, PatchGraphConv, PatchSplitSpec, RegionRelationBlock,
    RRMB_SPLITS, build_adjacency, default_au_patch_pairs, make_region_block,
)
from .tensor import (
    Tensor, concat_channels, conv2d, deconv2d, he_uniform, matmul, mean_hw,
    relu, reshape, sigmoid, zeros,
)


class Conv2dLayer:
    def __init__(self, cin, cout, k, stride=1, padding=None, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = he_uniform((cout, cin, k, k), cin * k * k, rng, dtype)
        self.bias = zeros((cout,), dtype=dtype, requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Deconv2dLayer:
    def __init__(self, cin, cout, k, stride, padding, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.weight = he_uniform((cin, cout, k, k), cin * k * k, rng, dtype)
        self.bias = zeros((cout,), dtype=dtype, requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return deconv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear:
    def __init__(self, cin, cout, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.weight = he_uniform((cin, cout), cin, rng, dtype)
        self.bias = zeros((cout,), dtype=dtype, requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return matmul(x, self.weight) + self.bias


class PlainConvBlock:
    """relu(conv(x)); with the generator's additive skip around it this is a
    standard residual block, the single-scale stand-in for a region block."""

    def __init__(self, channels, k, rng, dtype=np.float32):
        self.conv = Conv2dLayer(channels, channels, k, rng=rng, dtype=dtype)

    def parameters(self):
        return self.conv.parameters()

    def __call__(self, x):
        return relu(self.conv(x))


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 32
    n_rrmb: int = 3
    upsample_stages: int = 3
    kernel_size: int = 3
    sim_threshold: float | None = 0.9
    au_pairs: tuple = field(default_factory=lambda: default_au_patch_pairs(8))

    def __post_init__(self):
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")


def _build_adjacencies(cfg: GeneratorConfig, mean_image: np.ndarray | None):
    """One adjacency per split size; the cosine rule only runs with a mean image."""
    adjacencies = {}
    for k in RRMB_SPLITS:
        sim = cfg.sim_threshold if (mean_image is not None and k > 1) else None
        pairs = cfg.au_pairs if k == 8 else ()
        spec_side = mean_image.shape[1] if mean_image is not None else 8 * k
        spec = PatchSplitSpec(k, spec_side, spec_side)
        adjacencies[k] = build_adjacency(spec, mean_image=mean_image,
                                         sim_threshold=sim, use_symmetry=True,
                                         au_pairs=pairs)
    return adjacencies


class _GeneratorBase:
    """Shared topology: head, blocks with skips, upsampling, sigmoid output."""

    def __init__(self, cfg: GeneratorConfig, in_side: int, rng=None,
                 mean_image: np.ndarray | None = None,
                 adjacencies: dict[int, AdjacencyMatrix] | None = None,
                 dtype=np.float32):
        if in_side % 8:
            raise ValueError(f"input side must be divisible by 8, got {in_side}")
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.in_side = in_side
        self.dtype = dtype
        self.adjacencies = adjacencies or _build_adjacencies(cfg, mean_image)
        c = cfg.base_channels
        k = cfg.kernel_size
        self.head = Conv2dLayer(3, c, k, rng=rng, dtype=dtype)
        self.blocks = [self._make_block(in_side, c, k, rng) for _ in range(cfg.n_rrmb)]
        self.up_stages = []
        side = in_side
        cin = c
        for i in range(cfg.upsample_stages):
            # channels taper as resolution doubles to keep high-res convs cheap
            cout = max(cin // 2, 8) if cin > 8 else cin
            graph_stage = i >= cfg.upsample_stages - 2  # final two use graph deconv
            if graph_stage:
                spec = PatchSplitSpec(2, side, side)
                up = PatchGraphConv(spec, self.adjacencies[2], cin, cout, 4, mode="deconv",
                                    stride=2, padding=1, rng=rng, dtype=dtype)
            else:
                up = Deconv2dLayer(cin, cout, 4, 2, 1, rng=rng, dtype=dtype)
            side *= 2
            smooth = Conv2dLayer(cout, cout, k, rng=rng, dtype=dtype)
            self.up_stages.append((up, smooth, graph_stage))
            cin = cout
        self.out_side = side
        self.out_conv = Conv2dLayer(cin, 3, k, rng=rng, dtype=dtype)

    def _make_block(self, side, c, k, rng):
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        params = self.head.parameters()
        for b in self.blocks:
            params += b.parameters()
        for up, smooth, _ in self.up_stages:
            params += up.parameters() + smooth.parameters()
        return params + self.out_conv.parameters()

    def forward(self, degraded: Tensor) -> Tensor:
        if degraded.ndim != 4 or degraded.shape[1] != 3:
            raise ValueError(f"expected N,3,H,W input, got {degraded.shape}")
        if degraded.shape[2] != self.in_side or degraded.shape[3] != self.in_side:
            raise ValueError(f"generator built for {self.in_side}x{self.in_side} inputs, "
                             f"got {degraded.shape[2]}x{degraded.shape[3]}")
        if degraded.shape[2] % 8:
            raise ValueError("input spatial dims must be divisible by 8")
        x = relu(self.head(degraded))
        for block in self.blocks:
            x = x + block(x)
        for up, smooth, graph_stage in self.up_stages:
            x = up(x)
            if not graph_stage:
                x = relu(x)  # graph deconv already applies relu internally
            x = relu(smooth(x))
        return sigmoid(self.out_conv(x))

    def __call__(self, degraded: Tensor) -> Tensor:
        return self.forward(degraded)

    # -- persistence -------------------------------------------------------

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {f"param/{i:03d}": p.data for i, p in enumerate(self.parameters())}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]):
        params = self.parameters()
        for i, p in enumerate(params):
            a = arrays[f"param/{i:03d}"]
            if a.shape != p.data.shape:
                raise ValueError(f"param {i} shape {a.shape} != expected {p.data.shape}")
            p.data = a.astype(p.dtype, copy=True)

    def save(self, path, extra_arrays: dict | None = None, extra_meta: dict | None = None):
        arrays = self.param_arrays()
        for k, adj in self.adjacencies.items():
            arrays[f"adj/k{k}/raw"] = adj.raw
        if extra_arrays:
            arrays.update(extra_arrays)
        meta = {
            "kind": type(self).__name__,
            "in_side": self.in_side,
            "cfg": {
                "base_channels": self.cfg.base_channels,
                "n_rrmb": self.cfg.n_rrmb,
                "upsample_stages": self.cfg.upsample_stages,
                "kernel_size": self.cfg.kernel_size,
                "sim_threshold": self.cfg.sim_threshold,
                "au_pairs": [list(p) for p in self.cfg.au_pairs],
            },
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != cls.__name__:
            raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, "
                             f"expected {cls.__name__}")
        cfgd = meta["cfg"]
        cfg = GeneratorConfig(base_channels=cfgd["base_channels"], n_rrmb=cfgd["n_rrmb"],
                              upsample_stages=cfgd["upsample_stages"],
                              kernel_size=cfgd["kernel_size"],
                              sim_threshold=cfgd["sim_threshold"],
                              au_pairs=tuple(tuple(p) for p in cfgd["au_pairs"]))
        adjacencies = {k: AdjacencyMatrix(arrays[f"adj/k{k}/raw"]) for k in RRMB_SPLITS
                       if f"adj/k{k}/raw" in arrays}
        model = cls(cfg, meta["in_side"], adjacencies=adjacencies)
        model.load_param_arrays(arrays)
        return model, meta


class Generator(_GeneratorBase):
    def _make_block(self, side, c, k, rng):
        return make_region_block(side, side, c, c, k, rng,
                                 lambda kk: self.adjacencies[kk], dtype=self.dtype)


class BaselineGenerator(_GeneratorBase):
    """Same wiring with plain residual conv blocks instead of region blocks."""

    def _make_block(self, side, c, k, rng):
        return PlainConvBlock(c, k, rng, dtype=self.dtype)


class Discriminator:
    """Strided conv stack down to 4x4, then a single real/fake logit."""

    def __init__(self, in_side: int, base_channels: int = 32, kernel_size: int = 3,
                 rng=None, dtype=np.float32):
        if in_side < 8 or (in_side & (in_side - 1)) or in_side % 4:
            raise ValueError(f"input side must be a power of two >= 8, got {in_side}")
        rng = rng or np.random.default_rng(0)
        self.in_side = in_side
        self.convs = []
        side = in_side
        cin = 3
        cout = base_channels
        while side > 4:
            self.convs.append(Conv2dLayer(cin, cout, kernel_size, stride=2,
                                          padding=kernel_size // 2, rng=rng, dtype=dtype))
            side //= 2
            cin = cout
            cout = min(cout * 2, base_channels * 4)
        self.fc = Linear(cin * side * side, 1, rng=rng, dtype=dtype)
        self._flat = cin * side * side

    def parameters(self) -> list[Tensor]:
        params = []
        for c in self.convs:
            params += c.parameters()
        return params + self.fc.parameters()

    def forward(self, image: Tensor) -> Tensor:
        if image.shape[2] != self.in_side or image.shape[3] != self.in_side:
            raise ValueError(f"discriminator built for {self.in_side}, got {image.shape}")
        x = image
        for conv in self.convs:
            x = relu(conv(x))
        return self.fc(reshape(x, (x.shape[0], self._flat)))

    def __call__(self, image: Tensor) -> Tensor:
        return self.forward(image)

    def param_arrays(self):
        return {f"param/{i:03d}": p.data for i, p in enumerate(self.parameters())}

    def load_param_arrays(self, arrays):
        for i, p in enumerate(self.parameters()):
            p.data = arrays[f"param/{i:03d}"].astype(p.dtype, copy=True)


class AuClassifier:
    """Conv trunk + one region block + global average pool + linear head.

    Two constant coordinate channels are appended to the input so the pooled
    features stay sensitive to left/right position (pure conv + global pooling
    would otherwise struggle to tell the two sides apart). Logits are exposed
    pre-activation; probabilities are sigmoid(logits).
    """

    def __init__(self, in_side: int, n_au: int, base_channels: int = 32,
                 kernel_size: int = 3, rng=None, use_coords: bool = True,
                 sim_threshold: float | None = None, mean_image: np.ndarray | None = None,
                 adjacencies: dict[int, AdjacencyMatrix] | None = None, dtype=np.float32):
        if in_side % 32:
            raise ValueError(f"classifier input side must be a multiple of 32, got {in_side}")
        rng = rng or np.random.default_rng(0)
        self.in_side = in_side
        self.n_au = n_au
        self.base_channels = base_channels
        self.kernel_size = kernel_size
        self.use_coords = use_coords
        self.dtype = dtype
        self.frozen = False
        c = base_channels
        k = kernel_size
        if adjacencies is None:
            cfg = GeneratorConfig(base_channels=c, kernel_size=k, sim_threshold=sim_threshold)
            adjacencies = _build_adjacencies(cfg, mean_image)
        self.adjacencies = adjacencies
        cin = 5 if use_coords else 3
        self.conv1 = Conv2dLayer(cin, c, k, stride=2, padding=k // 2, rng=rng, dtype=dtype)
        self.conv2 = Conv2dLayer(c, c, k, stride=2, padding=k // 2, rng=rng, dtype=dtype)
        self.block = make_region_block(in_side // 4, in_side // 4, c, c, k, rng,
                                       lambda kk: self.adjacencies[kk], dtype=dtype)
        self.conv3 = Conv2dLayer(c, c, k, stride=2, padding=k // 2, rng=rng, dtype=dtype)
        self.fc = Linear(c, n_au, rng=rng, dtype=dtype)
        ax = np.linspace(-1.0, 1.0, in_side, dtype=dtype)
        self._coords = np.stack(np.meshgrid(ax, ax, indexing="xy")).astype(dtype)

    def parameters(self) -> list[Tensor]:
        return (self.conv1.parameters() + self.conv2.parameters() + self.block.parameters()
                + self.conv3.parameters() + self.fc.parameters())

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False
        self.frozen = True
        return self

    def _with_coords(self, image: Tensor) -> Tensor:
        if not self.use_coords:
            return image
        n = image.shape[0]
        coords = Tensor(np.broadcast_to(self._coords[None], (n, 2, self.in_side, self.in_side))
                        .astype(image.dtype))
        return concat_channels(image, coords)

    def _trunk(self, image: Tensor):
        if image.shape[2] != self.in_side or image.shape[3] != self.in_side:
            raise ValueError(f"classifier built for {self.in_side}x{self.in_side}, "
                             f"got {image.shape[2]}x{image.shape[3]}")
        shallow = relu(self.conv1(self._with_coords(image)))
        x = relu(self.conv2(shallow))
        x = x + self.block(x)
        deep = relu(self.conv3(x))
        return shallow, deep

    def forward(self, image: Tensor) -> Tensor:
        _, deep = self._trunk(image)
        return self.head_logits(deep)

    def __call__(self, image: Tensor) -> Tensor:
        return self.forward(image)

    def features(self, image: Tensor):
        """(shallow, deep) trunk taps used by the perceptual distance."""
        return self._trunk(image)

    def head_logits(self, deep: Tensor) -> Tensor:
        """Logits from an already-computed deep tap (lets callers share the
        trunk pass between the perceptual and attribute-consistency terms)."""
        return self.fc(mean_hw(deep))

    def predict_proba(self, image: Tensor) -> Tensor:
        return sigmoid(self.forward(image))

    # -- persistence -------------------------------------------------------

    def param_arrays(self):
        return {f"param/{i:03d}": p.data for i, p in enumerate(self.parameters())}

    def load_param_arrays(self, arrays):
        for i, p in enumerate(self.parameters()):
            a = arrays[f"param/{i:03d}"]
            if a.shape != p.data.shape:
                raise ValueError(f"param {i} shape {a.shape} != expected {p.data.shape}")
            p.data = a.astype(p.dtype, copy=True)

    def save(self, path, extra_meta: dict | None = None):
        arrays = self.param_arrays()
        for k, adj in self.adjacencies.items():
            arrays[f"adj/k{k}/raw"] = adj.raw
        meta = {
            "kind": "AuClassifier",
            "in_side": self.in_side,
            "n_au": self.n_au,
            "base_channels": self.base_channels,
            "kernel_size": self.kernel_size,
            "use_coords": self.use_coords,
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "AuClassifier":
            raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, "
                             f"expected AuClassifier")
        adjacencies = {k: AdjacencyMatrix(arrays[f"adj/k{k}/raw"]) for k in RRMB_SPLITS
                       if f"adj/k{k}/raw" in arrays}
        model = cls(meta["in_side"], meta["n_au"], meta["base_channels"],
                    meta["kernel_size"], use_coords=meta["use_coords"],
                    adjacencies=adjacencies)
        model.load_param_arrays(arrays)
        return model, meta
