"""Procedural, attribute-labeled face-like image corpus plus the degradation
pipeline (bicubic downsample to a small side, then a random quarter-area
square occlusion).

Rendering is a pure function of (attributes, style, seed). Every stroke is an
analytic coverage profile that is even in the horizontal offset, so a face
whose bilateral attributes agree (and whose style is centered) rasterizes
bit-exactly mirror-symmetric.

Binary attributes, in order:

    0 eye open (left)        1 eye open (right)
    2 brow raised (left)     3 brow raised (right)
    4 mouth open             5 smile
    6 frown                  7 nose wrinkle
    8 cheek dot (left)       9 cheek dot (right)
    10 chin crease           11 forehead crease

Left/right are mirror pairs; smile/frown are exclusive by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MAX_ATTRIBUTES = 12
ATTRIBUTE_NAMES = (
    "eye_open_left", "eye_open_right", "brow_raised_left", "brow_raised_right",
    "mouth_open", "smile", "frown", "nose_wrinkle",
    "cheek_dot_left", "cheek_dot_right", "chin_crease", "forehead_crease",
)
DEFAULT_OCCURRENCE = (0.5, 0.5, 0.35, 0.35, 0.3, 0.3, 0.2, 0.2, 0.25, 0.25, 0.3, 0.25)
PAIR_COUPLING = 0.9    # bilateral pairs share their base draw this often
CO_OCCURRENCE = 0.5    # mouth-open follows smile / wrinkle follows frown this often

_AA = 1.0  # anti-alias edge width in pixels

_SKIN = np.array([1.0, 0.93, 0.85])
_BG = np.array([0.95, 0.98, 1.05])
_STROKE = np.array([0.13, 0.11, 0.11])
_MOUTH_OPEN = np.array([0.05, 0.04, 0.04])


@dataclass(frozen=True)
class FaceStyle:
    scale: float
    skin: float
    background: float
    dx: float  # horizontal face offset, fraction of the side

    def mirrored(self) -> "FaceStyle":
        return FaceStyle(self.scale, self.skin, self.background, -self.dx)


@dataclass
class SyntheticFaceParams:
    attributes: np.ndarray
    style: FaceStyle
    seed: int = 0

    def __post_init__(self):
        self.attributes = np.asarray(self.attributes, dtype=np.int64)
        if self.attributes.ndim != 1 or not 1 <= self.attributes.size <= MAX_ATTRIBUTES:
            raise ValueError(
                f"attributes must be a vector of 1..{MAX_ATTRIBUTES} binary flags, "
                f"got shape {self.attributes.shape}"
            )
        if not np.all(np.isin(self.attributes, (0, 1))):
            raise ValueError("attributes must be binary")


def mirror_params(params: SyntheticFaceParams) -> SyntheticFaceParams:
    """Swap the left/right attribute pairs and mirror the style."""
    attrs = params.attributes.copy()
    for a, b in ((0, 1), (2, 3), (8, 9)):
        if b < attrs.size:
            attrs[a], attrs[b] = attrs[b], attrs[a]
    return SyntheticFaceParams(attrs, params.style.mirrored(), params.seed)


def _edge(dist: np.ndarray) -> np.ndarray:
    """Smooth 0..1 coverage from a signed 'inside' distance in pixels."""
    return np.clip(dist / _AA + 0.5, 0.0, 1.0)


def _ellipse(xx, yy, cx, cy, rx, ry):
    d = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    return _edge((1.0 - d) * min(rx, ry))


def _bar(xx, yy, cx, cy, half_len, half_th):
    """Axis-aligned horizontal bar with soft ends."""
    return _edge(half_th - np.abs(yy - cy)) * _edge(half_len - np.abs(xx - cx))


def _vbar(xx, yy, cx, cy, half_len, half_th):
    return _edge(half_th - np.abs(xx - cx)) * _edge(half_len - np.abs(yy - cy))


def _curve_band(xx, yy, cx, cy, half_w, bend, half_th):
    """Band around y = cy + bend * (1 - ((x-cx)/half_w)^2)."""
    xn = (xx - cx) / half_w
    yc = cy + bend * (1.0 - xn * xn)
    return _edge(half_th - np.abs(yy - yc)) * _edge((1.0 - np.abs(xn)) * half_w)


def _paint(canvas, cov, color):
    canvas *= (1.0 - cov)[None]
    canvas += cov[None] * color[:, None, None]


def render_face(params: SyntheticFaceParams, side: int) -> np.ndarray:
    """Draw one face as a [3, side, side] float32 image in [0, 1]."""
    if side < 32 or side % 8:
        raise ValueError(f"side must be >= 32 and divisible by 8, got {side}")
    a = np.zeros(MAX_ATTRIBUTES, dtype=np.int64)
    a[: params.attributes.size] = params.attributes
    st = params.style

    coords = np.arange(side, dtype=np.float64)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    cx = (side - 1) / 2.0 + st.dx * side
    cy = (side - 1) / 2.0
    rx = 0.40 * side * st.scale
    ry = 0.46 * side * st.scale

    canvas = np.empty((3, side, side), dtype=np.float64)
    canvas[:] = np.clip(st.background * _BG, 0, 1)[:, None, None]
    _paint(canvas, _ellipse(xx, yy, cx, cy, rx, ry), np.clip(st.skin * _SKIN, 0, 1))

    eye_y = cy - 0.20 * ry
    for sign, open_bit in ((-1, a[0]), (1, a[1])):
        ex = cx + sign * 0.42 * rx
        if open_bit:
            _paint(canvas, _ellipse(xx, yy, ex, eye_y, 0.19 * rx, 0.16 * ry), _STROKE)
        else:
            _paint(canvas, _bar(xx, yy, ex, eye_y, 0.19 * rx, 0.030 * ry), _STROKE)

    for sign, raised in ((-1, a[2]), (1, a[3])):
        bx = cx + sign * 0.42 * rx
        by = eye_y - (0.18 + 0.13 * raised) * ry
        _paint(canvas, _bar(xx, yy, bx, by, 0.25 * rx, (0.035 + 0.03 * raised) * ry), _STROKE)

    _paint(canvas, _vbar(xx, yy, cx, cy + 0.07 * ry, 0.13 * ry, 0.028 * rx), _STROKE)
    if a[7]:
        for wy in (-0.04, 0.06):
            _paint(canvas, _bar(xx, yy, cx, cy + wy * ry, 0.16 * rx, 0.024 * ry), _STROKE)

    mouth_y = cy + 0.52 * ry
    bend = 0.16 * ry * (a[5] - a[6])
    if a[4]:
        _paint(canvas, _curve_band(xx, yy, cx, mouth_y, 0.42 * rx, bend, 0.14 * ry),
               _MOUTH_OPEN)
    else:
        _paint(canvas, _curve_band(xx, yy, cx, mouth_y, 0.42 * rx, bend, 0.032 * ry),
               _STROKE)

    for sign, dot in ((-1, a[8]), (1, a[9])):
        if dot:
            _paint(canvas, _ellipse(xx, yy, cx + sign * 0.62 * rx, cy + 0.28 * ry,
                                    0.09 * rx, 0.08 * ry), _STROKE)
    if a[10]:
        _paint(canvas, _bar(xx, yy, cx, cy + 0.78 * ry, 0.20 * rx, 0.026 * ry), _STROKE)
    if a[11]:
        _paint(canvas, _bar(xx, yy, cx, cy - 0.62 * ry, 0.25 * rx, 0.026 * ry), _STROKE)

    return np.clip(canvas, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# degradation


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Bicubic kernel with a = -0.5."""
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    out = np.where(at <= 1.0, 1.5 * at3 - 2.5 * at2 + 1.0,
                   np.where(at < 2.0, -0.5 * at3 + 2.5 * at2 - 4.0 * at + 2.0, 0.0))
    return out


_RESIZE_CACHE: dict = {}


def _resize_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic [dst, src] bicubic weights, edge-clamped; the kernel
    support widens by the scale factor when downsampling."""
    key = (src, dst)
    m = _RESIZE_CACHE.get(key)
    if m is not None:
        return m
    scale = src / dst
    support = max(1.0, scale)
    m = np.zeros((dst, src), dtype=np.float64)
    for i in range(dst):
        center = (i + 0.5) * scale - 0.5
        lo = int(np.floor(center - 2.0 * support))
        hi = int(np.ceil(center + 2.0 * support))
        taps = np.arange(lo, hi + 1)
        w = _catmull_rom((taps - center) / support)
        keep = w != 0.0
        taps, w = taps[keep], w[keep]
        w = w / w.sum()
        np.add.at(m[i], np.clip(taps, 0, src - 1), w)
    _RESIZE_CACHE[key] = m
    return m


def bicubic_resize(image: np.ndarray, target_side: int) -> np.ndarray:
    """Separable Catmull-Rom resize of a [C,H,W] image (H == W)."""
    if target_side < 1:
        raise ValueError(f"target_side must be >= 1, got {target_side}")
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[1] != image.shape[2]:
        raise ValueError(f"expected a square C,H,W image, got {image.shape}")
    src = image.shape[1]
    m = _resize_matrix(src, target_side)
    out = np.einsum("oh,chw,pw->cop", m, image.astype(np.float64), m)
    return out.astype(image.dtype if image.dtype == np.float64 else np.float32)


@dataclass(frozen=True)
class DegradationSpec:
    """Downsample to target_side, then zero out a random quarter-area square."""

    target_side: int = 16
    mask_fraction: float = 0.25
    mask_shape: str = "square"
    seed: int = 0

    def __post_init__(self):
        if self.target_side < 2 or self.target_side % 2:
            raise ValueError(f"target_side must be an even int >= 2, got {self.target_side}")
        if self.mask_fraction != 0.25:
            raise ValueError("only a quarter-area mask is supported")
        if self.mask_shape != "square":
            raise ValueError("only square masks are supported")

    @property
    def mask_side(self) -> int:
        return self.target_side // 2


def apply_mask(image: np.ndarray, spec: DegradationSpec, rng: np.random.Generator):
    """Zero a random square of side s/2; returns (masked image, mask map)."""
    image = np.asarray(image)
    s = image.shape[-1]
    if s < 2:
        raise ValueError(f"image side must be >= 2, got {s}")
    if s != spec.target_side:
        raise ValueError(f"image side {s} does not match spec target_side {spec.target_side}")
    m = spec.mask_side
    top = int(rng.integers(0, s - m + 1))
    left = int(rng.integers(0, s - m + 1))
    masked = image.copy()
    masked[..., top:top + m, left:left + m] = 0.0
    mask = np.zeros((s, s), dtype=np.float32)
    mask[top:top + m, left:left + m] = 1.0
    return masked, mask


def degrade(gt_image: np.ndarray, spec: DegradationSpec, sample_seed) -> tuple:
    """Full pipeline: bicubic downsample, then the random square mask."""
    small = bicubic_resize(gt_image, spec.target_side)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, *map(int, np.atleast_1d(sample_seed))]))
    return apply_mask(np.clip(small, 0.0, 1.0), spec, rng)


# ---------------------------------------------------------------------------
# dataset generation


@dataclass
class SyntheticSample:
    gt_image: np.ndarray
    degraded_image: np.ndarray
    labels: np.ndarray
    sample_id: int
    split: str
    subject: int
    mask_offset: tuple


def _subject_style(corpus_seed: int, subject: int) -> FaceStyle:
    rng = np.random.default_rng(np.random.SeedSequence([corpus_seed, 7001, subject]))
    return FaceStyle(
        scale=float(rng.uniform(0.88, 1.0)),
        skin=float(rng.uniform(0.78, 0.92)),
        background=float(rng.uniform(0.48, 0.62)),
        dx=float(rng.uniform(-0.015, 0.015)),
    )


def sample_attributes(rng: np.random.Generator, n_au: int,
                      probs=DEFAULT_OCCURRENCE) -> np.ndarray:
    """Draw one label vector; marginals match probs exactly while bilateral
    pairs correlate and smile/frown stay exclusive."""
    if n_au < 1 or n_au > MAX_ATTRIBUTES:
        raise ValueError(f"n_au must be 1..{MAX_ATTRIBUTES}, got {n_au}")
    p = np.asarray(probs, dtype=np.float64)
    if p.size < n_au or np.any(p < 0) or np.any(p > 1):
        raise ValueError("occurrence probs must cover n_au attributes in [0,1]")
    full = np.zeros(MAX_ATTRIBUTES, dtype=np.int64)

    def coupled_pair(i, j):
        if p[i] == p[j]:
            base = rng.random() < p[i]
            for t in (i, j):
                full[t] = base if rng.random() < PAIR_COUPLING else (rng.random() < p[t])
        else:
            full[i] = rng.random() < p[i]
            full[j] = rng.random() < p[j]

    coupled_pair(0, 1)   # eyes
    coupled_pair(2, 3)   # brows
    if p[5] + p[6] > 1.0:
        raise ValueError("smile and frown probabilities must sum to <= 1")
    u = rng.random()
    full[5] = u < p[5]
    full[6] = p[5] <= u < p[5] + p[6]

    def co_occur(i, driver):
        if p[i] == p[driver] and rng.random() < CO_OCCURRENCE:
            full[i] = full[driver]
        else:
            full[i] = rng.random() < p[i]

    co_occur(4, 5)       # mouth open follows smile
    co_occur(7, 6)       # nose wrinkle follows frown
    coupled_pair(8, 9)   # cheek dots
    for i in (10, 11):
        full[i] = rng.random() < p[i]
    return full[:n_au]


def generate_dataset(n: int, side: int, n_au: int, seed: int, out_dir,
                     train_fraction: float = 0.8, occur_probs=DEFAULT_OCCURRENCE,
                     n_subjects: tuple[int, int] = (48, 16)) -> Path:
    """Write n samples (images + JSONL manifest) under out_dir; returns the
    manifest path. Train and test samples draw styles from disjoint subject
    pools, and every seed needed to reproduce a sample is recorded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create dataset directory {img_dir}: {e}") from e

    n_train = int(round(n * train_fraction))
    deg_spec = DegradationSpec(target_side=side // 8, seed=seed)
    records = []
    for i in range(n):
        split = "train" if i < n_train else "test"
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3001, i]))
        if split == "train":
            subject = int(rng.integers(0, n_subjects[0]))
        else:
            subject = n_subjects[0] + int(rng.integers(0, n_subjects[1]))
        style = _subject_style(seed, subject)
        labels = sample_attributes(rng, n_au, occur_probs)
        params = SyntheticFaceParams(labels, style, seed=i)
        gt = render_face(params, side)
        degraded, mask = degrade(gt, deg_spec, i)
        gt_rel = f"images/{i:05d}_gt.png"
        deg_rel = f"images/{i:05d}_in.png"
        save_png(out_dir / gt_rel, gt)
        save_png(out_dir / deg_rel, degraded)
        top, left = np.argwhere(mask == 1.0)[0]
        records.append({
            "id": i,
            "split": split,
            "labels": [int(v) for v in labels],
            "subject": subject,
            "seeds": {"corpus": seed, "sample": i, "degradation": [seed, i]},
            "style": {"scale": style.scale, "skin": style.skin,
                      "background": style.background, "dx": style.dx},
            "mask_offset": [int(top), int(left)],
            "gt_path": gt_rel,
            "degraded_path": deg_rel,
        })
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    meta = {"n": n, "side": side, "n_au": n_au, "seed": seed,
            "train_fraction": train_fraction, "degraded_side": side // 8,
            "n_subjects": list(n_subjects)}
    (out_dir / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# image and manifest IO


def save_png(path, image: np.ndarray):
    """Store a [3,H,W] float image in [0,1] as 8-bit RGB PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(Path(path), format="PNG")


def load_png(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


class FaceDataset:
    """In-memory dataset view over a generated corpus directory."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        manifest = self.data_dir / "manifest.jsonl"
        if not manifest.exists():
            raise FileNotFoundError(f"manifest not found: {manifest}")
        self.records = [json.loads(line) for line in manifest.read_text().splitlines() if line]
        if not self.records:
            raise ValueError(f"manifest is empty: {manifest}")
        meta_path = self.data_dir / "dataset.json"
        self.meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        self._gt = None
        self._deg = None

    def _load_images(self):
        if self._gt is None:
            self._gt = np.stack([load_png(self.data_dir / r["gt_path"]) for r in self.records])
            self._deg = np.stack([load_png(self.data_dir / r["degraded_path"])
                                  for r in self.records])

    @property
    def n_au(self) -> int:
        return len(self.records[0]["labels"])

    def split_arrays(self, split: str):
        """(gt images, degraded images, labels) for one split."""
        self._load_images()
        idx = [i for i, r in enumerate(self.records) if r["split"] == split]
        if not idx:
            raise ValueError(f"no samples in split {split!r}")
        labels = np.asarray([self.records[i]["labels"] for i in idx], dtype=np.float32)
        return self._gt[idx], self._deg[idx], labels

    def mean_train_image(self) -> np.ndarray:
        gt, _, _ = self.split_arrays("train")
        return gt.mean(axis=0)
