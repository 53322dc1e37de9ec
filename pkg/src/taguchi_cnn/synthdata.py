"""Procedural two-class dataset of hexagonal nut faces with surface defects.

Every sample's randomness derives from ``(dataset seed, sample index)``, so
serial and parallel generation produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import ndimage

from .nn.train import TrainData

DEFECT_KINDS = ("scratch", "dent", "crack", "wrinkle")
LABELS = ("defective", "non_defective")

# hard limits for augment(); DatasetSpec ranges must sit inside them
BRIGHTNESS_LIMITS = (0.25, 4.0)
SCALE_LIMITS = (0.5, 2.0)

_BACKGROUND = 0.08


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (H, W, 3) in [0, 1]
    label: str
    provenance: dict[str, Any]
    mask: np.ndarray | None = field(default=None, repr=False)  # nut face region

    @property
    def target(self) -> float:
        return 1.0 if self.label == "defective" else -1.0


@dataclass(frozen=True)
class DatasetSpec:
    image_size: int = 32
    per_class: int = 100
    seed: int = 0
    defect_mix: dict[str, float] = field(
        default_factory=lambda: {"scratch": 0.25, "dent": 0.25, "crack": 0.25, "wrinkle": 0.25}
    )
    brightness_range: tuple[float, float] = (0.8, 1.2)
    scale_range: tuple[float, float] = (0.9, 1.1)
    split_ratio: float = 0.8

    def __post_init__(self):
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        unknown = set(self.defect_mix) - set(DEFECT_KINDS)
        if unknown:
            raise ValueError(f"unknown defect kinds {sorted(unknown)}")
        if any(p < 0 for p in self.defect_mix.values()) or not math.isclose(sum(self.defect_mix.values()), 1.0):
            raise ValueError("defect_mix proportions must be nonnegative and sum to 1")
        for name, (lo, hi), (lim_lo, lim_hi) in (
            ("brightness_range", self.brightness_range, BRIGHTNESS_LIMITS),
            ("scale_range", self.scale_range, SCALE_LIMITS),
        ):
            if not (0 < lo <= hi and lim_lo <= lo and hi <= lim_hi):
                raise ValueError(f"{name} must satisfy {lim_lo} <= lo <= hi <= {lim_hi}")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")


@dataclass(frozen=True)
class SplitDataset:
    train: tuple[ImageSample, ...]
    test: tuple[ImageSample, ...]
    ratio: float = 0.8

    def to_train_data(self, size: int | None = None) -> TrainData:
        """Stack into arrays, optionally resampled to ``size`` x ``size``."""

        def stack(samples):
            x = np.stack([s.pixels for s in samples]) if samples else np.zeros((0, 1, 1, 3))
            if size is not None and samples and x.shape[1] != size:
                x = np.stack([resize(img, size) for img in x])
            return x, np.array([s.target for s in samples])

        x_train, y_train = stack(self.train)
        x_val, y_val = stack(self.test)
        return TrainData(x_train, y_train, x_val, y_val)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def resize(img: np.ndarray, size: int | tuple[int, int], order: int = 1) -> np.ndarray:
    """Bilinear resample with pixel-area alignment (a 2x reduction averages 2x2 blocks)."""
    h, w = img.shape[:2]
    th, tw = (size, size) if isinstance(size, int) else size
    if (th, tw) == (h, w):
        return img.copy()
    factors = (th / h, tw / w) + (1,) * (img.ndim - 2)
    out = ndimage.zoom(img, factors, order=order, mode="nearest", grid_mode=True)
    return out[:th, :tw]


def _value_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    grid = rng.random((cells + 1, cells + 1))
    return resize(grid, size)


def _hexagon_distance(yy, xx, cy, cx, radius, angle):
    """Signed distance (pixels) to a regular hexagon with circumradius ``radius``; negative inside."""
    apothem = radius * math.cos(math.pi / 6)
    d = np.full(yy.shape, -np.inf)
    for k in range(6):
        theta = angle + k * math.pi / 3 + math.pi / 6
        d = np.maximum(d, (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta) - apothem)
    return d


def generate_nut_face(seed, size: int = 32) -> ImageSample:
    """A non-defective nut face: a textured metal hexagon on a dark background."""
    if size < 32:
        raise ValueError("size must be >= 32")
    rng = _rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = size / 2 + rng.uniform(-0.04, 0.04, 2) * size
    radius = size * rng.uniform(0.38, 0.44)
    angle = rng.uniform(0, math.pi / 3)

    hexd = _hexagon_distance(yy, xx, cy, cx, radius, angle)
    face_alpha = np.clip(0.5 - hexd, 0, 1)

    texture = 0.7 * _value_noise(rng, size, 5) + 0.3 * _value_noise(rng, size, 11)
    base = rng.uniform(0.5, 0.62)
    metal = base + 0.03 * (texture - 0.5) + 0.005 * rng.standard_normal((size, size))
    metal = metal * rng.uniform(0.85, 1.1)  # illumination level

    background = _BACKGROUND + 0.03 * _value_noise(rng, size, 4)
    gray = background * (1 - face_alpha) + metal * face_alpha

    tint = np.array([1.0, rng.uniform(0.96, 1.0), rng.uniform(0.9, 0.97)])
    pixels = np.clip(gray[..., None] * tint, 0.0, 1.0)
    provenance = {
        "seed": _seed_repr(seed),
        "size": size,
        "defect": None,
        "augment": None,
    }
    return ImageSample(pixels, "non_defective", provenance, face_alpha > 0.5)


def _seed_repr(seed):
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return int(seed)


def _stroke(yy, xx, points: np.ndarray, width: float) -> np.ndarray:
    """Anti-aliased coverage of a polyline of the given width."""
    dist = np.full(yy.shape, np.inf)
    for (y0, x0), (y1, x1) in zip(points[:-1], points[1:]):
        dy, dx = y1 - y0, x1 - x0
        denom = dy * dy + dx * dx or 1e-12
        t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / denom, 0, 1)
        dist = np.minimum(dist, np.hypot(yy - (y0 + t * dy), xx - (x0 + t * dx)))
    return np.clip(width / 2 + 0.5 - dist, 0, 1)


def _inside_point(rng, mask: np.ndarray, margin: int = 0) -> tuple[float, float]:
    m = mask
    if margin:
        m = ndimage.binary_erosion(mask, iterations=margin)
        if not m.any():
            m = mask
    ys, xs = np.nonzero(m)
    i = rng.integers(len(ys))
    return ys[i] + 0.5, xs[i] + 0.5


def _placed_stroke(rng, yy, xx, mask, path, width: float, tries: int = 24) -> np.ndarray:
    """Stroke coverage for a random path, re-drawn until it lies (almost) fully on the face."""
    best, best_frac = None, -1.0
    for _ in range(tries):
        y0, x0 = _inside_point(rng, mask, margin=1)
        cover = _stroke(yy, xx, np.array(path(y0, x0, rng.uniform(0, 2 * math.pi))), width)
        frac = float((cover * mask).sum() / max(cover.sum(), 1e-12))
        if frac > best_frac:
            best, best_frac = cover, frac
        if frac >= 0.95:
            break
    return best


def apply_defect(sample: ImageSample, kind: str, seed) -> ImageSample:
    """Render one defect on the nut face; pixels outside the face mask are untouched."""
    if kind not in DEFECT_KINDS:
        raise ValueError(f"unknown defect kind {kind!r}; expected one of {', '.join(DEFECT_KINDS)}")
    if sample.label != "non_defective":
        raise ValueError("defects can only be applied to non-defective samples")
    if sample.mask is None or not sample.mask.any():
        raise ValueError("sample has no face mask")
    rng = _rng(seed)
    img = sample.pixels
    h, w = img.shape[:2]
    size = min(h, w)
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    gray = img.mean(axis=-1)
    face_level = float(np.median(gray[sample.mask]))

    if kind == "scratch":
        length = size * rng.uniform(0.22, 0.27)
        bends = rng.normal(0, 0.25, 2)
        polarity = 0.5 if rng.random() < 0.5 else -0.5

        def scratch_path(y0, x0, heading):
            pts = [(y0, x0)]
            for bend in bends:
                heading += bend
                y, x = pts[-1]
                pts.append((y + length / 2 * math.sin(heading), x + length / 2 * math.cos(heading)))
            return pts

        # scratches stay thin: shorten until at most 4% of the face is touched
        budget = 0.04 * sample.mask.sum()
        while True:
            cover = _placed_stroke(rng, yy, xx, sample.mask, scratch_path, width=max(1.0, size / 32))
            if ((cover * sample.mask) > 0.05).sum() <= budget or length < 2:
                break
            length *= 0.85
        target = np.clip(face_level + polarity, 0, 1)
        out = img * (1 - cover[..., None]) + target * cover[..., None]
    elif kind == "dent":
        face_area = sample.mask.sum()
        frac = rng.uniform(0.1, 0.16)
        aspect = rng.uniform(0.6, 1.0)
        a = math.sqrt(frac * face_area / (math.pi * aspect))
        b = a * aspect
        cy, cx = _inside_point(rng, sample.mask, margin=max(1, int(b)))
        phi = rng.uniform(0, math.pi)
        u = (xx - cx) * math.cos(phi) + (yy - cy) * math.sin(phi)
        v = -(xx - cx) * math.sin(phi) + (yy - cy) * math.cos(phi)
        rr = (u / a) ** 2 + (v / b) ** 2
        depth = rng.uniform(0.75, 0.85)
        shade = 1 - depth * np.clip(1.6 * (1.0 - rr), 0, 1) ** 0.5
        out = img * shade[..., None]
    elif kind == "crack":
        step = size * 0.045
        n_steps = int(rng.integers(8, 11))

        def crack_path(y, x, heading):
            pts = [(y, x)]
            for _ in range(n_steps):
                heading += rng.normal(0, 0.7)
                y, x = pts[-1]
                pts.append((y + step * math.sin(heading), x + step * math.cos(heading)))
            return pts

        cover = _placed_stroke(rng, yy, xx, sample.mask, crack_path, width=max(1.2, size / 28))
        out = img * (1 - 0.9 * cover[..., None])
    else:  # wrinkle
        cy, cx = _inside_point(rng, sample.mask, margin=max(1, size // 10))
        theta = rng.uniform(0, math.pi)
        wavelength = size * rng.uniform(0.22, 0.3)
        proj = (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta)
        extent = size * rng.uniform(0.18, 0.24)
        window = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * extent**2))
        ridges = 0.6 * np.sin(2 * math.pi * proj / wavelength) * window
        out = img * (1 + ridges[..., None])

    out = np.clip(out, 0.0, 1.0)
    pixels = np.where(sample.mask[..., None], out, img)
    provenance = {**sample.provenance, "defect": kind, "defect_seed": _seed_repr(seed)}
    return ImageSample(pixels, "defective", provenance, sample.mask)


def augment(
    sample: ImageSample,
    brightness: float,
    scale: float,
    seed=0,
    brightness_range: tuple[float, float] = BRIGHTNESS_LIMITS,
    scale_range: tuple[float, float] = SCALE_LIMITS,
) -> ImageSample:
    """Multiplicative brightness, then rescale about the centre and crop/pad back to the original size.

    The transform itself is deterministic; ``seed`` is only recorded in the provenance.
    """
    if not brightness_range[0] <= brightness <= brightness_range[1]:
        raise ValueError(f"brightness {brightness} outside {brightness_range}")
    if not scale_range[0] <= scale <= scale_range[1]:
        raise ValueError(f"scale {scale} outside {scale_range}")
    img = np.clip(sample.pixels * brightness, 0.0, 1.0)
    mask = sample.mask
    h, w = img.shape[:2]
    if scale != 1.0:
        nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
        zoomed = resize(img, (nh, nw))
        zmask = resize(mask.astype(np.float64), (nh, nw)) > 0.5 if mask is not None else None
        if nh >= h:
            oy, ox = (nh - h) // 2, (nw - w) // 2
            img = zoomed[oy : oy + h, ox : ox + w]
            mask = zmask[oy : oy + h, ox : ox + w] if zmask is not None else None
        else:
            border = np.concatenate([img[0], img[-1], img[:, 0], img[:, -1]])
            fill = np.median(border, axis=0)
            canvas = np.broadcast_to(fill, (h, w, img.shape[2])).copy()
            oy, ox = (h - nh) // 2, (w - nw) // 2
            canvas[oy : oy + nh, ox : ox + nw] = zoomed
            img = canvas
            if zmask is not None:
                m = np.zeros((h, w), dtype=bool)
                m[oy : oy + nh, ox : ox + nw] = zmask
                mask = m
        img = np.clip(img, 0.0, 1.0)
    else:
        img = img.copy()
    provenance = {**sample.provenance, "augment": {"brightness": brightness, "scale": scale, "seed": _seed_repr(seed)}}
    return ImageSample(img, sample.label, provenance, mask)


def make_sample(spec: DatasetSpec, index: int) -> ImageSample:
    """Sample ``index`` of the dataset: the first ``per_class`` are non-defective."""
    rng = _rng([spec.seed, index, 0])
    sample = generate_nut_face([spec.seed, index, 1], spec.image_size)
    if index >= spec.per_class:
        kinds = [k for k in DEFECT_KINDS if spec.defect_mix.get(k, 0) > 0]
        probs = np.array([spec.defect_mix[k] for k in kinds])
        kind = kinds[rng.choice(len(kinds), p=probs / probs.sum())]
        sample = apply_defect(sample, kind, [spec.seed, index, 2])
    brightness = float(rng.uniform(*spec.brightness_range))
    scale = float(rng.uniform(*spec.scale_range))
    sample = augment(sample, brightness, scale, [spec.seed, index, 3])
    sample.provenance["index"] = index
    return sample


def stratified_split(labels: Sequence[str], ratio: float, seed) -> tuple[list[int], list[int]]:
    """Train/test index lists; train size is floor(ratio * N), split per class.

    Each class gets floor(ratio * n_class) training samples; leftover training
    slots go to the classes with the largest fractional parts (declaration
    order on ties).
    """
    labels = list(labels)
    classes = sorted(set(labels), key=labels.index)
    by_class = {c: [i for i, l in enumerate(labels) if l == c] for c in classes}
    n_train = math.floor(ratio * len(labels))
    quota = {c: math.floor(ratio * len(ix)) for c, ix in by_class.items()}
    remaining = n_train - sum(quota.values())
    order = sorted(classes, key=lambda c: -(ratio * len(by_class[c]) - quota[c]))
    for c in order[:remaining]:
        quota[c] += 1
    rng = _rng(seed)
    train, test = [], []
    for c in classes:
        ix = list(rng.permutation(by_class[c]))
        train += [int(i) for i in ix[: quota[c]]]
        test += [int(i) for i in ix[quota[c] :]]
    return sorted(train), sorted(test)


def build_dataset(spec: DatasetSpec) -> SplitDataset:
    samples = [make_sample(spec, i) for i in range(2 * spec.per_class)]
    train_ix, test_ix = stratified_split([s.label for s in samples], spec.split_ratio, [spec.seed, 9])
    return SplitDataset(
        tuple(samples[i] for i in train_ix), tuple(samples[i] for i in test_ix), spec.split_ratio
    )


# -- export / import ---------------------------------------------------------

def write_ppm16(path: Path, pixels: np.ndarray) -> None:
    """Binary 16-bit-per-channel portable pixmap."""
    h, w = pixels.shape[:2]
    data = np.round(np.clip(pixels, 0, 1) * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_image(path: Path) -> np.ndarray:
    """Read a 16-bit PPM written by ``write_ppm16`` or any Pillow-readable image as (H, W, 3) floats."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"P6":
        with open(path, "rb") as fh:
            tokens: list[bytes] = []
            while len(tokens) < 4:
                line = fh.readline()
                if line.startswith(b"#"):
                    continue
                tokens += line.split()
            w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
            dtype = ">u2" if maxval > 255 else "u1"
            data = np.frombuffer(fh.read(), dtype=dtype, count=h * w * 3)
        return data.reshape(h, w, 3).astype(np.float64) / maxval
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def export_dataset(dataset: SplitDataset, out_dir: str | Path) -> Path:
    """Write images plus ``manifest.csv`` (filename,label,split,provenance)."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["filename", "label", "split", "provenance"])
        for split, samples in (("train", dataset.train), ("test", dataset.test)):
            for i, s in enumerate(samples):
                name = f"images/{split}_{i:04d}_{s.label}.ppm"
                write_ppm16(out / name, s.pixels)
                writer.writerow([name, s.label, split, json.dumps(s.provenance, sort_keys=True)])
    return manifest


def import_dataset(directory: str | Path, size: int | None = None, ratio: float = 0.8, seed: int = 0) -> SplitDataset:
    """Load a directory in the export layout; user images may be PNG/JPEG.

    Rows without a ``split`` value are split stratified with ``ratio``.
    """
    root = Path(directory)
    rows = list(csv.DictReader(open(root / "manifest.csv", newline="", encoding="utf-8")))
    samples, splits = [], []
    for row in rows:
        label = row["label"].strip()
        if label not in LABELS:
            raise ValueError(f"{row['filename']}: unknown label {label!r}")
        pixels = read_image(root / row["filename"])
        if size is not None:
            pixels = resize(pixels, size)
        prov = json.loads(row["provenance"]) if row.get("provenance") else {"file": row["filename"]}
        samples.append(ImageSample(pixels, label, prov))
        splits.append((row.get("split") or "").strip())
    if all(s in ("train", "test") for s in splits):
        train = tuple(s for s, sp in zip(samples, splits) if sp == "train")
        test = tuple(s for s, sp in zip(samples, splits) if sp == "test")
        return SplitDataset(train, test, ratio)
    train_ix, test_ix = stratified_split([s.label for s in samples], ratio, seed)
    return SplitDataset(tuple(samples[i] for i in train_ix), tuple(samples[i] for i in test_ix), ratio)

