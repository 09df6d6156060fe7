"""Dataset ingestion, augmentation, sparse pixel sampling, and the synthetic
benchmark generator used as a desk-scale ground-truth oracle.

Dataset directory layout::

    root/input/*.png             8-bit RGB inputs
    root/target/<effect>/*.png   retouched targets, same filenames as inputs
    root/parse/*.png             optional per-pixel category maps (uint8)

Every input must have a target in every effect directory present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .colorspace import lab_to_srgb, srgb_to_lab

EFFECTS = ("foreground_popout", "local_xpro", "watercolor", "synthetic")

# Label value excluded from the scene-parsing cross entropy.
IGNORE_LABEL = 255


@dataclass
class AdjustmentExample:
    """One (input, target) training pair in Lab, with optional parse labels."""

    input: np.ndarray  # (H, W, 3) float64 Lab
    target: np.ndarray  # (H, W, 3) float64 Lab
    parse_labels: np.ndarray | None  # (H, W) integer class map or None
    effect: str
    name: str = ""

    def __post_init__(self) -> None:
        if self.input.shape != self.target.shape:
            raise ValueError(
                f"input/target shape mismatch for {self.name!r}: "
                f"{self.input.shape} vs {self.target.shape}"
            )
        if self.parse_labels is not None and self.parse_labels.shape != self.input.shape[:2]:
            raise ValueError(
                f"parse labels shape {self.parse_labels.shape} does not match "
                f"image shape {self.input.shape[:2]} for {self.name!r}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.input.shape[:2]


@dataclass
class PixelBatch:
    """Sparse pixel sample: coordinates plus input/target Lab colors."""

    coordinates: np.ndarray  # (P, 2) int rows, cols
    input_colors: np.ndarray  # (P, 3) Lab
    target_colors: np.ndarray  # (P, 3) Lab
    parse_labels: np.ndarray | None = None  # (P,) or None


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit RGB PNG into a (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_png(path: str | Path, srgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(srgb, dtype=np.uint8), mode="RGB").save(path)


def read_label_png(path: str | Path) -> np.ndarray:
    """Read a label map PNG (palette or grayscale) into (H, W) uint8 indices."""
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            im = im.convert("L")
        return np.asarray(im, dtype=np.uint8)


def write_label_png(path: str | Path, labels: np.ndarray) -> None:
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path)


def load_dataset(root: str | Path) -> list[AdjustmentExample]:
    """Load all (input, target) pairs under ``root``.

    Returns examples sorted lexicographically by (effect, filename); images
    are converted to Lab on load.  A missing target or a size mismatch
    raises an error naming the offending file.
    """
    root = Path(root)
    input_dir = root / "input"
    target_root = root / "target"
    parse_dir = root / "parse"
    if not input_dir.is_dir():
        return []
    inputs = sorted(p for p in input_dir.iterdir() if p.suffix.lower() == ".png")
    effects = sorted(d for d in target_root.iterdir() if d.is_dir()) if target_root.is_dir() else []

    examples: list[AdjustmentExample] = []
    for effect_dir in effects:
        effect = effect_dir.name
        for inp_path in inputs:
            tgt_path = effect_dir / inp_path.name
            if not tgt_path.is_file():
                raise FileNotFoundError(
                    f"missing target {tgt_path} for input {inp_path}"
                )
            inp = read_png(inp_path)
            tgt = read_png(tgt_path)
            if inp.shape != tgt.shape:
                raise ValueError(
                    f"size mismatch for pair {inp_path.name!r} in effect {effect!r}: "
                    f"input {inp.shape[:2]} vs target {tgt.shape[:2]}"
                )
            parse_path = parse_dir / inp_path.name
            parse = read_label_png(parse_path) if parse_path.is_file() else None
            examples.append(
                AdjustmentExample(
                    input=srgb_to_lab(inp),
                    target=srgb_to_lab(tgt),
                    parse_labels=parse,
                    effect=effect,
                    name=f"{effect}/{inp_path.stem}",
                )
            )
    return examples


# ---------------------------------------------------------------------------
# Augmentation


def draw_augment_params(seed: int) -> tuple[float, bool]:
    """Rotation angle (degrees, uniform in [-10, 10]) and horizontal flip."""
    rng = np.random.default_rng(seed)
    angle = float(rng.uniform(-10.0, 10.0))
    flip = bool(rng.random() < 0.5)
    return angle, flip


def _warp_coords(
    rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int], angle_deg: float, flip: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-map output coordinates to source coordinates.

    Forward transform: horizontal flip (optional), then rotation about the
    image center.  Source coordinates are clamped by the samplers, which
    realizes boundary replication.
    """
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    dr = rows - cy
    dc = cols - cx
    # rotate back by -theta
    src_r = cy + cos_t * dr - sin_t * dc
    src_c = cx + sin_t * dr + cos_t * dc
    if flip:
        src_c = (w - 1) - src_c
    return src_r, src_c


def _sample_bilinear(img: np.ndarray, src_r: np.ndarray, src_c: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    r = np.clip(src_r, 0.0, h - 1)
    c = np.clip(src_c, 0.0, w - 1)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0)[..., None]
    fc = (c - c0)[..., None]
    top = img[r0, c0] * (1 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1 - fc) + img[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def _sample_nearest(img: np.ndarray, src_r: np.ndarray, src_c: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    r = np.clip(np.rint(src_r), 0, h - 1).astype(np.intp)
    c = np.clip(np.rint(src_c), 0, w - 1).astype(np.intp)
    return img[r, c]


def augment(example: AdjustmentExample, seed: int, canvas: int = 512) -> AdjustmentExample:
    """Apply one shared random rotation + flip to input, target, and labels.

    The output canvas is ``canvas`` x ``canvas``; space not covered by the
    warped image is filled by replicating boundary pixels (clamped
    sampling).  Color planes are resampled bilinearly, parse labels with
    nearest neighbor.
    """
    angle, flip = draw_augment_params(seed)
    rows, cols = np.meshgrid(
        np.arange(canvas, dtype=np.float64), np.arange(canvas, dtype=np.float64), indexing="ij"
    )
    src_r, src_c = _warp_coords(rows, cols, example.shape, angle, flip)
    out_input = _sample_bilinear(example.input, src_r, src_c)
    out_target = _sample_bilinear(example.target, src_r, src_c)
    out_parse = None
    if example.parse_labels is not None:
        out_parse = _sample_nearest(example.parse_labels, src_r, src_c)
    return AdjustmentExample(
        input=out_input,
        target=out_target,
        parse_labels=out_parse,
        effect=example.effect,
        name=example.name,
    )


def sample_sparse_pixels(example: AdjustmentExample, count: int, seed: int) -> PixelBatch:
    """Draw ``count`` distinct pixel coordinates uniformly without replacement."""
    h, w = example.shape
    n = h * w
    if count > n:
        raise ValueError(f"requested {count} pixels from an image with only {n}")
    rng = np.random.default_rng(seed)
    flat = rng.choice(n, size=count, replace=False)
    rows = flat // w
    cols = flat % w
    coords = np.stack([rows, cols], axis=1)
    parse = example.parse_labels[rows, cols] if example.parse_labels is not None else None
    return PixelBatch(
        coordinates=coords,
        input_colors=example.input[rows, cols],
        target_colors=example.target[rows, cols],
        parse_labels=parse,
    )


# ---------------------------------------------------------------------------
# Synthetic benchmark


@dataclass
class SyntheticSpec:
    """Recipe for the synthetic benchmark.

    Each of the K presets is an affine map on Lab (``target = A @ lab + t``
    plus optional Gaussian noise).  Region layouts are Voronoi partitions
    over random sites, presets assigned round-robin; a fixed
    ``region_layout`` overrides the random layouts.  Each region also adds
    a preset-specific chroma signature to the *input* so that presets are
    inferable from image content.
    """

    k: int = 2
    preset_transforms: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    height: int = 64
    width: int = 64
    noise_sigma: float = 0.0
    sites_range: tuple[int, int] = (3, 8)
    region_layout: np.ndarray | None = None
    input_signature: float = 22.0  # chroma radius of the per-preset input cue
    corruption_fraction: float = 0.0  # fraction of pixels retouched with the wrong preset

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.preset_transforms:
            self.preset_transforms = default_preset_transforms(self.k)
        if len(self.preset_transforms) != self.k:
            raise ValueError(
                f"expected {self.k} preset transforms, got {len(self.preset_transforms)}"
            )


def default_preset_transforms(k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """K distinct, clearly separated affine Lab maps.

    Gains, offsets, and chroma scales are sized so that transformed
    benchmark colors stay inside the sRGB gamut: exactly at k = 2, and for
    all but ~1-2% of pixels at larger k (which clip on PNG export; the
    in-memory Lab targets are always exact).
    """
    transforms = []
    for i in range(k):
        phi = 2.0 * math.pi * i / max(k, 2)
        bright = i % 2 == 0
        gain = 1.08 if bright else 0.92
        offset = 6.0 if bright else -2.0
        s = 1.12 if bright else 0.72
        rot = np.array(
            [[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]], dtype=np.float64
        )
        A = np.zeros((3, 3), dtype=np.float64)
        A[0, 0] = gain
        A[1:, 1:] = s * rot
        t = np.array([offset, 8.0 * math.cos(phi + 1.0), -8.0 * math.sin(phi + 1.0)])
        transforms.append((A, t))
    return transforms


def _smooth_field(rng: np.random.Generator, h: int, w: int, low: float, high: float) -> np.ndarray:
    """Bilinearly upsampled coarse random grid; smooth by construction."""
    grid = rng.uniform(low, high, size=(5, 5))
    gr = np.linspace(0, 4, h)
    gc = np.linspace(0, 4, w)
    r0 = np.floor(gr).astype(int)
    c0 = np.floor(gc).astype(int)
    r1 = np.minimum(r0 + 1, 4)
    c1 = np.minimum(c0 + 1, 4)
    fr = (gr - r0)[:, None]
    fc = (gc - c0)[None, :]
    top = grid[np.ix_(r0, c0)] * (1 - fc) + grid[np.ix_(r0, c1)] * fc
    bot = grid[np.ix_(r1, c0)] * (1 - fc) + grid[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def _voronoi_layout(rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    n_sites = int(rng.integers(spec.sites_range[0], spec.sites_range[1] + 1))
    n_sites = max(n_sites, spec.k)
    sites = np.stack(
        [rng.uniform(0, spec.height, n_sites), rng.uniform(0, spec.width, n_sites)], axis=1
    )
    rows, cols = np.meshgrid(np.arange(spec.height), np.arange(spec.width), indexing="ij")
    d2 = (rows[..., None] - sites[:, 0]) ** 2 + (cols[..., None] - sites[:, 1]) ** 2
    nearest = np.argmin(d2, axis=-1)
    return (nearest % spec.k).astype(np.int64)


def _boundary_band(layout: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighborhood crosses a region boundary."""
    band = np.zeros_like(layout, dtype=bool)
    band[:-1, :] |= layout[:-1, :] != layout[1:, :]
    band[1:, :] |= layout[:-1, :] != layout[1:, :]
    band[:, :-1] |= layout[:, :-1] != layout[:, 1:]
    band[:, 1:] |= layout[:, :-1] != layout[:, 1:]
    return band


def generate_synthetic_benchmark(
    spec: SyntheticSpec, n_images: int, seed: int
) -> list[AdjustmentExample]:
    """Generate examples whose targets obey the per-region affine presets.

    The region layout is retained as ``parse_labels``.  With
    ``noise_sigma = 0`` and ``corruption_fraction = 0`` the residual
    ``target - (A_k @ input + t_k)`` is exactly zero.
    """
    seeds = np.random.SeedSequence(seed).spawn(n_images)
    examples = []
    for i in range(n_images):
        rng = np.random.default_rng(seeds[i])
        h, w = spec.height, spec.width
        base = np.stack(
            [
                _smooth_field(rng, h, w, 32.0, 68.0),
                _smooth_field(rng, h, w, -12.0, 12.0),
                _smooth_field(rng, h, w, -12.0, 12.0),
            ],
            axis=-1,
        )
        if spec.region_layout is not None:
            layout = np.asarray(spec.region_layout, dtype=np.int64)
            if layout.shape != (h, w):
                raise ValueError(
                    f"fixed region layout shape {layout.shape} != image shape {(h, w)}"
                )
        else:
            layout = _voronoi_layout(rng, spec)

        # per-preset chroma cue on the input so the presets correlate with
        # visible content, not raw position
        inp = base.copy()
        for k in range(spec.k):
            ang = 2.0 * math.pi * k / spec.k
            mask = layout == k
            inp[mask, 1] += spec.input_signature * math.cos(ang)
            inp[mask, 2] += spec.input_signature * math.sin(ang)
        # quantize through 8-bit sRGB: the input is then exactly
        # representable as a PNG and exactly in gamut
        inp = srgb_to_lab(lab_to_srgb(inp))

        apply_to = layout
        if spec.corruption_fraction > 0.0 and spec.k > 1:
            apply_to = layout.copy()
            n_corrupt = int(round(spec.corruption_fraction * h * w))
            band = np.flatnonzero(_boundary_band(layout))
            if len(band) >= n_corrupt:
                chosen = rng.choice(band, size=n_corrupt, replace=False)
            else:
                rest = np.setdiff1d(np.arange(h * w), band)
                extra = rng.choice(rest, size=n_corrupt - len(band), replace=False)
                chosen = np.concatenate([band, extra])
            flat = apply_to.reshape(-1)
            flat[chosen] = (flat[chosen] + 1) % spec.k

        target = np.empty_like(inp)
        for k in range(spec.k):
            A, t = spec.preset_transforms[k]
            mask = apply_to == k
            target[mask] = inp[mask] @ A.T + t
        if spec.noise_sigma > 0.0:
            target = target + rng.normal(0.0, spec.noise_sigma, size=target.shape)

        examples.append(
            AdjustmentExample(
                input=inp,
                target=target,
                parse_labels=layout,
                effect="synthetic",
                name=f"synthetic_{i:03d}",
            )
        )
    return examples


def write_dataset(root: str | Path, examples: list[AdjustmentExample]) -> None:
    """Write examples as a dataset directory (PNG round trip quantizes colors)."""
    root = Path(root)
    (root / "input").mkdir(parents=True, exist_ok=True)
    (root / "parse").mkdir(parents=True, exist_ok=True)
    for ex in examples:
        stem = ex.name.split("/")[-1]
        effect_dir = root / "target" / ex.effect
        effect_dir.mkdir(parents=True, exist_ok=True)
        write_png(root / "input" / f"{stem}.png", lab_to_srgb(ex.input))
        write_png(effect_dir / f"{stem}.png", lab_to_srgb(ex.target))
        if ex.parse_labels is not None:
            write_label_png(root / "parse" / f"{stem}.png", ex.parse_labels)


def synthetic_spec_to_config(spec: SyntheticSpec) -> str:
    """Serialize a SyntheticSpec as the documented key-value config block."""
    lines = [
        f"k = {spec.k}",
        f"height = {spec.height}",
        f"width = {spec.width}",
        f"noise_sigma = {spec.noise_sigma}",
        f"sites_min = {spec.sites_range[0]}",
        f"sites_max = {spec.sites_range[1]}",
        f"input_signature = {spec.input_signature}",
        f"corruption_fraction = {spec.corruption_fraction}",
    ]
    for i, (A, t) in enumerate(spec.preset_transforms):
        lines.append(f"preset{i}_matrix = " + " ".join(repr(float(v)) for v in A.reshape(-1)))
        lines.append(f"preset{i}_offset = " + " ".join(repr(float(v)) for v in t))
    return "\n".join(lines) + "\n"


def synthetic_spec_from_config(text: str) -> SyntheticSpec:
    kv: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    k = int(kv.get("k", 2))
    transforms = []
    for i in range(k):
        if f"preset{i}_matrix" not in kv:
            break
        A = np.array([float(v) for v in kv[f"preset{i}_matrix"].split()]).reshape(3, 3)
        t = np.array([float(v) for v in kv[f"preset{i}_offset"].split()])
        transforms.append((A, t))
    return SyntheticSpec(
        k=k,
        preset_transforms=transforms,
        height=int(kv.get("height", 64)),
        width=int(kv.get("width", 64)),
        noise_sigma=float(kv.get("noise_sigma", 0.0)),
        sites_range=(int(kv.get("sites_min", 3)), int(kv.get("sites_max", 8))),
        input_signature=float(kv.get("input_signature", 25.0)),
        corruption_fraction=float(kv.get("corruption_fraction", 0.0)),
    )
