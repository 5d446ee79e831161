"""Text-to-image generation: two-stage base/upsample synthesis plus resize.

Backends produce a 64x64 base image from a prompt and upsample it to 256x256;
this module resizes the result to the dataset's native size and caches every
generated image content-addressed, so interrupted bulk runs resume for free.
The stub backend is a pure function of (prompt, seed): a hash-derived base
color and stripe pattern with seeded jitter, gradient, orientation and pixel
noise, which makes classes separable by construction and lets the entire
pipeline run without a model.
"""

from __future__ import annotations

import colorsys
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from .errors import BackendError, PartialFailure
from .textgen import LabelSpec

logger = logging.getLogger(__name__)

BASE_SIZE = 64
UPSAMPLE_SIZE = 256

STUB_T2I_ID = "t2i-stub-v1"

# Stub image model constants. The base color and stripe frequency are pure
# functions of the prompt hash; per-image variation is a DC color shift, a
# low-frequency gradient, a randomly oriented stripe pattern and per-pixel
# noise, all seeded. The stripes are zero-mean, so mean channel values stay
# clustered around the base color: prompts whose base colors differ by more
# than the jitter diameter are linearly separable on mean channel values,
# while near-color prompts remain distinguishable by stripe frequency.
STUB_COLOR_JITTER = 30.0
STUB_GRADIENT_AMP = 22.0
STUB_TEXTURE_AMP = 26.0
STUB_PIXEL_NOISE = 12.0
STUB_UPSAMPLE_NOISE = 6.0
# Minimum base-hue distance the stub guarantees between the reference prompt
# pair used in tests ("bike"/"chair"); per-image mean hue stays well inside it.
STUB_MIN_HUE_GAP = 0.05

PROMPT_SOURCES = ("label", "description")


@dataclass(frozen=True)
class ImageSpec:
    """Pixel dimensions of dataset images."""

    width: int
    height: int
    channels: int = 3

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.channels != 3:
            raise ValueError("only 3-channel RGB images are supported")


@dataclass(frozen=True)
class SyntheticImage:
    """A generated image with full provenance for exact regeneration."""

    pixels: np.ndarray  # height x width x 3, uint8
    prompt: str
    prompt_source: str
    class_id: int
    index: int  # 1-based position within its generation request
    backend_id: str
    seed: int

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("pixels must be an HxWx3 uint8 array")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.prompt_source not in PROMPT_SOURCES:
            raise ValueError(f"prompt_source must be one of {PROMPT_SOURCES}")
        if self.index < 1:
            raise ValueError("index must be >= 1")


@dataclass(frozen=True)
class GenerationRequest:
    """A request for count synthetic images of one category."""

    label: LabelSpec
    prompt: str
    prompt_source: str
    count: int
    target_spec: ImageSpec
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.prompt_source not in PROMPT_SOURCES:
            raise ValueError(f"prompt_source must be one of {PROMPT_SOURCES}")


class T2IBackend(Protocol):
    """Two-stage text-to-image backend contract; both stages deterministic.

    max_parallelism declares how many images may generate concurrently
    (None = unlimited); gen_images may fan out up to it.
    """

    backend_id: str
    max_parallelism: int | None

    def generate_base(self, prompt: str, seed: int) -> np.ndarray:  # pragma: no cover
        ...

    def upsample(self, image: np.ndarray, prompt: str, seed: int) -> np.ndarray:  # pragma: no cover
        ...

    def finetune(self, dataset) -> None:  # pragma: no cover
        ...


def _prompt_digest(prompt: str) -> bytes:
    return hashlib.sha256(prompt.encode("utf-8")).digest()


def stub_base_hue(prompt: str) -> float:
    """Base hue in [0, 1) derived from the prompt hash."""
    return int.from_bytes(_prompt_digest(prompt)[:4], "big") / 2**32


def stub_base_color(prompt: str) -> np.ndarray:
    """Base RGB color: hash-derived hue plus hash-derived saturation/value.

    Saturation and value vary in moderate ranges so distinct prompts spread
    through color space rather than along the hue circle alone.
    """
    digest = _prompt_digest(prompt)
    saturation = 0.45 + 0.40 * digest[4] / 255
    value = 0.55 + 0.40 * digest[5] / 255
    r, g, b = colorsys.hsv_to_rgb(stub_base_hue(prompt), saturation, value)
    return np.array([r, g, b]) * 255.0


def _stub_rng(prompt: str, seed: int, stage: str) -> np.random.Generator:
    material = hashlib.sha256(
        _prompt_digest(prompt) + stage.encode() + int(seed).to_bytes(8, "big", signed=True)
    ).digest()
    return np.random.default_rng(int.from_bytes(material[:16], "big"))


def stub_stripe_frequency(prompt: str) -> int:
    """Stripe cycles across the base image, 2..9, derived from the prompt hash."""
    return 2 + _prompt_digest(prompt)[6] % 8


def stub_generate(prompt: str, seed: int) -> np.ndarray:
    """Procedural 64x64 base image: pure function of (prompt, seed)."""
    rng = _stub_rng(prompt, seed, "base")
    shift = rng.uniform(-STUB_COLOR_JITTER, STUB_COLOR_JITTER, size=3)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    phase = rng.uniform(-1.0, 1.0)
    stripe_theta = rng.uniform(0.0, np.pi)
    stripe_phase = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.linspace(-1.0, 1.0, BASE_SIZE)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    plane = np.cos(theta) * xx + np.sin(theta) * yy + phase
    ripple = np.sin(
        np.pi * stub_stripe_frequency(prompt)
        * (np.cos(stripe_theta) * xx + np.sin(stripe_theta) * yy)
        + stripe_phase
    )
    stripes = np.sign(ripple) + (ripple == 0.0)
    noise = rng.uniform(-STUB_PIXEL_NOISE, STUB_PIXEL_NOISE, size=(BASE_SIZE, BASE_SIZE, 3))
    pixels = (
        stub_base_color(prompt)[None, None, :]
        + shift[None, None, :]
        + STUB_GRADIENT_AMP * plane[:, :, None]
        + STUB_TEXTURE_AMP * stripes[:, :, None]
        + noise
    )
    return np.clip(pixels, 0, 255).astype(np.uint8)


class StubT2IBackend:
    """Hermetic procedural backend implementing both generation stages.

    The optional GENAUG_STUB_DELAY_MS environment variable slows each base
    generation down; used to exercise interrupt/resume behaviour in tests.
    """

    backend_id = STUB_T2I_ID
    max_parallelism = None  # pure function, safe to call from anywhere

    def __init__(self):
        self.finetune_calls = 0

    def generate_base(self, prompt: str, seed: int) -> np.ndarray:
        delay_ms = int(os.environ.get("GENAUG_STUB_DELAY_MS", "0") or "0")
        if delay_ms > 0:
            time.sleep(delay_ms / 1000.0)
        return stub_generate(prompt, seed)

    def upsample(self, image: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        if image.shape != (BASE_SIZE, BASE_SIZE, 3):
            raise ValueError(f"upsample expects a {BASE_SIZE}x{BASE_SIZE}x3 image")
        factor = UPSAMPLE_SIZE // BASE_SIZE
        big = np.repeat(np.repeat(image, factor, axis=0), factor, axis=1).astype(np.float64)
        rng = _stub_rng(prompt, seed, "upsample")
        big += rng.uniform(-STUB_UPSAMPLE_NOISE, STUB_UPSAMPLE_NOISE, size=big.shape)
        return np.clip(big, 0, 255).astype(np.uint8)

    def finetune(self, dataset) -> None:
        # Declared hook; real fine-tuning is a backend concern. Recorded no-op.
        self.finetune_calls += 1


def resize(image: np.ndarray, target: ImageSpec, filter: str = "bilinear") -> np.ndarray:
    """Resize a 256x256x3 uint8 image down to target using bilinear filtering.

    Sampling uses half-pixel centers with edge clamping; values are rounded
    half-up to uint8. Upscaling beyond 256 is not supported.
    """
    if filter != "bilinear":
        raise ValueError(f"unsupported filter: {filter!r}")
    if image.shape != (UPSAMPLE_SIZE, UPSAMPLE_SIZE, 3):
        raise ValueError(f"resize expects a {UPSAMPLE_SIZE}x{UPSAMPLE_SIZE}x3 source")
    if target.height > UPSAMPLE_SIZE or target.width > UPSAMPLE_SIZE:
        raise ValueError("upscaling beyond the 256x256 upsample output is not supported")
    if (target.height, target.width) == (UPSAMPLE_SIZE, UPSAMPLE_SIZE):
        return image.copy()

    src = image.astype(np.float64)
    sy = UPSAMPLE_SIZE / target.height
    sx = UPSAMPLE_SIZE / target.width
    ys = (np.arange(target.height) + 0.5) * sy - 0.5
    xs = (np.arange(target.width) + 0.5) * sx - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, UPSAMPLE_SIZE - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, UPSAMPLE_SIZE - 1)
    y1 = np.minimum(y0 + 1, UPSAMPLE_SIZE - 1)
    x1 = np.minimum(x0 + 1, UPSAMPLE_SIZE - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]

    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def normalize(
    image: np.ndarray,
    mean: float | tuple[float, float, float] | None = None,
    std: float | tuple[float, float, float] | None = None,
) -> np.ndarray:
    """Map a uint8 image to floats in [0, 1], optionally standardizing.

    With mean/std supplied the result is (pixel/255 - mean) / std per channel.
    """
    out = image.astype(np.float64) / 255.0
    if mean is not None or std is not None:
        if mean is None or std is None:
            raise ValueError("mean and std must be supplied together")
        out = (out - np.asarray(mean)) / np.asarray(std)
    return out


def pixel_checksum(pixels: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(pixels).tobytes()).hexdigest()


class ImageCache:
    """Content-addressed store for generated images.

    Layout: root/<backend_id>/<key>.png plus a <key>.meta JSON sidecar holding
    prompt, seed, spec and a checksum of the raw pixel bytes. Writes go to a
    temporary file then an atomic rename, so concurrent writers of one key are
    safe. Lossless PNG only: cache soundness requires byte-exact round-trips.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def key(self, backend_id: str, prompt: str, seed: int, spec: ImageSpec) -> str:
        material = json.dumps(
            {
                "backend_id": backend_id,
                "prompt": prompt,
                "seed": seed,
                "spec": [spec.height, spec.width, spec.channels],
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def image_path(self, backend_id: str, key: str) -> Path:
        return self.root / backend_id / f"{key}.png"

    def meta_path(self, backend_id: str, key: str) -> Path:
        return self.root / backend_id / f"{key}.meta"

    def load(self, backend_id: str, key: str) -> np.ndarray | None:
        """Return cached pixels, or None on miss or checksum mismatch."""
        img_path = self.image_path(backend_id, key)
        meta_path = self.meta_path(backend_id, key)
        if not img_path.exists() or not meta_path.exists():
            return None
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            with Image.open(img_path) as im:
                pixels = np.asarray(im.convert("RGB"))
        except Exception as e:
            logger.warning("cache entry %s unreadable (%s); regenerating", key, e)
            return None
        if pixel_checksum(pixels) != meta.get("checksum"):
            logger.warning("cache entry %s failed checksum; regenerating", key)
            return None
        return pixels

    def store(self, backend_id: str, key: str, pixels: np.ndarray, meta: dict) -> Path:
        directory = self.root / backend_id
        directory.mkdir(parents=True, exist_ok=True)
        img_path = self.image_path(backend_id, key)
        meta_path = self.meta_path(backend_id, key)

        record = dict(meta)
        record["checksum"] = pixel_checksum(pixels)

        tmp_img = directory / f".{key}.png.tmp{os.getpid()}"
        Image.fromarray(pixels, mode="RGB").save(tmp_img, format="PNG")
        os.replace(tmp_img, img_path)

        tmp_meta = directory / f".{key}.meta.tmp{os.getpid()}"
        tmp_meta.write_text(
            json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
        )
        os.replace(tmp_meta, meta_path)
        return img_path


def adversarial_prompt(label_text: str) -> str:
    """Prompt for desk-scale stand-in adversarial images of a label.

    Out-of-distribution images are normally collected externally; for hermetic
    runs a perturbed prompt pushes the stub generator off the label's usual
    pattern while keeping the class identity.
    """
    return f"a {label_text} in an unusual style"


def gen_images(
    backend: T2IBackend, req: GenerationRequest, cache: ImageCache
) -> list[SyntheticImage]:
    """Generate req.count images: base -> upsample -> resize, cache-backed.

    Image j (1-based) uses seed req.seed + j, so a request is resumable and
    every image is regenerable from its own provenance. A backend failure on
    image j raises PartialFailure listing the indices completed before it.
    """
    images = []
    completed = []
    for j in range(1, req.count + 1):
        seed = req.seed + j
        key = cache.key(backend.backend_id, req.prompt, seed, req.target_spec)
        pixels = cache.load(backend.backend_id, key)
        if pixels is None:
            try:
                base = backend.generate_base(req.prompt, seed)
                up = backend.upsample(base, req.prompt, seed)
                pixels = resize(up, req.target_spec)
            except BackendError:
                raise
            except Exception as e:
                raise PartialFailure(
                    f"backend failed on image {j}/{req.count} for prompt {req.prompt!r}: {e}",
                    completed=completed,
                    failed_index=j,
                ) from e
            cache.store(
                backend.backend_id,
                key,
                pixels,
                {
                    "prompt": req.prompt,
                    "seed": seed,
                    "spec": [req.target_spec.height, req.target_spec.width, 3],
                    "backend_id": backend.backend_id,
                },
            )
        images.append(
            SyntheticImage(
                pixels=pixels,
                prompt=req.prompt,
                prompt_source=req.prompt_source,
                class_id=req.label.class_id,
                index=j,
                backend_id=backend.backend_id,
                seed=seed,
            )
        )
        completed.append(j)
    return images
