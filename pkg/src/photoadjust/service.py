"""HTTP inference service: adjustment, map extraction, and map-substitution
personalization.

JSON envelope with base64 PNG payloads throughout.  Endpoints:

* ``GET /health`` - status plus model metadata.
* ``GET /presets`` - per-preset before/after preview swatches.
* ``POST /adjust`` - body ``{"image": <b64 PNG>, "user_map": null |
  {"png": <b64>} | {"rle": {...}}}``; returns the adjusted image plus the
  adjustment map in both serializations.  Without a user map the model's
  own hard-inference output and extracted map are returned; with one, the
  map is substituted for the model's posterior and echoed back.

The model is loaded before the socket binds and is never mutated by
requests.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel

from .adjustmap import map_from_png_bytes, map_from_rle, map_to_png_bytes, map_to_rle
from .checkpoint import build_model, load_checkpoint
from .colorspace import lab_to_srgb, srgb_to_lab
from .model import AdjustmentModel

DEFAULT_MAX_EDGE = 1024

# Lab probe palette for preset previews: grays plus saturated primaries.
_PROBE_SRGB = [
    (32, 32, 32),
    (96, 96, 96),
    (160, 160, 160),
    (224, 224, 224),
    (200, 60, 60),
    (60, 160, 60),
    (60, 90, 200),
    (210, 180, 70),
]
_SWATCH = 16


class UserMap(BaseModel):
    png: str | None = None
    rle: dict | None = None


class AdjustRequest(BaseModel):
    image: str
    user_map: UserMap | None = None


def _bad_request(code: str, message: str) -> HTTPException:
    return HTTPException(status_code=400, detail={"code": code, "message": message})


def _decode_png(b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise _bad_request("bad_image", f"could not decode PNG payload: {exc}") from exc


def _encode_png(srgb: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(srgb, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _probe_palette_lab() -> np.ndarray:
    row = np.repeat(np.array(_PROBE_SRGB, dtype=np.uint8)[None, :, :], _SWATCH, axis=0)
    strip = np.repeat(row, _SWATCH, axis=1)
    return srgb_to_lab(strip)


def create_app(model: AdjustmentModel, variant: str = "", max_edge: int = DEFAULT_MAX_EDGE) -> FastAPI:
    if model.context_mode != "map":
        raise ValueError(
            "the service requires a semantic-adjustment-map checkpoint "
            "(context mode 'map'); this model uses convolutional context"
        )
    model.eval()
    app = FastAPI(title="photoadjust")
    k = model.k

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "k": k,
            "variant": variant,
            "context_dim": model.config.backbone.context_dim,
        }

    @app.get("/presets")
    def presets() -> dict:
        palette = _probe_palette_lab()
        h, w = palette.shape[:2]
        before = _encode_png(lab_to_srgb(palette))
        entries = []
        for preset in range(k):
            uniform = np.full((h, w), preset, dtype=np.int64)
            after = lab_to_srgb(model.adjust_image_with_map(palette, uniform))
            entries.append({"index": preset, "before": before, "after": _encode_png(after)})
        return {"presets": entries}

    @app.post("/adjust")
    def adjust(request: AdjustRequest) -> dict:
        srgb = _decode_png(request.image)
        h, w = srgb.shape[:2]
        if max(h, w) > max_edge:
            raise _bad_request(
                "image_too_large",
                f"image edge {max(h, w)} exceeds the maximum {max_edge}; "
                "resize client-side (the service never resamples)",
            )
        lab = srgb_to_lab(srgb)

        if request.user_map is not None:
            assignments = _decode_user_map(request.user_map, (h, w), k)
            adjusted = model.adjust_image_with_map(lab, assignments)
        else:
            result = model.adjust_image(lab, mode="hard")
            adjusted = result.adjusted
            assignments = result.assignments

        return {
            "adjusted": _encode_png(lab_to_srgb(adjusted)),
            "map": {
                "png": base64.b64encode(map_to_png_bytes(assignments, k)).decode("ascii"),
                "rle": map_to_rle(assignments, k),
            },
        }

    return app


def _decode_user_map(user_map: UserMap, image_hw: tuple[int, int], k: int) -> np.ndarray:
    if (user_map.png is None) == (user_map.rle is None):
        raise _bad_request("bad_map", "user_map must carry exactly one of 'png' or 'rle'")
    try:
        if user_map.png is not None:
            assignments = map_from_png_bytes(base64.b64decode(user_map.png, validate=True))
        else:
            assignments = map_from_rle(user_map.rle)
    except Exception as exc:
        raise _bad_request("bad_map", f"could not decode user map: {exc}") from exc
    if assignments.shape != image_hw:
        raise _bad_request(
            "map_size_mismatch",
            f"map shape {assignments.shape} does not match image shape {image_hw}",
        )
    if assignments.size and (assignments.min() < 0 or assignments.max() >= k):
        raise _bad_request(
            "map_index_out_of_range",
            f"preset index {int(assignments.max())} out of range 0..{k - 1}",
        )
    return assignments


def serve(checkpoint_path: str, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Load a checkpoint and serve it; binds only after the model loads."""
    import uvicorn

    try:
        ckpt = load_checkpoint(checkpoint_path)
        model = build_model(ckpt)
        app = create_app(model, variant=ckpt.config.variant)
    except Exception as exc:
        raise SystemExit(f"cannot start service: {exc}") from exc
    uvicorn.run(app, host=host, port=port, log_level="warning")
