"""HTTP inference service: stateless enhancement with customization.

Requests carry multipart PNG images; responses return the enhanced PNG
with the applied parameters echoed in headers. The loaded model is shared
read-only across requests and swapped atomically on reload.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import cv2
import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .colorspace import decode_image_array, encode_png
from .customize import CustomizeParams
from .inference import CheckpointError, ModelBundle, enhance_image, load_bundle
from .quantizer import gamut_hash

DEFAULT_MAX_SIDE = 4096

logger = logging.getLogger("brightcolor.service")


@dataclass
class ServiceState:
    bundle: ModelBundle | None = None
    max_side: int = DEFAULT_MAX_SIDE


def load_model(state: ServiceState, path: str) -> ModelBundle:
    """Load and atomically install a checkpoint; on failure the previous
    model keeps serving."""
    bundle = load_bundle(path)  # raises CheckpointError without touching state
    state.bundle = bundle
    return bundle


def _decode_upload(data: bytes, origin: str) -> np.ndarray:
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"could not decode {origin}")
    return decode_image_array(raw, origin=origin)


def _parse_float(value: str | None, name: str) -> float | None:
    if value is None or value == "":
        return None
    try:
        return float(value)
    except ValueError as exc:
        raise ValueError(f"field '{name}' is not a number: {value!r}") from exc


def create_app(
    model_path: str | None = None,
    max_side: int = DEFAULT_MAX_SIDE,
    studio_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="brightcolor inference service")
    state = ServiceState(max_side=max_side)
    app.state.enhance = state
    if model_path is not None:
        load_model(state, model_path)

    @app.get("/api/health")
    def health() -> JSONResponse:
        bundle = state.bundle
        if bundle is None:
            return JSONResponse({"status": "no model loaded"}, status_code=503)
        return JSONResponse(
            {
                "status": "ok",
                "model_id": bundle.model_id,
                "gamut_hash": bundle.payload["gamut_hash"],
                "step": bundle.step,
            }
        )

    @app.post("/api/reload")
    def reload(path: str = Form(...)) -> JSONResponse:
        try:
            bundle = load_model(state, path)
        except CheckpointError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse({"status": "ok", "model_id": bundle.model_id})

    @app.post("/api/enhance")
    def enhance(
        image: UploadFile = File(...),
        omega: str | None = Form(None),
        gamma: str | None = Form(None),
        reference: UploadFile | None = File(None),
    ) -> Response:
        bundle = state.bundle  # snapshot: requests finish on the model they started with
        if bundle is None:
            return JSONResponse({"error": "no model loaded"}, status_code=503)
        t0 = time.monotonic()
        try:
            omega_val = _parse_float(omega, "omega") or 0.0
            gamma_val = _parse_float(gamma, "gamma")
            img = _decode_upload(image.file.read(), "image")
            ref_img = None
            if reference is not None:
                ref_img = _decode_upload(reference.file.read(), "reference")
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        if max(img.shape[:2]) > state.max_side or (
            ref_img is not None and max(ref_img.shape[:2]) > state.max_side
        ):
            return JSONResponse(
                {"error": f"image exceeds size limit {state.max_side}"}, status_code=413
            )
        if gamma_val is not None and gamma_val > 0.0 and ref_img is None:
            return JSONResponse(
                {"error": "gamma > 0 requires a reference image"}, status_code=422
            )
        if ref_img is None:
            gamma_val = 0.0
        elif gamma_val is None:
            gamma_val = 0.7
        try:
            params = CustomizeParams(omega=omega_val, gamma=gamma_val, reference=ref_img)
            result = enhance_image(bundle.model, img, params)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        png = encode_png(np.clip(result.rgb, 0.0, 1.0))
        latency_ms = (time.monotonic() - t0) * 1000.0
        logger.info(
            "enhance model=%s size=%dx%d omega=%g gamma=%g reference=%s latency_ms=%.1f",
            bundle.model_id,
            img.shape[1],
            img.shape[0],
            omega_val,
            gamma_val,
            ref_img is not None,
            latency_ms,
        )
        headers = {
            "X-Model-Id": bundle.model_id,
            "X-Omega": f"{omega_val:g}",
            "X-Gamma": f"{gamma_val:g}",
            "X-Reference": "true" if ref_img is not None else "false",
            "X-Latency-Ms": f"{latency_ms:.1f}",
        }
        return Response(content=png, media_type="image/png", headers=headers)

    if studio_dir is not None:
        app.mount("/", StaticFiles(directory=studio_dir, html=True), name="studio")

    return app


def run(
    host: str,
    port: int,
    model_path: str | None,
    max_side: int = DEFAULT_MAX_SIDE,
    studio_dir: str | None = None,
) -> None:
    import uvicorn

    uvicorn.run(
        create_app(model_path=model_path, max_side=max_side, studio_dir=studio_dir),
        host=host,
        port=port,
        log_level="warning",
    )
