"""Checkpoint loading and padded end-to-end image enhancement."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .colorspace import AB_BOUND, LabPlanes, lab_to_rgb, rgb_to_lab
from .customize import CustomizeParams, customize_guidance
from .network import BrightColorNet, ModelConfig, build_model, compute_priors
from .quantizer import ColorGamut, gamut_hash, load_gamut

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Unreadable, incompatible, or gamut-mismatched checkpoint."""


@dataclass
class ModelBundle:
    model: nn.Module
    config: ModelConfig
    gamut: ColorGamut
    model_id: str
    step: int
    payload: dict


def save_checkpoint(
    path: str | Path,
    model: nn.Module,
    model_config: ModelConfig,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
    train_config: dict | None = None,
) -> Path:
    """Write the versioned checkpoint: named weight table, embedded model
    config, gamut fixture hash, and optional optimizer state."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": vars(model_config).copy(),
        "train_config": train_config,
        "step": step,
        "state_dict": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "gamut_hash": gamut_hash(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_bundle(path: str | Path) -> ModelBundle:
    """Load a checkpoint into an eval-mode model, refusing on version or
    gamut-fixture mismatch."""
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version: {version}")
    expected = gamut_hash()
    if payload["gamut_hash"] != expected:
        raise CheckpointError(
            "checkpoint gamut fixture hash does not match the installed fixture "
            f"({payload['gamut_hash'][:12]} != {expected[:12]})"
        )
    config = ModelConfig(**payload["model_config"])
    model = build_model(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    model_id = hashlib.sha256(path.read_bytes()).hexdigest()[:16]
    return ModelBundle(
        model=model,
        config=config,
        gamut=load_gamut(),
        model_id=model_id,
        step=int(payload.get("step", 0)),
        payload=payload,
    )


def pad_to_multiple(arr: np.ndarray, multiple: int = 16) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad (H, W, C) on the bottom/right to a size multiple."""
    h, w = arr.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return arr, (h, w)
    # reflect padding needs at least 2 rows/cols; tile tiny inputs first
    if h == 1 or w == 1:
        reps = (2 if h == 1 else 1, 2 if w == 1 else 1, 1)
        arr = np.tile(arr, reps)
        return pad_to_multiple(arr, multiple)
    padded = np.pad(arr, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    return padded, (h, w)


@dataclass
class EnhanceResult:
    rgb: np.ndarray
    L: np.ndarray  # predicted lightness, Lab units (H, W, 1)
    C: np.ndarray  # predicted chrominance, Lab units (H, W, 2)
    q: np.ndarray | None  # quantized-color probabilities (h, w, Q) or None


def enhance_image(
    model: nn.Module,
    img: np.ndarray,
    params: CustomizeParams | None = None,
) -> EnhanceResult:
    """Enhance one RGB image (float [0, 1]) with optional customization.

    Pads internally to a multiple of 16 and crops the padding off the
    outputs. Decoupled models get the customized guidance path; the fused
    RGB ablation model only supports default parameters.
    """
    params = params or CustomizeParams()
    if not isinstance(model, BrightColorNet):
        if params.omega != 0.0 or params.reference is not None:
            raise ValueError("customization requires the decoupled model")
        padded, (h, w) = pad_to_multiple(np.asarray(img, dtype=np.float32))
        x = torch.from_numpy(padded.transpose(2, 0, 1))[None]
        with torch.inference_mode():
            out = model(x)[0].numpy().transpose(1, 2, 0)[:h, :w]
        planes = rgb_to_lab(np.clip(out, 0.0, 1.0))
        return EnhanceResult(rgb=out.astype(np.float32), L=planes.L, C=planes.C, q=None)

    planes = rgb_to_lab(img)
    guidance = customize_guidance(planes.C, params)

    stack = np.concatenate(
        [planes.L / 100.0, guidance.C_in / AB_BOUND]
        + ([guidance.C_ref / AB_BOUND] if guidance.C_ref is not None else []),
        axis=2,
    ).astype(np.float32)
    padded, (h, w) = pad_to_multiple(stack)
    tens = torch.from_numpy(padded.transpose(2, 0, 1))[None]
    L_in, C_in = tens[:, :1], tens[:, 1:3]
    C_ref = tens[:, 3:5] if guidance.C_ref is not None else None
    with torch.inference_mode():
        inv, edge = compute_priors(L_in)
        L_pred, C_pred, q_logits = model(
            L_in, C_in, inv, edge, C_ref=C_ref, gamma=guidance.gamma
        )
        L_out = L_pred[0].numpy().transpose(1, 2, 0)[:h, :w] * 100.0
        C_out = C_pred[0].numpy().transpose(1, 2, 0)[:h, :w] * AB_BOUND
        q_out = None
        if q_logits is not None:
            probs = torch.softmax(q_logits[0], dim=0).numpy().transpose(1, 2, 0)
            q_out = probs[: h // 4, : w // 4]
    rgb = lab_to_rgb(LabPlanes(L=L_out.astype(np.float32), C=C_out.astype(np.float32)))
    return EnhanceResult(rgb=rgb, L=L_out.astype(np.float32), C=C_out.astype(np.float32), q=q_out)
