"""Optimization loop, evaluation runs, ablation variants, and run outputs.

The protocol defaults follow the training recipe the model was designed
for: Adam (beta1 0.9), learning rate 2e-4, batch size 8, and a multi-step
schedule that halves the rate at 50% and 75% of the step budget.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

import tomli

from . import report
from .colorspace import AB_BOUND, LabPlanes, lab_to_rgb, rgb_to_lab, write_png
from .data import DatasetError, PairDataset
from .inference import ModelBundle, enhance_image, load_bundle, save_checkpoint
from .losses import (
    LossWeights,
    NonFiniteLossError,
    charbonnier,
    class_loss,
    l1_chroma,
    perceptual,
    quarter_class_target,
    ssim_loss,
    total_loss,
    tv_loss,
)
from .metrics import delta_e_ab, psnr, ssim_metric
from .network import BrightColorNet, ModelConfig, build_model, compute_priors, count_parameters
from .quantizer import ColorGamut, load_gamut


class TrainingAborted(RuntimeError):
    """Non-finite loss; carries the offending term and last-good checkpoint."""

    def __init__(self, term: str, step: int, checkpoint: Path):
        super().__init__(
            f"aborted at step {step}: loss term '{term}' became non-finite; "
            f"last good weights saved to {checkpoint}"
        )
        self.term = term
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    lr: float = 2e-4
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    schedule: list[tuple[int, float]] | None = None  # None: halve at 50% and 75%
    max_steps: int = 2000
    seed: int = 0
    crop: int = 0  # 0 disables crop/rotation augmentation
    eval_every: int = 50
    checkpoint_every: int = 1000
    target_psnr: float | None = None  # early stop once both targets are met
    target_delta_e: float | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.schedule is not None:
            steps = [int(s) for s, _ in self.schedule]
            if steps != sorted(steps) or len(set(steps)) != len(steps):
                raise ValueError("schedule steps must be strictly increasing")

    def resolved_schedule(self) -> list[tuple[int, float]]:
        if self.schedule is not None:
            return [(int(s), float(m)) for s, m in self.schedule]
        return [(self.max_steps // 2, 0.5), (self.max_steps * 3 // 4, 0.5)]

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["schedule"] = [list(x) for x in self.resolved_schedule()]
        return out


_TRAIN_KEYS = {
    "lr",
    "batch_size",
    "beta1",
    "beta2",
    "schedule",
    "max_steps",
    "seed",
    "crop",
    "eval_every",
    "checkpoint_every",
    "target_psnr",
    "target_delta_e",
}


def load_train_config(path: str | Path, overrides: dict | None = None) -> tuple[TrainConfig, dict]:
    """Parse a TOML config file; returns (config, data section).

    Unknown keys raise ValueError naming the key. ``overrides`` (CLI flags)
    replace values from the [train] section.
    """
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    unknown_sections = set(raw) - {"train", "model", "weights", "data"}
    if unknown_sections:
        raise ValueError(f"unknown config sections: {sorted(unknown_sections)}")
    train_raw = dict(raw.get("train", {}))
    unknown = set(train_raw) - _TRAIN_KEYS
    if unknown:
        raise ValueError(f"unknown [train] keys: {sorted(unknown)}")
    if overrides:
        train_raw.update({k: v for k, v in overrides.items() if v is not None})
    if "schedule" in train_raw and train_raw["schedule"] is not None:
        train_raw["schedule"] = [tuple(x) for x in train_raw["schedule"]]
    model_raw = raw.get("model", {})
    unknown = set(model_raw) - {f.name for f in dataclasses.fields(ModelConfig)}
    if unknown:
        raise ValueError(f"unknown [model] keys: {sorted(unknown)}")
    weights_raw = raw.get("weights", {})
    unknown = set(weights_raw) - {f.name for f in dataclasses.fields(LossWeights)}
    if unknown:
        raise ValueError(f"unknown [weights] keys: {sorted(unknown)}")
    config = TrainConfig(
        model=ModelConfig(**model_raw), weights=LossWeights(**weights_raw), **train_raw
    )
    return config, dict(raw.get("data", {}))


@dataclass
class PreparedData:
    ids: list[str]
    low_rgb: torch.Tensor  # (N, 3, H, W)
    normal_rgb: torch.Tensor
    L_in: torch.Tensor  # (N, 1, H, W) network range
    C_in: torch.Tensor  # (N, 2, H, W)
    L_act: torch.Tensor
    C_act: torch.Tensor

    def __len__(self) -> int:
        return len(self.ids)


def prepare_tensors(dataset: PairDataset) -> PreparedData:
    """Preload every pair into network-range plane tensors."""
    ids, lows, normals, L_in, C_in, L_act, C_act = [], [], [], [], [], [], []
    for i in range(len(dataset)):
        pair = dataset[i]
        ids.append(pair.id)
        lp = rgb_to_lab(pair.low)
        np_ = rgb_to_lab(pair.normal)
        lows.append(pair.low.transpose(2, 0, 1))
        normals.append(pair.normal.transpose(2, 0, 1))
        L_in.append(lp.L.transpose(2, 0, 1) / 100.0)
        C_in.append(lp.C.transpose(2, 0, 1) / AB_BOUND)
        L_act.append(np_.L.transpose(2, 0, 1) / 100.0)
        C_act.append(np_.C.transpose(2, 0, 1) / AB_BOUND)

    def stack(arrs):
        return torch.from_numpy(np.stack(arrs).astype(np.float32))

    return PreparedData(
        ids=ids,
        low_rgb=stack(lows),
        normal_rgb=stack(normals),
        L_in=stack(L_in),
        C_in=stack(C_in),
        L_act=stack(L_act),
        C_act=stack(C_act),
    )


def _augment_batch(
    tensors: list[torch.Tensor], crop: int, rng: np.random.Generator
) -> list[torch.Tensor]:
    """Identical per-item crop window and k*90 rotation across all tensors."""
    n, _, h, w = tensors[0].shape
    outs = [[] for _ in tensors]
    for i in range(n):
        y0 = int(rng.integers(0, h - crop + 1))
        x0 = int(rng.integers(0, w - crop + 1))
        k = int(rng.integers(0, 4))
        for j, t in enumerate(tensors):
            window = t[i : i + 1, :, y0 : y0 + crop, x0 : x0 + crop]
            outs[j].append(torch.rot90(window, k, dims=(2, 3)))
    return [torch.cat(o) for o in outs]


def _recompose_rgb(L_pred: torch.Tensor, C_pred: torch.Tensor) -> list[np.ndarray]:
    """Network-range plane batches back to RGB images."""
    out = []
    for i in range(L_pred.shape[0]):
        L = L_pred[i].numpy().transpose(1, 2, 0) * 100.0
        C = C_pred[i].numpy().transpose(1, 2, 0) * AB_BOUND
        out.append(lab_to_rgb(LabPlanes(L=L.astype(np.float32), C=C.astype(np.float32))))
    return out


def _eval_prepared(model: torch.nn.Module, data: PreparedData, batch_size: int) -> dict:
    """Mean train-set PSNR / delta-E for the current weights."""
    decoupled = isinstance(model, BrightColorNet)
    psnrs, des = [], []
    model.eval()
    with torch.inference_mode():
        for start in range(0, len(data), batch_size):
            sl = slice(start, min(start + batch_size, len(data)))
            if decoupled:
                inv, edge = compute_priors(data.L_in[sl])
                L_pred, C_pred, _ = model(data.L_in[sl], data.C_in[sl], inv, edge)
                rgbs = _recompose_rgb(L_pred, C_pred)
            else:
                rgbs = [
                    r.numpy().transpose(1, 2, 0)
                    for r in model(data.low_rgb[sl])
                ]
            for i, rgb in enumerate(rgbs):
                target = data.normal_rgb[sl][i].numpy().transpose(1, 2, 0)
                psnrs.append(psnr(rgb, target))
                des.append(delta_e_ab(np.clip(rgb, 0, 1), target))
    model.train()
    return {"psnr": float(np.mean(psnrs)), "delta_e": float(np.mean(des))}


@dataclass
class TrainResult:
    checkpoint: Path
    history: list[dict]
    steps: int
    final_metrics: dict | None
    stopped_early: bool
    param_count: int


def train(config: TrainConfig, dataset: PairDataset, out_dir: str | Path) -> TrainResult:
    """Run the seeded optimization loop and write checkpoints and reports.

    Aborts with TrainingAborted (last-good weights saved) if any loss term
    becomes non-finite.
    """
    if len(dataset) == 0:
        raise DatasetError("dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    model = build_model(config.model)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2)
    )
    milestones = dict(config.resolved_schedule())

    data = prepare_tensors(dataset)
    decoupled = config.model.decouple
    use_q = decoupled and config.model.use_class_head
    gamut = load_gamut() if use_q else None
    augmenting = config.crop > 0

    static_q = None
    if use_q and not augmenting:
        static_q = quarter_class_target(data.C_act, gamut)
    static_priors = None
    if decoupled and not augmenting:
        static_priors = compute_priors(data.L_in)

    batch_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xBA7C4)))
    history: list[dict] = []
    final_metrics = None
    stopped_early = False
    ckpt_path = out_dir / "checkpoint.pt"
    t0 = time.time()

    def write_checkpoint(path: Path, step: int) -> Path:
        return save_checkpoint(
            path, model, config.model, step, optimizer=optimizer, train_config=config.to_dict()
        )

    step = 0
    for step in range(1, config.max_steps + 1):
        if step in milestones:
            for group in optimizer.param_groups:
                group["lr"] *= milestones[step]

        n = len(data)
        idx = batch_rng.choice(n, size=config.batch_size, replace=config.batch_size > n)
        idx_t = torch.from_numpy(np.ascontiguousarray(idx))

        if decoupled:
            L_in, C_in = data.L_in[idx_t], data.C_in[idx_t]
            L_act, C_act = data.L_act[idx_t], data.C_act[idx_t]
            if augmenting:
                aug_rng = np.random.default_rng(np.random.SeedSequence((config.seed, step)))
                L_in, C_in, L_act, C_act = _augment_batch(
                    [L_in, C_in, L_act, C_act], config.crop, aug_rng
                )
                inv, edge = compute_priors(L_in)
                q_act = quarter_class_target(C_act, gamut) if use_q else None
            else:
                inv, edge = static_priors[0][idx_t], static_priors[1][idx_t]
                q_act = static_q[idx_t] if use_q else None

            L_pred, C_pred, q_logits = model(L_in, C_in, inv, edge)
            terms = {
                "rec_l": charbonnier(L_pred, L_act),
                "ssim": ssim_loss(L_pred, L_act),
                "tv": tv_loss(L_pred),
                "rec_c": l1_chroma(C_pred, C_act),
                "per": perceptual(
                    torch.cat([L_pred, C_pred], dim=1), torch.cat([L_act, C_act], dim=1)
                ),
            }
            if use_q:
                terms["q"] = class_loss(q_logits, q_act)
        else:
            low, normal = data.low_rgb[idx_t], data.normal_rgb[idx_t]
            if augmenting:
                aug_rng = np.random.default_rng(np.random.SeedSequence((config.seed, step)))
                low, normal = _augment_batch([low, normal], config.crop, aug_rng)
            rgb_pred = model(low)
            terms = {
                "rec_l": charbonnier(rgb_pred, normal),
                "ssim": ssim_loss(rgb_pred, normal),
                "tv": tv_loss(rgb_pred),
                "per": perceptual(rgb_pred, normal),
            }

        try:
            loss, loss_report = total_loss(terms, config.weights)
        except NonFiniteLossError as exc:
            bad = write_checkpoint(out_dir / "last_good.pt", step - 1)
            raise TrainingAborted(exc.term, step, bad) from exc

        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        row = {"step": step, "lr": optimizer.param_groups[0]["lr"], "total": loss_report.total}
        row.update(loss_report.terms)
        history.append(row)

        if config.eval_every and step % config.eval_every == 0:
            final_metrics = _eval_prepared(model, data, config.batch_size)
            row.update(final_metrics)
            if (
                config.target_psnr is not None
                and config.target_delta_e is not None
                and final_metrics["psnr"] >= config.target_psnr
                and final_metrics["delta_e"] <= config.target_delta_e
            ):
                stopped_early = True
                break
        if config.checkpoint_every and step % config.checkpoint_every == 0:
            write_checkpoint(out_dir / f"checkpoint_{step:06d}.pt", step)

    write_checkpoint(ckpt_path, step)
    if final_metrics is None:
        final_metrics = _eval_prepared(model, data, config.batch_size)
    report.write_history_csv(history, out_dir / "train_log.csv")
    report.render_loss_curve(history, out_dir / "loss_curve.png")
    elapsed = time.time() - t0
    summary = {
        "steps": step,
        "elapsed_s": round(elapsed, 2),
        "stopped_early": stopped_early,
        "final": final_metrics,
        "params": count_parameters(model),
    }
    (out_dir / "train_summary.json").write_text(_json_dumps(summary))
    return TrainResult(
        checkpoint=ckpt_path,
        history=history,
        steps=step,
        final_metrics=final_metrics,
        stopped_early=stopped_early,
        param_count=count_parameters(model),
    )


def _json_dumps(obj: dict) -> str:
    import json

    return json.dumps(obj, indent=2) + "\n"


@dataclass
class EvalReport:
    rows: list[dict]
    aggregates: dict


def evaluate(
    checkpoint: str | Path | ModelBundle,
    dataset: PairDataset,
    out_dir: str | Path | None = None,
    dump_images: bool = False,
) -> EvalReport:
    """Per-image and aggregate metrics for a checkpoint over a dataset.

    Optionally writes the CSV report, metric figures, and enhanced images.
    """
    bundle = checkpoint if isinstance(checkpoint, ModelBundle) else load_bundle(checkpoint)
    rows = []
    dumps = []
    for i in range(len(dataset)):
        pair = dataset[i]
        result = enhance_image(bundle.model, pair.low)
        rows.append(
            {
                "id": pair.id,
                "psnr": psnr(result.rgb, pair.normal),
                "ssim": ssim_metric(result.rgb, pair.normal),
                "delta_e": delta_e_ab(np.clip(result.rgb, 0, 1), pair.normal),
            }
        )
        if dump_images:
            dumps.append((pair, result))
    aggregates = {
        m: float(np.mean([row[m] for row in rows])) for m in ("psnr", "ssim", "delta_e")
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.write_metrics_csv(rows, aggregates, out_dir / "report.csv")
        report.render_metrics_figure(rows, aggregates, out_dir / "metrics.png")
        for pair, result in dumps:
            write_png(out_dir / f"{pair.id}_enhanced.png", np.clip(result.rgb, 0, 1))
            report.render_comparison(
                pair.low, result.rgb, pair.normal, out_dir / f"{pair.id}_panel.png"
            )
    return EvalReport(rows=rows, aggregates=aggregates)


ABLATIONS = ("no_decouple", "no_share", "no_lam", "no_cem", "no_Lq")


def ablation_config(name: str, base: TrainConfig) -> TrainConfig:
    """Derive the flagged model/weights variant for a named ablation."""
    if name not in ABLATIONS:
        raise ValueError(f"unknown ablation '{name}'; expected one of {ABLATIONS}")
    model = dataclasses.replace(base.model)
    weights = dataclasses.replace(base.weights)
    if name == "no_decouple":
        model = dataclasses.replace(model, decouple=False)
    elif name == "no_share":
        model = dataclasses.replace(model, shared_encoder=False)
    elif name == "no_lam":
        model = dataclasses.replace(model, use_lam=False)
    elif name == "no_cem":
        model = dataclasses.replace(model, use_cem=False)
    elif name == "no_Lq":
        model = dataclasses.replace(model, use_class_head=False)
        weights = dataclasses.replace(weights, q=0.0)
    return dataclasses.replace(base, model=model, weights=weights)


@dataclass
class AblationResult:
    name: str
    train: TrainResult
    eval: EvalReport
    param_count: int
    baseline_param_count: int


def ablation_run(
    name: str, base: TrainConfig, dataset: PairDataset, out_dir: str | Path
) -> AblationResult:
    """Train and evaluate one ablation variant; logs parameter deltas."""
    out_dir = Path(out_dir) / name
    config = ablation_config(name, base)
    result = train(config, dataset, out_dir)
    ev = evaluate(result.checkpoint, dataset, out_dir=out_dir)
    baseline = count_parameters(build_model(base.model))
    return AblationResult(
        name=name,
        train=result,
        eval=ev,
        param_count=result.param_count,
        baseline_param_count=baseline,
    )
