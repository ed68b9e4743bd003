"""Command-line entry point covering the full lifecycle.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure during optimization.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__


@click.group()
@click.version_option(version=__version__)
def cli() -> None:
    """Decoupled low-light enhancement: train, enhance, evaluate, serve."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="runs/train", show_default=True)
@click.option("--low", "low_dir", default=None, help="Override [data] low_dir.")
@click.option("--high", "high_dir", default=None, help="Override [data] high_dir.")
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--weight", "weight_overrides", multiple=True, metavar="NAME=VALUE",
              help="Override a loss weight, e.g. --weight tv=0.5 (repeatable).")
def train(config_path, out_dir, low_dir, high_dir, lr, batch_size, max_steps, seed,
          weight_overrides) -> None:
    """Train a model from a TOML config file."""
    import dataclasses

    from .data import load_pairs
    from .trainer import load_train_config, train as run_train

    overrides = {"lr": lr, "batch_size": batch_size, "max_steps": max_steps, "seed": seed}
    try:
        config, data_section = load_train_config(config_path, overrides)
        weight_values = {}
        for item in weight_overrides:
            name, _, value = item.partition("=")
            weight_values[name] = float(value)
        if weight_values:
            config = dataclasses.replace(
                config, weights=dataclasses.replace(config.weights, **weight_values)
            )
    except (ValueError, TypeError) as exc:
        raise click.UsageError(f"config error in {config_path}: {exc}")
    low = low_dir or data_section.get("low_dir")
    high = high_dir or data_section.get("high_dir")
    if not low or not high:
        raise click.UsageError("data directories required (config [data] or --low/--high)")
    dataset = load_pairs(low, high)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recorded = {k: v for k, v in overrides.items() if v is not None}
    if weight_values:
        recorded["weights"] = weight_values
    manifest = {
        "config_file": str(config_path),
        "overrides": recorded,
        "resolved": config.to_dict(),
        "data": {"low_dir": str(low), "high_dir": str(high)},
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=2) + "\n")
    result = run_train(config, dataset, out)
    click.echo(
        f"trained {result.steps} steps ({result.param_count} params); "
        f"train-set psnr={result.final_metrics['psnr']:.2f} dB "
        f"delta_e={result.final_metrics['delta_e']:.2f}; checkpoint: {result.checkpoint}"
    )


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--omega", type=float, default=0.0, show_default=True)
@click.option("--gamma", type=float, default=None, help="Reference blend weight (default 0.7 with a reference).")
@click.option("--reference", "reference_path", type=click.Path(exists=True), default=None)
def enhance(input_path, checkpoint, output_path, omega, gamma, reference_path) -> None:
    """Enhance a single image with optional customization."""
    import numpy as np

    from .colorspace import read_png, write_png
    from .customize import CustomizeParams
    from .inference import enhance_image, load_bundle

    if gamma is not None and gamma > 0.0 and reference_path is None:
        raise click.UsageError("--gamma > 0 requires --reference")
    reference = read_png(reference_path) if reference_path else None
    if reference is None:
        gamma = 0.0
    elif gamma is None:
        gamma = 0.7
    bundle = load_bundle(checkpoint)
    img = read_png(input_path)
    params = CustomizeParams(omega=omega, gamma=gamma, reference=reference)
    result = enhance_image(bundle.model, img, params)
    write_png(output_path, np.clip(result.rgb, 0.0, 1.0))
    click.echo(f"wrote {output_path} (omega={omega:g}, gamma={gamma:g})")


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--low", "low_dir", required=True, type=click.Path())
@click.option("--high", "high_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, help="Write report.csv and figures here.")
@click.option("--dump-images", is_flag=True, default=False)
def eval_cmd(checkpoint, low_dir, high_dir, out_dir, dump_images) -> None:
    """Evaluate a checkpoint over a paired dataset and print the table."""
    from .data import load_pairs
    from .trainer import evaluate

    dataset = load_pairs(low_dir, high_dir)
    rep = evaluate(checkpoint, dataset, out_dir=out_dir, dump_images=dump_images)
    click.echo(f"{'id':<16}{'psnr':>10}{'ssim':>10}{'delta_e':>10}")
    for row in rep.rows:
        click.echo(f"{row['id']:<16}{row['psnr']:>10.3f}{row['ssim']:>10.4f}{row['delta_e']:>10.3f}")
    agg = rep.aggregates
    click.echo(f"{'mean':<16}{agg['psnr']:>10.3f}{agg['ssim']:>10.4f}{agg['delta_e']:>10.3f}")


@cli.command()
@click.option("--regenerate", is_flag=True, default=False, help="Rebuild the bin table from scratch.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the table here.")
@click.option("--check", is_flag=True, default=False, help="Verify against the shipped fixture.")
def gamut(regenerate, out_path, check) -> None:
    """Inspect or regenerate the quantized color bin fixture."""
    from .quantizer import build_gamut, fixture_path, format_gamut_text, gamut_hash, load_gamut

    if regenerate:
        g = build_gamut()
        text = format_gamut_text(g)
        if out_path:
            Path(out_path).write_text(text)
            click.echo(f"wrote {g.n_bins} bins to {out_path}")
        if check or not out_path:
            shipped = fixture_path().read_text()
            if text != shipped:
                raise click.ClickException("regenerated table differs from the shipped fixture")
            click.echo("regenerated table matches the shipped fixture bit-exactly")
    else:
        g = load_gamut()
        click.echo(f"{g.n_bins} bins, grid {g.grid:g}, sha256 {gamut_hash()}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--max-side", type=int, default=4096, show_default=True)
@click.option("--studio", "studio_dir", type=click.Path(exists=True), default=None,
              help="Serve a built studio UI from this directory.")
def serve(model_path, host, port, max_side, studio_dir) -> None:
    """Start the HTTP inference service."""
    from .service import run

    click.echo(f"serving on http://{host}:{port} (model: {model_path or 'none'})")
    run(host, port, model_path, max_side=max_side, studio_dir=studio_dir)


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--count", type=int, default=16, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise-sigma", type=float, default=0.01, show_default=True)
@click.option("--desat", type=float, default=0.5, show_default=True)
@click.option("--gamma-min", type=float, default=2.0, show_default=True)
@click.option("--gamma-max", type=float, default=3.0, show_default=True)
def synth(out_dir, count, size, seed, noise_sigma, desat, gamma_min, gamma_max) -> None:
    """Generate the synthetic desk-scale paired dataset."""
    from .data import generate_synthetic_dataset

    dataset = generate_synthetic_dataset(
        out_dir,
        count=count,
        size=size,
        seed=seed,
        gamma_range=(gamma_min, gamma_max),
        noise_sigma=noise_sigma,
        desat=desat,
    )
    click.echo(f"wrote {len(dataset)} pairs to {out_dir}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    from .data import DatasetError
    from .inference import CheckpointError
    from .losses import NonFiniteLossError
    from .trainer import TrainingAborted

    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (DatasetError, CheckpointError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except (NonFiniteLossError, TrainingAborted) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    else:
        return 0


if __name__ == "__main__":
    sys.exit(main())
