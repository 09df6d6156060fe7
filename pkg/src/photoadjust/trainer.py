"""Optimization loop wiring data, features, heads, and losses together,
with CSV logging, validation-driven checkpointing, and seeded
reproducibility.

One epoch is one sampled-batch pass over every training image.  When the
multi-task branch is active, every step consumes one adjustment batch and
one parse batch (a 1:1 interleave) and minimizes their combined
objective.
"""

from __future__ import annotations

import csv
import math
import tempfile
from pathlib import Path

import numpy as np
import torch

from .adjustmap import (
    ClassWeightState,
    class_weights,
    expected_regression_loss,
    preset_regression_losses,
    update_frequency_ema,
)
from .bilinear import scale_lab
from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .colorspace import lab_l2_distance
from .config import TrainConfig
from .data import AdjustmentExample, PixelBatch, augment, sample_sparse_pixels
from .losses import channel_loss, parse_cross_entropy, total_loss
from .model import AdjustmentModel


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def split_validation(
    dataset: list[AdjustmentExample], val_fraction: float, seed: int
) -> tuple[list[AdjustmentExample], list[AdjustmentExample]]:
    """Hold out a validation subset (round(val_fraction * n), at least one
    image when two or more exist)."""
    n = len(dataset)
    n_val = int(round(val_fraction * n))
    if n_val == 0 and n >= 2 and val_fraction > 0:
        n_val = 1
    if n_val >= n:
        n_val = n - 1
    order = np.random.default_rng(_derive_seed(seed, 0x5A11D)).permutation(n)
    val_idx = set(int(i) for i in order[:n_val])
    train = [ex for i, ex in enumerate(dataset) if i not in val_idx]
    val = [ex for i, ex in enumerate(dataset) if i in val_idx]
    return train, val


def _batch_tensors(model: AdjustmentModel, batch: list[tuple[AdjustmentExample, PixelBatch]]):
    dtype = model.dtype
    images = torch.as_tensor(
        np.stack([ex.input for ex, _ in batch]), dtype=dtype
    )
    x = scale_lab(images).permute(0, 3, 1, 2).contiguous()
    coords = torch.as_tensor(
        np.stack([pb.coordinates for _, pb in batch]), dtype=dtype
    )
    inputs = torch.as_tensor(np.stack([pb.input_colors for _, pb in batch]), dtype=dtype)
    targets = torch.as_tensor(np.stack([pb.target_colors for _, pb in batch]), dtype=dtype)
    labels = None
    if all(pb.parse_labels is not None for _, pb in batch):
        labels = torch.as_tensor(np.stack([pb.parse_labels for _, pb in batch]).astype(np.int64))
    return x, coords, inputs, targets, labels


def regression_loss_conv(out: dict, inputs: torch.Tensor, targets: torch.Tensor, loss_cfg):
    pred_norm = scale_lab(inputs) + out["residual"]
    return channel_loss(scale_lab(targets) - pred_norm, loss_cfg).mean()


def regression_loss_map(
    out: dict, inputs: torch.Tensor, targets: torch.Tensor, loss_cfg, weights
):
    pred_norm = scale_lab(inputs).unsqueeze(-2) + out["per_preset_residuals"]
    losses = preset_regression_losses(scale_lab(targets), pred_norm, loss_cfg)
    k = losses.shape[-1]
    return expected_regression_loss(
        out["posterior"].reshape(-1, k), losses.reshape(-1, k), weights
    )


def validate(model: AdjustmentModel, examples: list[AdjustmentExample]) -> float:
    """Mean Lab-L2 of dense hard inference against the targets."""
    model.eval()
    dists = []
    for ex in examples:
        result = model.adjust_image(ex.input)
        dists.append(lab_l2_distance(result.adjusted, ex.target))
    model.train()
    return float(np.mean(dists))


def train(
    config: TrainConfig,
    dataset: list[AdjustmentExample],
    parse_dataset: list[AdjustmentExample] | None = None,
    out_dir: str | Path | None = None,
) -> ModelCheckpoint:
    """Train a model and return the checkpoint with the best validation
    Lab-L2 (the final state when no validation split exists).

    Writes ``model.ckpt`` (best), ``final.ckpt``, and ``train_log.csv``
    into ``out_dir``.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if config.multitask:
        if parse_dataset is None:
            parse_dataset = [ex for ex in dataset if ex.parse_labels is not None]
        if not parse_dataset or any(ex.parse_labels is None for ex in parse_dataset):
            raise ValueError("multi-task variant requires examples with parse labels")

    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="photoadjust_train_")
        out_dir = tmp.name
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    model = AdjustmentModel(config.model_config())
    model.train()
    loss_cfg = config.loss_config()

    optimizer = torch.optim.Adam(
        [
            {
                "params": model.backbone_parameters(),
                "lr": config.learning_rate * config.backbone_lr_multiplier,
            },
            {"params": model.head_parameters(), "lr": config.learning_rate},
        ]
    )

    train_set, val_set = split_validation(dataset, config.val_fraction, config.seed)
    class_state = ClassWeightState(k=config.k, alpha=config.alpha)
    order_rng = np.random.default_rng(_derive_seed(config.seed, 1))
    parse_cycle = 0

    log_rows: list[dict] = []
    best_val = math.inf
    best_path = out_dir / "model.ckpt"
    saved_best = False
    step = 0

    for epoch in range(config.epochs):
        order = order_rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = []
            for j, i in enumerate(idx):
                ex = augment(train_set[int(i)], _derive_seed(config.seed, 2, epoch, int(i)), config.canvas)
                pb = sample_sparse_pixels(
                    ex, config.pixels_per_image, _derive_seed(config.seed, 3, epoch, int(i))
                )
                batch.append((ex, pb))
            x, coords, inputs, targets, _ = _batch_tensors(model, batch)
            maps = model.forward_maps(x)
            out = model.pixel_forward(maps, coords, (config.canvas, config.canvas), inputs)

            if config.semantic_map:
                class_state = update_frequency_ema(class_state, out["posterior"])
                weights = class_weights(class_state)
                l_reg = regression_loss_map(out, inputs, targets, loss_cfg, weights)
            else:
                l_reg = regression_loss_conv(out, inputs, targets, loss_cfg)

            l_parse = torch.zeros((), dtype=l_reg.dtype)
            if config.multitask:
                pbatch = []
                for _ in range(len(idx)):
                    pi = parse_cycle % len(parse_dataset)
                    parse_cycle += 1
                    pex = augment(
                        parse_dataset[pi], _derive_seed(config.seed, 4, epoch, pi), config.canvas
                    )
                    ppb = sample_sparse_pixels(
                        pex, config.pixels_per_image, _derive_seed(config.seed, 5, epoch, pi)
                    )
                    pbatch.append((pex, ppb))
                px, pcoords, _, _, plabels = _batch_tensors(model, pbatch)
                pmaps = model.forward_maps(px)
                pout = model.pixel_forward(
                    pmaps, pcoords, (config.canvas, config.canvas), px.new_zeros(pcoords.shape[0], pcoords.shape[1], 3)
                )
                l_parse = parse_cross_entropy(
                    pout["parse_logits"].reshape(-1, loss_cfg.parse_classes),
                    plabels.reshape(-1),
                )

            loss = total_loss(l_reg, l_parse, loss_cfg.lam)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at step {step} (epoch {epoch}): "
                    f"l_reg={l_reg.detach().item()} l_parse={l_parse.detach().item()}"
                )
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            step += 1
            log_rows.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "loss": loss.detach().item(),
                    "l_reg": l_reg.detach().item(),
                    "l_parse": l_parse.detach().item(),
                    "val_lab_l2": "",
                }
            )

        if val_set and (epoch + 1) % config.validate_every == 0:
            val = validate(model, val_set)
            log_rows[-1]["val_lab_l2"] = val
            if val < best_val:
                best_val = val
                save_checkpoint(model, config, class_state, step, best_path)
                saved_best = True

    model.eval()
    save_checkpoint(model, config, class_state, step, out_dir / "final.ckpt")
    if not saved_best:
        save_checkpoint(model, config, class_state, step, best_path)
    _write_log(out_dir / "train_log.csv", log_rows)
    result = load_checkpoint(best_path)
    if tmp is not None:
        tmp.cleanup()
    return result


def _write_log(path: Path, rows: list[dict]) -> None:
    fields = ["step", "epoch", "loss", "l_reg", "l_parse", "val_lab_l2"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in fields})


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
