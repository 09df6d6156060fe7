"""Metrics and reports: per-effect mean Lab-L2, preset-recovery accuracy
against known region layouts, and variant comparison tables.

Evaluation uses dense inference (every pixel read out through the
hypercolumn); per-image mean distances are averaged uniformly over
images.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .checkpoint import ModelCheckpoint, build_model
from .colorspace import lab_l2_distance
from .data import AdjustmentExample
from .model import AdjustmentModel

MAX_PERMUTATION_K = 8


@dataclass
class EffectScores:
    model_l2: float
    input_l2: float
    n_images: int


@dataclass
class EvalReport:
    variant: str
    effects: dict[str, EffectScores] = field(default_factory=dict)
    map_accuracy: float | None = None

    def mean_model_l2(self) -> float:
        return float(np.mean([s.model_l2 for s in self.effects.values()]))

    def mean_input_l2(self) -> float:
        return float(np.mean([s.input_l2 for s in self.effects.values()]))


def evaluate(
    checkpoint: ModelCheckpoint | AdjustmentModel,
    dataset: list[AdjustmentExample],
    variant: str | None = None,
) -> EvalReport:
    """Mean Lab-L2 per effect for the model and for the unadjusted input.

    When examples carry parse labels with at most K classes and the model
    uses the adjustment-map context, the report also includes the mean
    preset-recovery accuracy of the extracted maps.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if isinstance(checkpoint, AdjustmentModel):
        model = checkpoint
        name = variant if variant is not None else model.config.context_mode
    else:
        model = build_model(checkpoint)
        name = variant if variant is not None else checkpoint.config.variant
    model.eval()

    per_effect_model: dict[str, list[float]] = {}
    per_effect_input: dict[str, list[float]] = {}
    accuracies: list[float] = []
    for ex in sorted(dataset, key=lambda e: e.name):
        result = model.adjust_image(ex.input)
        per_effect_model.setdefault(ex.effect, []).append(
            lab_l2_distance(result.adjusted, ex.target)
        )
        per_effect_input.setdefault(ex.effect, []).append(
            lab_l2_distance(ex.input, ex.target)
        )
        if (
            result.assignments is not None
            and ex.parse_labels is not None
            and ex.parse_labels.max() < model.k
        ):
            accuracies.append(map_accuracy(result.assignments, ex.parse_labels, model.k))

    report = EvalReport(variant=name)
    for effect in sorted(per_effect_model):
        report.effects[effect] = EffectScores(
            model_l2=float(np.mean(per_effect_model[effect])),
            input_l2=float(np.mean(per_effect_input[effect])),
            n_images=len(per_effect_model[effect]),
        )
    if accuracies:
        report.map_accuracy = float(np.mean(accuracies))
    return report


def map_accuracy(predicted: np.ndarray, truth: np.ndarray, k: int) -> float:
    """Best per-pixel agreement over all K! relabelings of the prediction.

    Preset indices are arbitrary up to permutation, so accuracy is scored
    against the most favorable relabeling (brute force, K <= 8).
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    if k > MAX_PERMUTATION_K:
        raise ValueError(f"K = {k} exceeds the permutation search limit {MAX_PERMUTATION_K}")
    # confusion[i, j] = count of pixels predicted i with truth j
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (predicted.reshape(-1), truth.reshape(-1)), 1)
    best = 0
    for perm in permutations(range(k)):
        agree = sum(confusion[i, perm[i]] for i in range(k))
        best = max(best, agree)
    return best / predicted.size


def variant_table(reports: list[EvalReport]) -> tuple[str, str]:
    """Aligned-text and CSV comparison: one row per variant, one column per
    effect, with the input baseline (dataset-only) as the first row."""
    if not reports:
        raise ValueError("no reports to tabulate")
    effects = sorted({e for r in reports for e in r.effects})
    rows: list[tuple[str, list[str]]] = []
    baseline = [
        f"{reports[0].effects[e].input_l2:.2f}" if e in reports[0].effects else "-"
        for e in effects
    ]
    rows.append(("Input", baseline))
    for r in reports:
        rows.append(
            (r.variant, [f"{r.effects[e].model_l2:.2f}" if e in r.effects else "-" for e in effects])
        )

    header = ["variant"] + effects
    widths = [max(len(header[0]), max(len(name) for name, _ in rows))]
    for j, e in enumerate(effects):
        widths.append(max(len(e), max(len(vals[j]) for _, vals in rows)))
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for name, vals in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip([name] + vals, widths)))
    text = "\n".join(lines) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for name, vals in rows:
        writer.writerow([name] + vals)
    return text, buf.getvalue()
