"""Shared fixtures: small model configurations and synthetic data factories
sized for fast tests.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from photoadjust.config import TrainConfig
from photoadjust.data import (
    SyntheticSpec,
    default_preset_transforms,
    generate_synthetic_benchmark,
)
from photoadjust.features import BackboneConfig
from photoadjust.model import AdjustmentModel, ModelConfig


def tiny_backbone() -> BackboneConfig:
    """A backbone even smaller than the toy profile, for unit tests."""
    return BackboneConfig(
        profile="toy",
        stem_channels=4,
        block_channels=(8, 8),
        rnn_hidden=4,
        rnn_channels=8,
        context_dim=16,
    )


def tiny_model(k: int = 2, context_mode: str = "map", seed: int = 0) -> AdjustmentModel:
    torch.manual_seed(seed)
    config = ModelConfig(
        backbone=tiny_backbone(), rank=8, k=k, parse_classes=6, context_mode=context_mode
    )
    return AdjustmentModel(config)


@pytest.fixture
def map_model() -> AdjustmentModel:
    return tiny_model(k=2, context_mode="map")


@pytest.fixture
def conv_model() -> AdjustmentModel:
    return tiny_model(k=2, context_mode="conv")


def small_synthetic(n: int = 4, k: int = 2, seed: int = 0, noise: float = 0.0, size: int = 32):
    spec = SyntheticSpec(
        k=k,
        preset_transforms=default_preset_transforms(k),
        height=size,
        width=size,
        noise_sigma=noise,
    )
    return generate_synthetic_benchmark(spec, n, seed=seed)


def random_lab_image(rng: np.random.Generator, h: int = 16, w: int = 16) -> np.ndarray:
    lab = np.empty((h, w, 3), dtype=np.float64)
    lab[..., 0] = rng.uniform(5.0, 95.0, size=(h, w))
    lab[..., 1] = rng.uniform(-60.0, 60.0, size=(h, w))
    lab[..., 2] = rng.uniform(-60.0, 60.0, size=(h, w))
    return lab


# One visible pass/fail line per acceptance criterion, printed after the
# usual test output (capture is closed by summary time, so the lines always
# reach the terminal).

_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE):
        name = nodeid.split("::")[-1]
        status = {"passed": "PASS", "failed": "FAIL"}.get(_ACCEPTANCE[nodeid], "SKIP")
        terminalreporter.write_line(f"{status}  {name}")
