"""Shared fixtures: a small battery lab that trains in under a second."""

from types import SimpleNamespace

import numpy as np
import pytest

from soclab import (
    BatteryConfig,
    TrainConfig,
    build_default_dataset,
    fit_bounds,
    init_model,
    make_windows,
    run_baseline,
    train,
    window_targets,
)

TINY_HIDDEN = 4
TINY_WINDOW = 10


@pytest.fixture(scope="session")
def tiny_lab():
    """A scaled-down pipeline: 0.05 Ah cell, three training cycles plus one
    held-out cycle, and a 4-unit model trained well enough that the safety
    cage stays quiet on the clean baseline."""
    battery = BatteryConfig(capacity_Ah=0.05)
    train_cycles, holdout = build_default_dataset(battery, seed=7, n_train=3)
    bounds = fit_bounds(train_cycles)
    windows, targets = [], []
    for cycle in train_cycles:
        w = make_windows(cycle, bounds, TINY_WINDOW, stride=3)
        windows.extend(w)
        targets.extend(window_targets(cycle, w))
    model = init_model(TINY_HIDDEN, TINY_WINDOW, bounds, seed=1)
    model, history = train(
        model,
        windows,
        np.array(targets),
        TrainConfig(epochs=120, learning_rate=1.0, batch_size=32, seed=1),
    )
    return SimpleNamespace(
        battery=battery,
        train_cycles=train_cycles,
        holdout=holdout,
        bounds=bounds,
        model=model,
        history=history,
        baseline=run_baseline(model, holdout),
    )
