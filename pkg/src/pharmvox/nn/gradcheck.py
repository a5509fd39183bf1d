"""Central finite-difference check of the autodiff gradients."""

from __future__ import annotations

import numpy as np

from ..chem.tokenizer import build_vocabulary, tokenize
from .model import TINY, CaptionerModel, ModelConfig, pad_batch

GRADCHECK_CORPUS = ("CCO", "CCN", "c1ccccc1", "CC(=O)O")


def tiny_model(seed=0, dtype=np.float64):
    """Reference model for finite differences (under 5,000 parameters)."""
    vocab = build_vocabulary(GRADCHECK_CORPUS)
    return CaptionerModel(ModelConfig(**TINY), vocab, seed=seed, dtype=dtype)


def tiny_batch(model, seed=0, size=3):
    rng = np.random.default_rng(seed)
    d = model.config.grid.d
    grids = rng.uniform(0.0, 1.0, size=(size, model.config.channels, d, d, d))
    ids = pad_batch([tokenize(s, model.vocab).ids for s in GRADCHECK_CORPUS[:size]])
    return grids, ids


def gradient_check(model, grids, ids, n_params=200, step=1e-4, seed=0):
    """Max relative error between autodiff and central differences on a random parameter subset.

    Runs in float64 on a copy of the model. Relative error is
    |a - n| / max(|a|, |n|, 1e-6).
    """
    m = model.astype(np.float64)
    _, grads, _, _, _ = m.loss_and_grads(grids, ids)
    names = list(m.params)
    flat_index = [(k, i) for k in names for i in range(m.params[k].size)]
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(flat_index), size=min(n_params, len(flat_index)), replace=False)
    worst = 0.0
    for p in sorted(pick):
        name, i = flat_index[p]
        arr = m.params[name].reshape(-1)
        old = arr[i]
        arr[i] = old + step
        up = m.sequence_loss(grids, ids)
        arr[i] = old - step
        down = m.sequence_loss(grids, ids)
        arr[i] = old
        numeric = (up - down) / (2 * step)
        analytic = float(grads[name].reshape(-1)[i])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst
