"""Offline transition datasets: generative-model and nu-measure sampling, file I/O."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from ..core import TabularSICMDP
from ..sicrl import TransitionDataset


@dataclass(frozen=True)
class GenerativeModel:
    """``n0`` next-state draws for every ``(s, a)`` pair."""

    n0: int

    def __post_init__(self):
        if self.n0 < 0:
            raise ValueError("n0 must be non-negative")


@dataclass(frozen=True)
class NuMeasure:
    """``m`` pairs drawn i.i.d. from ``nu`` (shape ``(S, A)``), one next state each."""

    nu: np.ndarray
    m: int

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float)
        if np.any(nu < 0) or abs(nu.sum() - 1) > 1e-9:
            raise ValueError("nu must be a probability distribution")
        if self.m < 0:
            raise ValueError("m must be non-negative")
        object.__setattr__(self, "nu", nu)


@dataclass(frozen=True)
class DatasetSpec:
    mode: Union[GenerativeModel, NuMeasure]
    seed: int = 0


def _next_states(rng, transition, s, a):
    # inverse-CDF draw; one uniform per triple keeps the stream layout simple
    cdf = np.cumsum(transition[s, a], axis=-1)
    u = rng.random(len(s))[:, None]
    return np.minimum((u > cdf).sum(axis=1), transition.shape[2] - 1)


def sample_dataset(model: TabularSICMDP, spec: DatasetSpec) -> TransitionDataset:
    """Seeded dataset.  Generative triples are ordered by ``(s, a)`` row-major."""
    S, A = model.num_states, model.num_actions
    rng = np.random.default_rng(spec.seed)
    mode = spec.mode
    if isinstance(mode, GenerativeModel):
        pairs = np.repeat(np.arange(S * A), mode.n0)
        provenance = "generative"
    elif isinstance(mode, NuMeasure):
        if mode.nu.size != S * A:
            raise ValueError("nu must have one entry per state-action pair")
        pairs = rng.choice(S * A, size=mode.m, p=mode.nu.ravel() / mode.nu.sum())
        provenance = "nu-measure"
    else:
        raise TypeError(f"unknown dataset mode {mode!r}")
    s, a = pairs // A, pairs % A
    nxt = _next_states(rng, model.transition, s, a)
    return TransitionDataset(np.stack([s, a, nxt], axis=1), provenance)


def save_dataset(dataset: TransitionDataset, path) -> None:
    """``.bin`` writes packed little-endian u32 triples; anything else JSON."""
    path = Path(path)
    if path.suffix == ".bin":
        path.write_bytes(dataset.triples.astype("<u4").tobytes())
    else:
        path.write_text(json.dumps(dataset.triples.tolist()))


def load_dataset(path) -> TransitionDataset:
    path = Path(path)
    if path.suffix == ".bin":
        raw = path.read_bytes()
        if len(raw) % 12:
            raise ValueError("binary dataset length is not a multiple of 12 bytes")
        return TransitionDataset(np.frombuffer(raw, dtype="<u4").astype(np.int64).reshape(-1, 3))
    doc = json.loads(path.read_text())
    return TransitionDataset(np.asarray(doc, dtype=np.int64).reshape(-1, 3))
