"""Shared pieces of the linker/selector scoring heads: score binning and
the 3-layer feed-forward head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class BinningSpec:
    boundaries: tuple[float, ...]

    def __post_init__(self):
        b = self.boundaries
        if len(b) < 2 or b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("boundaries must start at 0 and end at 1")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError("boundaries must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.boundaries) - 1

    @classmethod
    def of(cls, boundaries) -> "BinningSpec":
        return cls(boundaries=tuple(float(b) for b in boundaries))


def bin_index(x: float, spec: BinningSpec) -> int:
    """Half-open bins [b_i, b_{i+1}), last bin closed at 1; out-of-range
    values clamp to the edge bins."""
    idx = int(np.searchsorted(spec.boundaries, x, side="right")) - 1
    return max(0, min(idx, spec.n_bins - 1))


class FeedForwardHead(nn.Module):
    """3-layer FF with GeLU and dropout at the input, scalar logit output."""

    def __init__(self, in_dim: int, hidden: tuple[int, int] = (1024, 256),
                 dropout: float = 0.1):
        super().__init__()
        h1, h2 = hidden
        self.net = nn.Sequential(
            nn.Dropout(dropout),
            nn.Linear(in_dim, h1), nn.GELU(),
            nn.Linear(h1, h2), nn.GELU(),
            nn.Linear(h2, 1),
        )

    def forward(self, x):
        return self.net(x).squeeze(-1)
