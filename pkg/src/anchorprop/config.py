"""Run configuration shared by the CLI subcommands.

A RunConfig captures everything a run needs to be reproduced: seeds,
clip/network shape, mode, worker count, thresholds. It validates before
any work starts and serializes into the provenance sidecar written next
to every output.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    frames: int = 8
    grid: int = 16
    dim: int = 64
    heads: int = 2
    steps: int = 10
    anchors: int = 3
    workers: int = 1
    mode: str = "anchored"
    pyramid: tuple[int, ...] | None = None
    thresholds: tuple[float, ...] = (16.0, 32.0)
    image_size: int = 256

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise ParameterError(f"frames must be >= 1, got {self.frames}")
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if not 1 <= self.anchors:
            raise ParameterError(f"anchors must be >= 1, got {self.anchors}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if self.mode not in ("independent", "anchored"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if any(t <= 0 for t in self.thresholds):
            raise ParameterError(f"thresholds must be positive: {self.thresholds}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pyramid"] = list(self.pyramid) if self.pyramid is not None else None
        d["thresholds"] = list(self.thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if d.get("pyramid") is not None:
            d["pyramid"] = tuple(d["pyramid"])
        if d.get("thresholds") is not None:
            d["thresholds"] = tuple(d["thresholds"])
        return cls(**d)

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def network(self):
        from .propagation import ToyEditNetwork

        return ToyEditNetwork.create(
            seed=self.seed,
            grid=self.grid,
            dim=self.dim,
            num_heads=self.heads,
            steps=self.steps,
            pyramid=self.pyramid,
        )
