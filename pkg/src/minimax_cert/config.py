"""Run configuration shared by the certification stages."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

STAGES = ("first", "second", "oracle", "jacobian")
DEFAULT_STAGES = ("first", "second", "oracle")


def env_seed() -> int:
    return int(os.environ.get("MINIMAX_CERT_SEED", "0"))


@dataclass(frozen=True)
class RunConfig:
    eps_act: float | None = None  # None: 1e-7 * (1 + max |constraint value|)
    stationarity_tol: float = 1e-7
    duality_tol: float = 1e-7
    critical_tol: float = 1e-6
    necessary_margin: float = 1e-6
    sufficient_margin: float = 1e-6
    curvature_tol: float = 1e-7
    budget: int = 64
    resolution: int = 41
    deltas: tuple = (0.2, 0.1, 0.05)
    kappa: float | None = None
    feas_tol: float = 1e-9
    rcrcq_samples: int = 32
    rcrcq_radius: float = 1e-3
    output_format: str = "text"
    stages: tuple = DEFAULT_STAGES
    fail_fast: bool = False
    seed: int = field(default_factory=env_seed)

    def __post_init__(self):
        for name in ("stationarity_tol", "duality_tol", "critical_tol", "necessary_margin",
                     "sufficient_margin", "curvature_tol", "feas_tol", "rcrcq_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eps_act is not None and not self.eps_act >= 0:
            raise ValueError("eps_act must be non-negative")
        if self.resolution < 3:
            raise ValueError(f"resolution must be at least 3, got {self.resolution}")
        if self.budget < 1:
            raise ValueError("direction budget must be positive")
        if any(d <= 0 for d in self.deltas):
            raise ValueError("deltas must be positive")
        if self.kappa is not None and self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.output_format not in ("text", "json"):
            raise ValueError(f"unknown format {self.output_format!r}")
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise ValueError(f"unknown stages {sorted(bad)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        d["stages"] = list(self.stages)
        return d
