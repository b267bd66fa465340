"""Pipeline configuration shared by the solver, consensus, and CLI layers."""

from __future__ import annotations

from dataclasses import dataclass, field

from .penalties import PenaltySpec
from .solver import SolverParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UnmixConfig:
    """Everything one unmixing pipeline run needs besides the data."""

    n_materials: int = 5
    penalty: PenaltySpec = field(default_factory=lambda: PenaltySpec("group"))
    lam: float = 1e-3
    lam_c: float = 1e-2
    beta: float = 0.3
    n_runs: int = 10        # K consensus runs
    n_rounds: int = 10      # T extraction rounds
    pixel_fraction: float = 0.1
    m_target: int = 0       # 0 -> ceil(N / 25) at use time
    compactness: float = 0.005
    seed: int = 0
    n_jobs: int = 1
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be positive")
        if min(self.lam, self.lam_c, self.beta) < 0:
            raise ConfigError("lam, lam_c, beta must be nonnegative")
        if self.n_runs < 1 or self.n_rounds < 1 or self.n_materials < 1:
            raise ConfigError("K, T, and P must be positive")
        if not 0.0 < self.pixel_fraction <= 1.0:
            raise ConfigError("pixel_fraction must be in (0, 1]")
        if self.m_target < 0:
            raise ConfigError("m_target must be nonnegative")
