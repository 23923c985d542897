"""Pipeline constants.  Every field can be overridden from a JSON file or the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import InputError


@dataclass(frozen=True)
class PipelineConfig:
    # set sizes: n_W = c n, f = c' n, n_Z = delta_aug sqrt(c' n) / k
    c: float = 0.1
    c_prime: float = 0.02
    delta_aug: float = 0.5
    K: int = 4
    # richness search (soft: failure is logged, the run goes on with all vertices)
    eps: float = 0.1
    delta_rich: float = 0.3
    rich_min_frac: float = 0.9
    rich_attempts: int = 3
    rich_samples: int = 60
    B: float = 8.0
    retry_limit: int = 20
    seed: int = 0
    # step 2: diversity threshold as a fraction of the set it is measured in
    diversity_frac: float = 0.1
    h_degree_scale: float = 2.0
    tuple_audit_pairs: int = 300
    m0_budget: int = 1_000_000
    # lonely particles: mu = mu_scale sqrt(n), sigma = sigma_scale sqrt(n) / ln n
    mu_scale: float = 0.5
    sigma_scale: float = 2.0
    # separated indices: rho = sep_rho n, sigma = sep_sigma n
    sep_rho: float = 1.0
    sep_sigma: float = 0.25
    # Q in the sum |g_i| <= 20 Q n_W sqrt(n_D) audit; None derives it from the tail bound
    gap_q: float | None = None
    success_frac: float = 0.1
    # augmentation
    x_degree_q: float = 3.0
    h_edge_scale: float = 2.0
    gamma1: float = 0.1
    Q2: float = 4.0
    gamma3: float = 0.1
    Q4: float = 4.0
    # run_full: number of evenly spaced ell values in [cn, 2cn]
    ell_grid: int = 8

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise InputError("c must lie in (0, 1)")
        if not 0 < self.c_prime <= self.c / 3:
            raise InputError("c_prime must lie in (0, c/3] so that |U0| >= 3 n_D")
        if self.K < 4:
            raise InputError("K must be at least 4")
        if self.retry_limit < 1 or self.rich_attempts < 1:
            raise InputError("retry budgets must be at least 1")
        if self.m0_budget < 1 or self.ell_grid < 1:
            raise InputError("m0_budget and ell_grid must be positive")
        if not 0 < self.sep_sigma <= self.sep_rho:
            raise InputError("need 0 < sep_sigma <= sep_rho")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config JSON must be an object")
        return cls.from_dict(data)

    def with_overrides(self, **changes) -> "PipelineConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)
