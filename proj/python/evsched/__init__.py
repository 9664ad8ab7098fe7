"""Risk-aware EV charging scheduler (C++ core)."""

from ._core import (
    GenConfig,
    Model,
    SessionBatch,
    SiteConfig,
    TrainConfig,
    cvar_empirical,
    discounted_return,
    estimate_risk,
    fcfs_as_requested_baseline,
    execute,
    fit_student_t,
    generate_synthetic,
    model_from_json,
    parse_sessions,
    session_reward,
    standardized_cdf,
    standardized_ppf,
    train,
)

__all__ = [
    "GenConfig",
    "Model",
    "SessionBatch",
    "SiteConfig",
    "TrainConfig",
    "cvar_empirical",
    "discounted_return",
    "estimate_risk",
    "execute",
    "fcfs_as_requested_baseline",
    "fit_student_t",
    "generate_synthetic",
    "model_from_json",
    "parse_sessions",
    "session_reward",
    "standardized_cdf",
    "standardized_ppf",
    "train",
]
