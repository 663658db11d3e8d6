"""The named estimator variants compared throughout the experiments.

Each method pairs an estimator configuration with a default data-reuse
window.  On-policy methods look only at the current iteration; reuse methods
default to the whole history; the truncated variant keeps the last five
iterations and caps weights at 2, the combination recommended for
high-dimensional problems.
"""

from __future__ import annotations

from dataclasses import dataclass

from .estimators import EstimatorConfig


@dataclass(frozen=True)
class Method:
    name: str
    estimator: EstimatorConfig
    reuse_window: int | str  # positive int, or "all"
    description: str


METHODS: dict[str, Method] = {
    m.name: m
    for m in (
        Method(
            "PGPE",
            EstimatorConfig("on_policy", "none"),
            1,
            "plain estimator, current data only",
        ),
        Method(
            "PGPE_OB",
            EstimatorConfig("on_policy", "optimal"),
            1,
            "plain estimator with the optimal constant baseline",
        ),
        Method(
            "NIW-PGPE",
            EstimatorConfig("niw", "none"),
            "all",
            "data reuse with unit weights (inconsistent; negative control)",
        ),
        Method(
            "NIW-PGPE_OB",
            EstimatorConfig("niw", "optimal"),
            "all",
            "unit-weight data reuse with the optimal baseline",
        ),
        Method(
            "IW-PGPE",
            EstimatorConfig("iw", "none"),
            "all",
            "importance-weighted data reuse",
        ),
        Method(
            "IW-PGPE_OB",
            EstimatorConfig("iw", "optimal"),
            "all",
            "importance-weighted data reuse with the optimal baseline",
        ),
        Method(
            "TIW-PGPE_OB",
            EstimatorConfig("iw_truncated", "optimal", truncation_cap=2.0),
            5,
            "weights capped at 2, last-5-iterations reuse, optimal baseline",
        ),
    )
}

# The six-method comparison roster, in presentation order.
COMPARISON_METHODS = ("PGPE", "PGPE_OB", "NIW-PGPE", "NIW-PGPE_OB", "IW-PGPE", "IW-PGPE_OB")


def get_method(name: str) -> Method:
    if name not in METHODS:
        known = ", ".join(METHODS)
        raise ValueError(f"unknown method {name!r} (known: {known})")
    return METHODS[name]
