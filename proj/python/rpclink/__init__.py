"""Python access to the rpclink simulator."""

from ._core import (
    Ledger,
    RpclinkError,
    SuccessEstimate,
    appearance_prob,
    attack,
    detect,
    estimate_k,
    exclusion_prob,
    expected_success,
    intersect,
    profiles,
    run_experiment,
    run_experiment_to_directory,
    scenario,
    success_rate,
    synth_traffic,
    train_classifier,
    transacting_threshold,
    window_transacting_probability,
)

__all__ = [
    "Ledger",
    "RpclinkError",
    "SuccessEstimate",
    "appearance_prob",
    "attack",
    "detect",
    "estimate_k",
    "exclusion_prob",
    "expected_success",
    "intersect",
    "profiles",
    "run_experiment",
    "run_experiment_to_directory",
    "scenario",
    "success_rate",
    "synth_traffic",
    "train_classifier",
    "transacting_threshold",
    "window_transacting_probability",
]
