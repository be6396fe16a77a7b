"""Python access to the nesy parking-occupancy toolkit."""

import json

from ._core import (
    CLASSES,
    NesyError,
    accuracy,
    accuracy_at_1,
    discretize,
    effective_config,
    refine,
    run,
)


def config(overrides=None, base=None):
    """Effective configuration as a dict; `base` is a dict merged over the defaults."""
    text = json.dumps(base) if base is not None else ""
    return json.loads(effective_config(text, list(overrides or [])))


__all__ = [
    "CLASSES",
    "NesyError",
    "accuracy",
    "accuracy_at_1",
    "config",
    "discretize",
    "effective_config",
    "refine",
    "run",
]
