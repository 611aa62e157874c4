"""Hierarchical block-wise fine-tuning engine (C++ core with Python bindings).

The heavy lifting lives in the compiled extension module ``hift._core``; this
package adds small JSON conveniences on top.
"""

import json

from ._core import (  # noqa: F401
    compare,
    default_config,
    estimate_for_arch,
    estimate_fpft,
    estimate_hift,
    train,
    trainable_peak_fraction,
)

__all__ = [
    "compare",
    "default_config",
    "estimate_for_arch",
    "estimate_fpft",
    "estimate_hift",
    "train",
    "train_dict",
    "trainable_peak_fraction",
]


def train_dict(config):
    """Run one experiment from a config dict; returns the report as a dict."""
    if isinstance(config, dict):
        config = json.dumps(config)
    return json.loads(train(config))
