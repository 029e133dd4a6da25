"""Small input-coercion helpers shared by metrics, scoring, and the
estimator wrapper."""

from __future__ import annotations

import numpy as np

from .modalities import Label


def as_targets(labels) -> np.ndarray:
    """Coerce labels (Label enums, 'live'/'spoof' strings, or 0/1 ints) to
    an int64 array with 0 = live, 1 = spoof."""
    out = []
    for item in np.asarray(labels, dtype=object).ravel():
        if isinstance(item, Label):
            out.append(0 if item is Label.LIVE else 1)
        elif isinstance(item, str):
            try:
                out.append(0 if Label(item) is Label.LIVE else 1)
            except ValueError:
                raise ValueError(f"bad label {item!r}") from None
        elif isinstance(item, (bool, np.bool_)):
            out.append(int(item))
        else:
            value = int(item)
            if value not in (0, 1):
                raise ValueError(f"bad label {item!r}; expected 0 (live) or 1 (spoof)")
            out.append(value)
    return np.array(out, dtype=np.int64)


def as_score_array(scores, name: str = "scores") -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr
