"""Single-line JSON rendering with lossless float formatting.

Floats are written with up to 17 significant digits (``%.17g``), which round
trips every double exactly; non-finite values are rejected rather than
emitted. Dict insertion order is preserved, so identical payloads render to
identical bytes.
"""

import json

import numpy as np


def render_json(obj):
    parts = []
    _render(obj, parts)
    return "".join(parts)


def _render(obj, parts):
    if obj is None:
        parts.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError("refusing to emit a non-finite number")
        parts.append(format(x, ".17g"))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(key)))
            parts.append(":")
            _render(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        parts.append("[")
        for i, value in enumerate(obj):
            if i:
                parts.append(",")
            _render(value, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot render {type(obj).__name__} as JSON")
