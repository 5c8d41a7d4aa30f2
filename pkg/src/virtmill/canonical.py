"""Canonical JSON serialization and short state digests.

Every hashed or logged document goes through one serializer so that two
processes producing the same logical state produce the same bytes: keys
sorted, no whitespace, floats rounded by unit (inches to 4 decimal places,
rpm to integers, seconds to 3 decimal places) before they enter the
document.
"""
from __future__ import annotations

import hashlib
import json
from typing import Any

DIGEST_HEX_CHARS = 16  # 64-bit digest, rendered as hex


def round_in(value: float) -> float:
    """Round a length in inches for canonical output."""
    return round(float(value), 4)


def round_s(value: float) -> float:
    """Round a duration or timestamp in seconds for canonical output."""
    return round(float(value), 3)


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(doc: Any) -> str:
    """64-bit digest of the canonical serialization of ``doc``."""
    raw = canonical_json(doc).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:DIGEST_HEX_CHARS]
