"""Fit archives: self-describing JSON documents holding a fit summary.

Layout (schema version 1)::

    {
      "schema": "surfmix.fit", "schema_version": 1, "software_version": "...",
      "model": "bssr" | "bmssr", "mode": "corrected" | "paper-literal",
      "config": {...resolved command options...},
      "grid": {"domain": [lo1, hi1, lo2, hi2], "d1": .., "d2": ..},
      "data": {...dataset provenance...},
      "settings": {...hyperparameters, init, iterations, burnin, seed...},
      "posterior": {"beta": [[...], ...], "sigma2": [...], "xi2": [...], "pi": [...]},
      "summary": {...},
      "chains": [...]            # per-chain posteriors when more than one chain ran
      "traces": {...}            # optional
    }

``posterior.beta`` is always ``K x d`` (``K = 1`` for BSSR).  Floats are
written with ``repr`` precision so documents round-trip exactly.
"""

from __future__ import annotations

import json

import numpy as np

from . import __version__
from .datasets import atomic_write
from .errors import DataFormatError

SCHEMA = "surfmix.fit"
SCHEMA_VERSION = 1


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def new_archive(model: str, mode: str, **sections) -> dict:
    doc = {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "model": model,
        "mode": mode,
    }
    doc.update(sections)
    return _plain(doc)


def dumps(doc: dict) -> str:
    return json.dumps(_plain(doc), indent=1, sort_keys=False, allow_nan=False) + "\n"


def save_archive(path, doc: dict) -> None:
    text = dumps(doc)
    with atomic_write(path) as fh:
        fh.write(text)


def load_archive(path) -> dict:
    with open(path, "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not a JSON archive ({exc})") from None
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise DataFormatError(f"{path}: not a {SCHEMA} archive")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(
            f"{path}: schema version {doc.get('schema_version')} is not supported (expected {SCHEMA_VERSION})"
        )
    for key in ("model", "grid", "posterior", "config"):
        if key not in doc:
            raise DataFormatError(f"{path}: archive is missing {key!r}")
    return doc
