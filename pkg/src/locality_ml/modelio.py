"""Self-describing JSON container for trained models.

Floats go through ``repr`` so weights round-trip bit-exactly.
"""
from __future__ import annotations

import json

import numpy as np

FORMAT = "locality-ml-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def save(path, fields: dict) -> None:
    blob = {"format": FORMAT, "version": VERSION}
    blob.update({k: _plain(v) for k, v in fields.items()})
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load(path, kinds=None) -> dict:
    with open(path) as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a model file ({exc})") from None
    if blob.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: not a model file")
    if blob.get("version") != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {blob.get('version')}")
    if kinds is not None and blob.get("kind") not in kinds:
        raise ModelFormatError(f"{path}: model kind {blob.get('kind')!r} not one of {tuple(kinds)}")
    return blob
