"""Portable model files.

A model is a single ``.npz`` archive (``allow_pickle=False``) holding:

``meta``        JSON: format name and version, tagset, templates, metadata,
                whether transitions are constrained by the tagset mask
``features``    feature strings, row ``i`` of ``emission`` belongs to string ``i``
``emission``    little-endian float64 ``(F, L)``
``transition``  little-endian float64 ``(L+1, L+1)``; forbidden entries are ``-inf``
``projection``  optional little-endian float64 ``(D, L)``
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from ..exceptions import CorruptModel, VersionMismatch
from ..spans import TagsetConfig
from .features import FeatureTemplateConfig
from .model import CrfModel

FORMAT_NAME = "regspan-crf"
FORMAT_VERSION = 1
FLOAT = "<f8"


def save_model(model: CrfModel, path) -> None:
    meta = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "float_width": 64,
        "labels": list(model.tagset.label_names),
        "tagset": model.tagset.to_dict(),
        "templates": model.templates.to_dict(),
        "metadata": model.metadata,
        "constrained": model.constrained,
    }
    features = sorted(model.feature_index, key=model.feature_index.get)
    arrays = {
        "meta": np.array(json.dumps(meta, sort_keys=True, default=str)),
        "features": np.array(features, dtype=str) if features else np.zeros(0, dtype="<U1"),
        "emission": model.emission.astype(FLOAT),
        "transition": model.transition.astype(FLOAT),
    }
    if model.projection is not None:
        arrays["projection"] = model.projection.astype(FLOAT)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_model(path) -> CrfModel:
    data = Path(path).read_bytes()
    try:
        with np.load(io.BytesIO(data), allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            if meta.get("format") != FORMAT_NAME:
                raise CorruptModel(f"{path}: not a {FORMAT_NAME} file")
            if meta.get("format_version") != FORMAT_VERSION:
                raise VersionMismatch(
                    f"{path}: format version {meta.get('format_version')!r}, "
                    f"this build reads version {FORMAT_VERSION}"
                )
            features = [str(f) for f in archive["features"]]
            emission = archive["emission"].astype(np.float64)
            transition = archive["transition"].astype(np.float64)
            projection = (archive["projection"].astype(np.float64)
                          if "projection" in archive.files else None)
    except (VersionMismatch, CorruptModel):
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, OSError, EOFError, TypeError) as exc:
        raise CorruptModel(f"{path}: unreadable model file ({exc})") from exc
    try:
        tagset = TagsetConfig.from_dict(meta["tagset"])
        if list(tagset.label_names) != meta["labels"]:
            raise CorruptModel(f"{path}: label list does not match the tagset")
        return CrfModel(
            tagset,
            FeatureTemplateConfig.from_dict(meta["templates"]),
            {f: i for i, f in enumerate(features)},
            emission,
            transition,
            projection,
            meta.get("metadata", {}),
            bool(meta.get("constrained", True)),
        )
    except CorruptModel:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptModel(f"{path}: inconsistent model contents ({exc})") from exc
