"""Writers for the consumer-side file formats.

These mirror the layouts the explanation pipeline loads (binary embedding
files, dataset JSONL, probability caches) without importing it, so the
two codebases check each other through the bytes alone. All writes are
atomic: temp file in the target directory, then rename.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

EMB_MAGIC = b"PEEMB1"
EMB_VERSION = 1


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_embeddings(path, seq_embedding, token_embeddings):
    seq = np.asarray(seq_embedding, dtype="<f4")
    toks = np.asarray(token_embeddings, dtype="<f4")
    if seq.ndim != 1 or toks.ndim != 2 or toks.shape[1] != seq.shape[0]:
        raise ValueError("need seq (d,) and tokens (n, d)")
    n, d = toks.shape
    header = EMB_MAGIC + struct.pack("<HII", EMB_VERSION, n, d)
    body = np.vstack([seq[None, :], toks]).astype("<f4").tobytes(order="C")
    _atomic_write(path, header + body)


def write_dataset(records, path):
    lines = []
    for r in records:
        lines.append(json.dumps(
            {"id": r["id"], "tokens": r["tokens"], "label": r["label"],
             "predicted_label": r["predicted_label"],
             "predicted_prob": r["predicted_prob"]}, sort_keys=True))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def mask_to_hex(mask: int, n: int) -> str:
    nbytes = max(1, math.ceil(n / 8))
    return mask.to_bytes(nbytes, "little").hex()


def write_cache(path, entries: dict[int, float], n: int, strategy: str,
                predicted_label: int):
    obj = {
        "strategy": strategy,
        "predicted_label": int(predicted_label),
        "n_tokens": int(n),
        "entries": {mask_to_hex(m, n): float(p)
                    for m, p in sorted(entries.items())},
    }
    text = json.dumps(obj, sort_keys=True, indent=0) + "\n"
    _atomic_write(path, text.encode("utf-8"))
