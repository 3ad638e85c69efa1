"""File formats: dataset records, binary embeddings, parses, probability
caches, probe snapshots and tree exports.

Binary embeddings are little-endian float32 with a fixed 16-byte header;
everything human-inspected is JSON with sorted keys, so identical inputs
serialize to identical bytes. Loaders fail with a path:position message on
the first violated invariant.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attribution import CachedOracle, full_mask
from .hierarchy import HierarchyTree, Merge
from .probes import SemanticProbe, SyntaxProbe, validate_heads

EMB_MAGIC = b"PEEMB1"
EMB_VERSION = 1


class FormatError(ValueError):
    """Schema or invariant violation, carrying file position context."""

    def __init__(self, path, position, message):
        self.path = str(path)
        self.position = position
        super().__init__(f"{path}:{position}: {message}")


# --------------------------------------------------------------------------
# dataset records (JSONL)
# --------------------------------------------------------------------------


@dataclass
class DatasetRecord:
    id: str
    tokens: list[str]
    label: int
    predicted_label: int
    predicted_prob: float

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("tokens must be non-empty")
        if not 0.0 <= self.predicted_prob <= 1.0:
            raise ValueError(f"predicted_prob {self.predicted_prob} not in [0,1]")

    @property
    def n(self) -> int:
        return len(self.tokens)


def load_dataset(path) -> list[DatasetRecord]:
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(path, f"line {lineno}", f"bad JSON: {e}")
            try:
                rec = DatasetRecord(
                    id=str(obj["id"]), tokens=list(obj["tokens"]),
                    label=int(obj["label"]),
                    predicted_label=int(obj["predicted_label"]),
                    predicted_prob=float(obj["predicted_prob"]))
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(path, f"line {lineno}", str(e))
            if rec.id in seen:
                raise FormatError(path, f"line {lineno}",
                                  f"duplicate example id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    if not records:
        raise FormatError(path, "line 1", "empty dataset")
    return records


def save_dataset(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(
                {"id": r.id, "tokens": r.tokens, "label": r.label,
                 "predicted_label": r.predicted_label,
                 "predicted_prob": r.predicted_prob},
                sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# binary embedding files
# --------------------------------------------------------------------------


def save_embeddings(path, seq_embedding, token_embeddings):
    seq = np.asarray(seq_embedding, dtype=np.float32)
    toks = np.asarray(token_embeddings, dtype=np.float32)
    if seq.ndim != 1 or toks.ndim != 2 or toks.shape[1] != seq.shape[0]:
        raise ValueError("seq must be (d,), tokens (n, d)")
    n, d = toks.shape
    header = EMB_MAGIC + struct.pack("<HII", EMB_VERSION, n, d)
    body = np.vstack([seq[None, :], toks]).astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_embeddings(path):
    """Returns (seq_embedding (d,), token_embeddings (n, d)) as float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise FormatError(path, "byte 0", "truncated header (need 16 bytes)")
    if data[:6] != EMB_MAGIC:
        raise FormatError(path, "byte 0",
                          f"bad magic {data[:6]!r}, expected {EMB_MAGIC!r}")
    version, n, d = struct.unpack("<HII", data[6:16])
    if version != EMB_VERSION:
        raise FormatError(path, "byte 6", f"unsupported version {version}")
    if n < 1 or d < 1:
        raise FormatError(path, "byte 8", f"bad dimensions n={n} d={d}")
    expected = 16 + (n + 1) * d * 4
    if len(data) != expected:
        raise FormatError(path, f"byte {len(data)}",
                          f"file length {len(data)} != expected {expected}")
    mat = np.frombuffer(data, dtype="<f4", offset=16).reshape(n + 1, d)
    mat = mat.astype(np.float64)
    if not np.all(np.isfinite(mat)):
        raise FormatError(path, "byte 16", "non-finite embedding values")
    return mat[0], mat[1:]


def load_example_dir(data_dir):
    """Load dataset.jsonl plus embeddings/<id>.emb from a directory."""
    data_dir = Path(data_dir)
    records = load_dataset(data_dir / "dataset.jsonl")
    embs = {}
    for rec in records:
        p = data_dir / "embeddings" / f"{rec.id}.emb"
        seq, toks = load_embeddings(p)
        if toks.shape[0] != rec.n:
            raise FormatError(p, "byte 8",
                              f"{toks.shape[0]} token rows != {rec.n} tokens")
        embs[rec.id] = (seq, toks)
    return records, embs


# --------------------------------------------------------------------------
# dependency parses: "index<TAB>head" lines, blank line between examples
# --------------------------------------------------------------------------


def load_parses(path) -> list[list[int]]:
    examples = []
    current: list[tuple[int, int]] = []

    def flush(lineno):
        if not current:
            return
        heads = [0] * len(current)
        for pos, (idx, head) in enumerate(current, start=1):
            if idx != pos:
                raise FormatError(path, f"line {lineno}",
                                  f"token indices must be 1..n, got {idx}")
            heads[pos - 1] = head
        try:
            validate_heads(heads)
        except ValueError as e:
            raise FormatError(path, f"line {lineno}", str(e))
        examples.append(heads)
        current.clear()

    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(path, f"line {lineno}",
                                  f"expected 2 tab-separated fields, got {len(parts)}")
            try:
                idx, head = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(path, f"line {lineno}",
                                  f"non-integer fields {parts!r}")
            current.append((idx, head))
        flush(lineno + 1)
    if not examples:
        raise FormatError(path, "line 1", "no parses found")
    return examples


def save_parses(heads_list, path):
    blocks = []
    for heads in heads_list:
        blocks.append("\n".join(f"{i + 1}\t{h}" for i, h in enumerate(heads)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(blocks) + "\n")


# --------------------------------------------------------------------------
# probability caches
# --------------------------------------------------------------------------


def mask_to_hex(mask: int, n: int) -> str:
    """Little-endian hex bitset: bit j of byte j//8 marks token j present."""
    nbytes = max(1, math.ceil(n / 8))
    return mask.to_bytes(nbytes, "little").hex()


def hex_to_mask(text: str, n: int) -> int:
    nbytes = max(1, math.ceil(n / 8))
    raw = bytes.fromhex(text)
    if len(raw) != nbytes:
        raise ValueError(f"mask hex has {len(raw)} bytes, expected {nbytes}")
    mask = int.from_bytes(raw, "little")
    if mask > full_mask(n):
        raise ValueError(f"mask {text} sets bits beyond token {n - 1}")
    return mask


def save_cache(path, entries: dict[int, float], n: int,
               strategy: str = "del", predicted_label: int = 0):
    obj = {
        "strategy": strategy,
        "predicted_label": int(predicted_label),
        "n_tokens": int(n),
        "entries": {mask_to_hex(m, n): float(p)
                    for m, p in sorted(entries.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=0)
        fh.write("\n")


def load_cache(path) -> CachedOracle:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(path, f"line {e.lineno}", f"bad JSON: {e.msg}")
    for key in ("strategy", "predicted_label", "n_tokens", "entries"):
        if key not in obj:
            raise FormatError(path, "top level", f"missing field {key!r}")
    n = int(obj["n_tokens"])
    if n < 1:
        raise FormatError(path, "field n_tokens", f"bad token count {n}")
    if obj["strategy"] not in ("del", "pad"):
        raise FormatError(path, "field strategy",
                          f"unknown strategy {obj['strategy']!r}")
    entries = {}
    for hex_key, prob in obj["entries"].items():
        try:
            mask = hex_to_mask(hex_key, n)
        except ValueError as e:
            raise FormatError(path, f"entry {hex_key!r}", str(e))
        if not isinstance(prob, (int, float)) or not 0.0 <= prob <= 1.0:
            raise FormatError(path, f"entry {hex_key!r}",
                              f"probability {prob} outside [0, 1]")
        entries[mask] = float(prob)
    try:
        return CachedOracle(entries, n, obj["strategy"],
                            int(obj["predicted_label"]))
    except ValueError as e:
        raise FormatError(path, "entries", str(e))


# --------------------------------------------------------------------------
# probe snapshots
# --------------------------------------------------------------------------


def save_probe(probe, path):
    if isinstance(probe, SemanticProbe):
        obj = {"kind": "semantic", "matrix": probe.matrix.tolist(),
               "prototypes": probe.prototypes.tolist()}
    elif isinstance(probe, SyntaxProbe):
        obj = {"kind": "syntax", "matrix": probe.matrix.tolist()}
    else:
        raise TypeError(f"not a probe: {type(probe)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_probe(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(path, f"line {e.lineno}", f"bad JSON: {e.msg}")
    kind = obj.get("kind")
    try:
        if kind == "semantic":
            return SemanticProbe(np.array(obj["matrix"]),
                                 np.array(obj["prototypes"]))
        if kind == "syntax":
            return SyntaxProbe(np.array(obj["matrix"]))
    except (KeyError, ValueError) as e:
        raise FormatError(path, "top level", str(e))
    raise FormatError(path, "field kind", f"unknown probe kind {kind!r}")


# --------------------------------------------------------------------------
# tree export / import
# --------------------------------------------------------------------------


def export_tree(tree: HierarchyTree, fmt: str = "json",
                example_id: str = "", alpha1: float = 0.0,
                alpha2: float = 0.0) -> str:
    if fmt == "json":
        merges = []
        for m in tree.merges:
            node = tree.n - 1 + m.step
            merges.append({"step": m.step, "left": m.left, "right": m.right,
                           "weight": m.weight,
                           "members": tree.members(node)})
        obj = {"example_id": example_id, "alpha1": alpha1, "alpha2": alpha2,
               "merges": merges}
        return json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if fmt == "dot":
        lines = ["digraph hierarchy {", '  node [shape=box];']
        for leaf in range(tree.n):
            lines.append(f'  n{leaf} [label="{leaf}"];')
        for m in tree.merges:
            node = tree.n - 1 + m.step
            label = ",".join(str(x) for x in tree.members(node))
            lines.append(f'  n{node} [label="{{{label}}} w={m.weight:.6g}"];')
            lines.append(f"  n{node} -> n{m.left};")
            lines.append(f"  n{node} -> n{m.right};")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown tree format {fmt!r}")


def import_tree(text: str):
    """Parse an exported JSON tree; returns (tree, metadata dict)."""
    obj = json.loads(text)
    merges_raw = obj["merges"]
    n = len(merges_raw) + 1
    merges = []
    for m in sorted(merges_raw, key=lambda x: x["step"]):
        merges.append(Merge(int(m["step"]), int(m["left"]), int(m["right"]),
                            float(m["weight"])))
    tree = HierarchyTree(n, merges)
    for m in merges_raw:
        node = n - 1 + int(m["step"])
        if list(m["members"]) != tree.members(node):
            raise ValueError(f"members of step {m['step']} do not match tree")
    meta = {"example_id": obj.get("example_id", ""),
            "alpha1": float(obj.get("alpha1", 0.0)),
            "alpha2": float(obj.get("alpha2", 0.0))}
    return tree, meta


__all__ = [
    "EMB_MAGIC", "EMB_VERSION", "FormatError", "DatasetRecord",
    "load_dataset", "save_dataset", "save_embeddings", "load_embeddings",
    "load_example_dir", "load_parses", "save_parses", "mask_to_hex",
    "hex_to_mask", "save_cache", "load_cache", "save_probe", "load_probe",
    "export_tree", "import_tree",
]
