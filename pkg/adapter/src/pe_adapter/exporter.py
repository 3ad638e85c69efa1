"""Bridge from a transformers sequence classifier to the explanation
pipeline's file formats.

Exports, per example: a binary embedding file (row 0 the first special
token's hidden state, one mean-pooled row per input word), a dataset
record with the predicted label and its probability, and a probability
cache over requested token-presence masks with the predicted class held
fixed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer

from . import formats


class AlignmentError(RuntimeError):
    """A word could not be mapped to at least one subword piece."""


@dataclass
class AdapterConfig:
    model: str                      # local path or model name
    data: str                       # input JSONL: {id, tokens, label}
    out: str                        # output directory
    layer: int = -1                 # hidden-state layer for embeddings
    strategy: str = "del"           # del | pad
    cache_masks: str = "singletons"  # singletons | pairs | file
    masks_file: str | None = None   # hex masks, one per line, for "file"
    max_masks: int = 4096           # guard per example
    batch_size: int = 32

    def __post_init__(self):
        if self.strategy not in ("del", "pad"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.cache_masks not in ("singletons", "pairs", "file"):
            raise ValueError(f"unknown mask set {self.cache_masks!r}")
        if self.cache_masks == "file" and not self.masks_file:
            raise ValueError("cache_masks=file requires masks_file")


def load_input_examples(path):
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            tokens = list(obj["tokens"])
            if not tokens:
                raise ValueError(f"{path}:{lineno}: empty token list")
            examples.append({"id": str(obj["id"]), "tokens": tokens,
                             "label": int(obj.get("label", 0))})
    if not examples:
        raise ValueError(f"{path}: no examples")
    return examples


class ClassifierBridge:
    """Tokenizer + model wrapper doing word-aligned masked inference."""

    def __init__(self, model_path, layer=-1, batch_size=32):
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForSequenceClassification.from_pretrained(
            model_path)
        self.model.eval()
        self.layer = layer
        self.batch_size = batch_size
        n_layers = self.model.config.num_hidden_layers
        if not -(n_layers + 1) <= layer <= n_layers:
            raise ValueError(f"layer {layer} invalid for {n_layers}-layer model")

    def word_pieces(self, words):
        """Per-word subword ids; fails loudly if any word vanishes."""
        pieces = []
        for w in words:
            ids = self.tokenizer(w, add_special_tokens=False)["input_ids"]
            if len(ids) == 0:
                raise AlignmentError(
                    f"word {w!r} produced no subword pieces")
            pieces.append(ids)
        return pieces

    def _input_for_mask(self, pieces, mask):
        cls = self.tokenizer.cls_token_id
        sep = self.tokenizer.sep_token_id
        pad = self.tokenizer.pad_token_id
        ids = [cls]
        for j, p in enumerate(pieces):
            if mask >> j & 1:
                ids.extend(p)
            elif self._strategy == "pad":
                ids.append(pad)  # one pad token per dropped word
        ids.append(sep)
        return ids

    def predict_masks(self, pieces, masks, strategy, target=None):
        """Probabilities for each mask; class fixed to ``target`` if given.

        Returns (probs array, predicted label of the first mask if target
        is None).
        """
        self._strategy = strategy
        inputs = [self._input_for_mask(pieces, m) for m in masks]
        probs = np.empty(len(inputs))
        label = target
        pad = self.tokenizer.pad_token_id
        with torch.no_grad():
            for start in range(0, len(inputs), self.batch_size):
                chunk = inputs[start:start + self.batch_size]
                width = max(len(c) for c in chunk)
                batch = torch.full((len(chunk), width), pad, dtype=torch.long)
                attn = torch.zeros((len(chunk), width), dtype=torch.long)
                for i, c in enumerate(chunk):
                    batch[i, :len(c)] = torch.tensor(c)
                    attn[i, :len(c)] = 1
                logits = self.model(input_ids=batch,
                                    attention_mask=attn).logits
                dist = torch.softmax(logits.double(), dim=-1)
                if label is None:
                    label = int(torch.argmax(dist[0]))
                probs[start:start + len(chunk)] = dist[:, label].numpy()
        return probs, label

    def embed(self, pieces):
        """CLS vector and mean-pooled per-word vectors at the config layer."""
        cls = self.tokenizer.cls_token_id
        sep = self.tokenizer.sep_token_id
        ids = [cls]
        spans = []
        for p in pieces:
            spans.append((len(ids), len(ids) + len(p)))
            ids.extend(p)
        ids.append(sep)
        with torch.no_grad():
            out = self.model(input_ids=torch.tensor([ids]),
                             output_hidden_states=True)
        hidden = out.hidden_states[self.layer][0].double().numpy()
        seq_vec = hidden[0]
        word_vecs = np.stack([hidden[a:b].mean(axis=0) for a, b in spans])
        if word_vecs.shape[0] != len(pieces):
            raise AlignmentError(
                f"pooled {word_vecs.shape[0]} words, expected {len(pieces)}")
        return seq_vec, word_vecs


def masks_for(n, scheme, masks_file=None, limit=4096):
    full = (1 << n) - 1
    masks = {full, 0}
    if scheme in ("singletons", "pairs"):
        for j in range(n):
            masks.add(full & ~(1 << j))
    if scheme == "pairs":
        for i in range(n):
            for j in range(i + 1, n):
                masks.add(full & ~((1 << i) | (1 << j)))
    if scheme == "file":
        with open(masks_file, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                raw = bytes.fromhex(line)
                mask = int.from_bytes(raw, "little")
                if mask > full:
                    raise ValueError(
                        f"mask {line} has bits beyond token {n - 1}")
                masks.add(mask)
    masks = sorted(masks)
    if len(masks) > limit:
        raise ValueError(f"{len(masks)} masks exceed the per-example "
                         f"limit {limit}")
    return masks


def export(cfg: AdapterConfig):
    """Run the full export; returns the written dataset records."""
    out = Path(cfg.out)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    (out / "caches").mkdir(parents=True, exist_ok=True)
    bridge = ClassifierBridge(cfg.model, cfg.layer, cfg.batch_size)
    examples = load_input_examples(cfg.data)
    records = []
    for ex in examples:
        n = len(ex["tokens"])
        pieces = bridge.word_pieces(ex["tokens"])
        masks = masks_for(n, cfg.cache_masks, cfg.masks_file, cfg.max_masks)
        full = (1 << n) - 1
        # predicted label comes from the unmasked input
        probs_full, label = bridge.predict_masks(pieces, [full],
                                                 cfg.strategy, target=None)
        probs, _ = bridge.predict_masks(pieces, masks, cfg.strategy,
                                        target=label)
        entries = dict(zip(masks, probs.tolist()))
        entries[full] = float(probs_full[0])
        seq_vec, word_vecs = bridge.embed(pieces)
        formats.write_embeddings(out / "embeddings" / f"{ex['id']}.emb",
                                 seq_vec, word_vecs)
        formats.write_cache(out / "caches" / f"{ex['id']}.cache.json",
                            entries, n, cfg.strategy, label)
        records.append({"id": ex["id"], "tokens": ex["tokens"],
                        "label": ex["label"], "predicted_label": label,
                        "predicted_prob": float(probs_full[0])})
    formats.write_dataset(records, out / "dataset.jsonl")
    return records
