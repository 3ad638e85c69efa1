"""Deterministic tiny BERT-style classifier for offline tests and smoke
runs. Random-initialized with a fixed seed and a hand-built WordPiece
vocabulary (several words split into multiple pieces, so word pooling is
exercised), then saved like any other local checkpoint."""
from __future__ import annotations

from pathlib import Path

import torch
from transformers import BertConfig, BertForSequenceClassification, BertTokenizer

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "movie", "film", "plot", "acting", "was", "is",
    "good", "bad", "great", "dull", "fun", "slow", "sharp", "flat",
    "not", "very", "and", "but", "end", "start",
    "##ly", "##ish", "##ness", "##er", "##est", "##ing",
]


def make_tiny_model(out_dir, seed: int = 0, num_labels: int = 2) -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(str(vocab_file))
    tokenizer.save_pretrained(out)
    config = BertConfig(
        vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64,
        max_position_embeddings=64, num_labels=num_labels)
    torch.manual_seed(seed)
    model = BertForSequenceClassification(config)
    model.eval()
    model.save_pretrained(out)
    return str(out)
