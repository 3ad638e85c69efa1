"""Round-trip acceptance: exported files must satisfy every consumer-side
loader invariant and reproduce the adapter's own numbers."""
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer

from pe_adapter import AdapterConfig, AlignmentError, ClassifierBridge, export
from pe_adapter.exporter import masks_for

from pexplain import fileio
from pexplain.attribution import full_mask, occlusion


def test_exports_pass_all_primary_loaders(exported):
    out, records = exported
    loaded, embs = fileio.load_example_dir(out)
    assert len(loaded) == len(records) == 10
    for rec in loaded:
        seq, toks = embs[rec.id]
        assert toks.shape[0] == rec.n          # alignment contract
        oracle = fileio.load_cache(out / "caches" / f"{rec.id}.cache.json")
        assert oracle.n == rec.n
        assert oracle.strategy == "del"
        assert 0.0 <= rec.predicted_prob <= 1.0


def test_full_mask_entry_matches_predicted_prob(exported):
    out, _ = exported
    for rec in fileio.load_dataset(out / "dataset.jsonl"):
        oracle = fileio.load_cache(out / "caches" / f"{rec.id}.cache.json")
        assert oracle.query(full_mask(rec.n)) == pytest.approx(
            rec.predicted_prob, abs=1e-6)
        assert oracle.predicted_label == rec.predicted_label


def test_singleton_scheme_entry_count(exported):
    out, _ = exported
    for rec in fileio.load_dataset(out / "dataset.jsonl"):
        cache = json.loads(
            (out / "caches" / f"{rec.id}.cache.json").read_text())
        assert len(cache["entries"]) == rec.n + 2


def test_cached_occlusions_match_adapter_recomputation(exported, tiny_model):
    out, _ = exported
    bridge = ClassifierBridge(tiny_model)
    records = fileio.load_dataset(out / "dataset.jsonl")
    assert len(records) == 10
    for rec in records:
        oracle = fileio.load_cache(out / "caches" / f"{rec.id}.cache.json")
        pieces = bridge.word_pieces(rec.tokens)
        full = full_mask(rec.n)
        for j in range(rec.n):
            probs, _ = bridge.predict_masks(
                pieces, [full, full & ~(1 << j)], "del",
                target=rec.predicted_label)
            direct = float(probs[0] - probs[1])
            assert occlusion(oracle, [j]) == pytest.approx(direct, abs=1e-6)


def test_full_prob_matches_independent_forward_pass(exported, tiny_model):
    # duplicate forward pass straight through transformers, no bridge code
    out, _ = exported
    tok = AutoTokenizer.from_pretrained(tiny_model)
    model = AutoModelForSequenceClassification.from_pretrained(tiny_model)
    model.eval()
    for rec in fileio.load_dataset(out / "dataset.jsonl")[:4]:
        enc = tok(" ".join(rec.tokens), return_tensors="pt")
        with torch.no_grad():
            dist = torch.softmax(model(**enc).logits.double(), dim=-1)[0]
        assert float(dist[rec.predicted_label]) == pytest.approx(
            rec.predicted_prob, abs=1e-6)
        assert int(torch.argmax(dist)) == rec.predicted_label


def test_word_pooling_is_piece_mean(exported, tiny_model):
    out, _ = exported
    bridge = ClassifierBridge(tiny_model)
    rec = [r for r in fileio.load_dataset(out / "dataset.jsonl")
           if r.id == "r000"][0]          # contains "goodish" = good + ##ish
    pieces = bridge.word_pieces(rec.tokens)
    assert any(len(p) > 1 for p in pieces)
    ids = [bridge.tokenizer.cls_token_id]
    for p in pieces:
        ids.extend(p)
    ids.append(bridge.tokenizer.sep_token_id)
    with torch.no_grad():
        hs = bridge.model(input_ids=torch.tensor([ids]),
                          output_hidden_states=True).hidden_states[-1][0]
    hidden = hs.double().numpy()
    _, toks = fileio.load_embeddings(out / "embeddings" / f"{rec.id}.emb")
    pos = 1
    for j, p in enumerate(pieces):
        manual = hidden[pos:pos + len(p)].mean(axis=0)
        pos += len(p)
        assert np.allclose(toks[j], manual, atol=1e-6)


def test_export_is_deterministic(tiny_model, input_jsonl, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        export(AdapterConfig(model=tiny_model, data=str(input_jsonl),
                             out=str(out)))
        outs.append(out)
    for rel in ["dataset.jsonl", "embeddings/r000.emb",
                "caches/r003.cache.json"]:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()


def test_pad_strategy_exports_load(tiny_model, input_jsonl, tmp_path):
    out = tmp_path / "pad"
    export(AdapterConfig(model=tiny_model, data=str(input_jsonl),
                         out=str(out), strategy="pad"))
    for rec in fileio.load_dataset(out / "dataset.jsonl"):
        oracle = fileio.load_cache(out / "caches" / f"{rec.id}.cache.json")
        assert oracle.strategy == "pad"
        assert oracle.query(0) >= 0.0


def test_pairs_scheme_and_masks_file(tiny_model, input_jsonl, tmp_path):
    out = tmp_path / "pairs"
    export(AdapterConfig(model=tiny_model, data=str(input_jsonl),
                         out=str(out), cache_masks="pairs"))
    rec = fileio.load_dataset(out / "dataset.jsonl")[0]
    n = rec.n
    cache = json.loads((out / "caches" / f"{rec.id}.cache.json").read_text())
    assert len(cache["entries"]) == 2 + n + n * (n - 1) // 2

    masks_path = tmp_path / "masks.txt"
    masks_path.write_text("03\n01\n00\n")  # valid for every example (n >= 2)
    out2 = tmp_path / "filemasks"
    export(AdapterConfig(model=tiny_model, data=str(input_jsonl),
                         out=str(out2), cache_masks="file",
                         masks_file=str(masks_path)))
    oracle = fileio.load_cache(out2 / "caches" / "r000.cache.json")
    assert 0x03 in oracle.entries and 0x01 in oracle.entries

    wide = tmp_path / "wide.txt"
    wide.write_text("0f\n")  # bits beyond the 2-token example: an error
    with pytest.raises(ValueError):
        export(AdapterConfig(model=tiny_model, data=str(input_jsonl),
                             out=str(tmp_path / "bad"), cache_masks="file",
                             masks_file=str(wide)))


def test_misalignment_fails_loudly(tiny_model, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"id": "x", "tokens": ["good", ""],
                               "label": 0}) + "\n")
    with pytest.raises(AlignmentError):
        export(AdapterConfig(model=tiny_model, data=str(bad),
                             out=str(tmp_path / "out")))


def test_masks_for_guard():
    with pytest.raises(ValueError):
        masks_for(20, "pairs", limit=10)


def test_cli_export(tiny_model, input_jsonl, tmp_path):
    out = tmp_path / "cli-out"
    proc = subprocess.run(
        [sys.executable, "-m", "pe_adapter.cli", "export",
         "--model", tiny_model, "--data", str(input_jsonl),
         "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "dataset.jsonl").exists()
    records, embs = fileio.load_example_dir(out)
    assert len(records) == 10

    missing = subprocess.run(
        [sys.executable, "-m", "pe_adapter.cli", "export",
         "--model", tiny_model, "--data", str(tmp_path / "nope.jsonl"),
         "--out", str(out)],
        capture_output=True, text=True)
    assert missing.returncode == 2
