#!/usr/bin/env python3
"""Generate the checked-in test fixtures.

Run from the repository root:  python3 tools/make_fixtures.py
Rewrites tests/fixtures deterministically; commit the result.
"""
import json
import struct
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from pexplain import fileio, synthetic  # noqa: E402
from pexplain.cli import deterministic_toy_oracle  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "tests" / "fixtures"
SEED = 0


def make_toyset():
    out = FIX / "toyset"
    emb_dir = out / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    data = synthetic.sentiment_toyset(6, seed=SEED, d_in=16, n_min=4, n_max=9)
    records = []
    heads_list = []
    for i, ex in enumerate(data):
        eid = f"fx{i:03d}"
        oracle = deterministic_toy_oracle(eid, ex.n, SEED)
        rec = fileio.DatasetRecord(
            id=eid, tokens=ex.tokens, label=ex.label,
            predicted_label=int(oracle.predicted_prob >= 0.5),
            predicted_prob=oracle.predicted_prob)
        records.append(rec)
        fileio.save_embeddings(emb_dir / f"{eid}.emb", ex.seq_embedding,
                               ex.embeddings)
        heads_list.append(ex.heads)
    fileio.save_dataset(records, out / "dataset.jsonl")
    fileio.save_parses(heads_list, out / "parses.conllu")
    print(f"toyset: {len(records)} examples")


def make_majority_cache():
    entries = {m: (1.0 if bin(m).count("1") >= 2 else 0.0) for m in range(8)}
    fileio.save_cache(FIX / "majority3.cache.json", entries, 3,
                      strategy="del", predicted_label=1)
    print("majority3 cache written")


def make_corrupt():
    out = FIX / "corrupt"
    out.mkdir(parents=True, exist_ok=True)

    # --- embedding files
    good_header = fileio.EMB_MAGIC + struct.pack("<HII", 1, 2, 3)
    body = np.arange(9, dtype="<f4").tobytes()
    (out / "emb_bad_magic.emb").write_bytes(b"NOTEMB" + good_header[6:] + body)
    (out / "emb_truncated.emb").write_bytes(good_header + body[:-4])
    (out / "emb_short_header.emb").write_bytes(good_header[:10])
    (out / "emb_bad_version.emb").write_bytes(
        fileio.EMB_MAGIC + struct.pack("<HII", 9, 2, 3) + body)
    nan_body = np.array([np.nan] * 9, dtype="<f4").tobytes()
    (out / "emb_nonfinite.emb").write_bytes(good_header + nan_body)

    # --- dataset records
    (out / "dataset_bad_json.jsonl").write_text('{"id": not json}\n')
    (out / "dataset_bad_prob.jsonl").write_text(json.dumps(
        {"id": "a", "tokens": ["x"], "label": 0, "predicted_label": 0,
         "predicted_prob": 1.7}) + "\n")
    (out / "dataset_empty_tokens.jsonl").write_text(json.dumps(
        {"id": "a", "tokens": [], "label": 0, "predicted_label": 0,
         "predicted_prob": 0.5}) + "\n")
    (out / "dataset_dup_id.jsonl").write_text("\n".join(
        json.dumps({"id": "a", "tokens": ["x"], "label": 0,
                    "predicted_label": 0, "predicted_prob": 0.5})
        for _ in range(2)) + "\n")

    # --- parses
    (out / "parse_two_roots.conllu").write_text("1\t0\n2\t0\n")
    (out / "parse_cycle.conllu").write_text("1\t2\n2\t1\n3\t0\n")
    (out / "parse_bad_index.conllu").write_text("1\t0\n3\t1\n")
    (out / "parse_bad_fields.conllu").write_text("1\t0\tEXTRA\n")

    # --- caches
    (out / "cache_missing_full.cache.json").write_text(json.dumps(
        {"strategy": "del", "predicted_label": 0, "n_tokens": 2,
         "entries": {"00": 0.5, "01": 0.4}}) + "\n")
    (out / "cache_missing_empty.cache.json").write_text(json.dumps(
        {"strategy": "del", "predicted_label": 0, "n_tokens": 2,
         "entries": {"03": 0.5, "01": 0.4}}) + "\n")
    (out / "cache_bad_prob.cache.json").write_text(json.dumps(
        {"strategy": "del", "predicted_label": 0, "n_tokens": 2,
         "entries": {"00": 0.5, "03": 1.4}}) + "\n")
    (out / "cache_bad_hex.cache.json").write_text(json.dumps(
        {"strategy": "del", "predicted_label": 0, "n_tokens": 2,
         "entries": {"zz": 0.5, "03": 0.4, "00": 0.1}}) + "\n")
    (out / "cache_extra_bits.cache.json").write_text(json.dumps(
        {"strategy": "del", "predicted_label": 0, "n_tokens": 2,
         "entries": {"00": 0.1, "03": 0.4, "0f": 0.5}}) + "\n")
    n = len(list(out.iterdir()))
    print(f"corrupt fixtures: {n}")


if __name__ == "__main__":
    FIX.mkdir(parents=True, exist_ok=True)
    make_toyset()
    make_majority_cache()
    make_corrupt()
