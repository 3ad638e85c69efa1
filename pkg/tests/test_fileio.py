import json
from pathlib import Path

import numpy as np
import pytest

from pexplain import fileio
from pexplain.attribution import MissingMaskError, full_mask
from pexplain.evaluation import toy_instance
from pexplain.hierarchy import build_pe_tree, caterpillar_tree
from pexplain.probes import SemanticProbe, SyntaxProbe

FIXTURES = Path(__file__).parent / "fixtures"


class TestDatasetRecords:
    def test_round_trip(self, tmp_path):
        records = [fileio.DatasetRecord("a", ["x", "y"], 1, 0, 0.25),
                   fileio.DatasetRecord("b", ["z"], 0, 0, 0.75)]
        path = tmp_path / "data.jsonl"
        fileio.save_dataset(records, path)
        back = fileio.load_dataset(path)
        assert back == records

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            fileio.DatasetRecord("a", ["x"], 0, 0, 1.5)

    def test_corrupt_fixtures_rejected_with_position(self):
        for name in ("dataset_bad_json.jsonl", "dataset_bad_prob.jsonl",
                     "dataset_empty_tokens.jsonl", "dataset_dup_id.jsonl"):
            with pytest.raises(fileio.FormatError) as err:
                fileio.load_dataset(FIXTURES / "corrupt" / name)
            assert "line" in str(err.value)


class TestEmbeddings:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        seq = rng.normal(0, 1, 5).astype(np.float32)
        toks = rng.normal(0, 1, (3, 5)).astype(np.float32)
        path = tmp_path / "x.emb"
        fileio.save_embeddings(path, seq, toks)
        seq2, toks2 = fileio.load_embeddings(path)
        assert np.array_equal(seq2, seq.astype(np.float64))
        assert np.array_equal(toks2, toks.astype(np.float64))
        assert path.stat().st_size == 16 + 4 * 4 * 5

    def test_write_is_byte_deterministic(self, tmp_path):
        rng = np.random.default_rng(1)
        seq = rng.normal(0, 1, 4)
        toks = rng.normal(0, 1, (2, 4))
        fileio.save_embeddings(tmp_path / "a.emb", seq, toks)
        fileio.save_embeddings(tmp_path / "b.emb", seq, toks)
        assert (tmp_path / "a.emb").read_bytes() == \
            (tmp_path / "b.emb").read_bytes()

    @pytest.mark.parametrize("name,position", [
        ("emb_bad_magic.emb", "byte 0"),
        ("emb_truncated.emb", "byte"),
        ("emb_short_header.emb", "byte 0"),
        ("emb_bad_version.emb", "byte 6"),
        ("emb_nonfinite.emb", "byte 16"),
    ])
    def test_corrupt_fixtures_rejected(self, name, position):
        with pytest.raises(fileio.FormatError) as err:
            fileio.load_embeddings(FIXTURES / "corrupt" / name)
        assert position in str(err.value)


class TestParses:
    def test_round_trip(self, tmp_path):
        heads = [[0, 1, 1], [2, 0], [0]]
        path = tmp_path / "p.conllu"
        fileio.save_parses(heads, path)
        assert fileio.load_parses(path) == heads

    @pytest.mark.parametrize("name", [
        "parse_two_roots.conllu", "parse_cycle.conllu",
        "parse_bad_index.conllu", "parse_bad_fields.conllu",
    ])
    def test_corrupt_fixtures_rejected(self, name):
        with pytest.raises(fileio.FormatError) as err:
            fileio.load_parses(FIXTURES / "corrupt" / name)
        assert "line" in str(err.value)


class TestProbCache:
    def test_hex_mask_round_trip(self):
        for n in (1, 3, 8, 9, 17):
            for mask in (0, full_mask(n), 0b101 & full_mask(n)):
                text = fileio.mask_to_hex(mask, n)
                assert fileio.hex_to_mask(text, n) == mask
                assert len(text) == 2 * max(1, (n + 7) // 8)

    def test_bit_zero_is_token_zero_little_endian(self):
        # token 0 present only -> lowest bit of the first byte
        assert fileio.mask_to_hex(1, 9) == "0100"
        assert fileio.mask_to_hex(1 << 8, 9) == "0001"

    def test_round_trip_through_oracle(self, tmp_path):
        entries = {0: 0.5, 1: 0.25, 3: 0.75}
        path = tmp_path / "c.cache.json"
        fileio.save_cache(path, entries, 2, "pad", 1)
        oracle = fileio.load_cache(path)
        assert oracle.strategy == "pad"
        assert oracle.predicted_label == 1
        assert oracle.query(3) == 0.75
        with pytest.raises(MissingMaskError):
            oracle.query(2)

    def test_majority_fixture(self):
        oracle = fileio.load_cache(FIXTURES / "majority3.cache.json")
        assert oracle.n == 3
        assert oracle.query(0b011) == 1.0
        assert oracle.query(0b001) == 0.0

    @pytest.mark.parametrize("name", [
        "cache_missing_full.cache.json", "cache_missing_empty.cache.json",
        "cache_bad_prob.cache.json", "cache_bad_hex.cache.json",
        "cache_extra_bits.cache.json",
    ])
    def test_corrupt_fixtures_rejected(self, name):
        with pytest.raises(fileio.FormatError):
            fileio.load_cache(FIXTURES / "corrupt" / name)


class TestProbeSnapshots:
    def test_semantic_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        probe = SemanticProbe(rng.normal(0, 0.3, (4, 3)),
                              rng.normal(0, 0.1, (2, 3)))
        path = tmp_path / "sem.json"
        fileio.save_probe(probe, path)
        back = fileio.load_probe(path)
        assert isinstance(back, SemanticProbe)
        assert np.array_equal(back.matrix, probe.matrix)
        assert np.array_equal(back.prototypes, probe.prototypes)

    def test_syntax_round_trip(self, tmp_path):
        probe = SyntaxProbe(np.array([[0.1, 0.2], [0.3, 0.4]]))
        path = tmp_path / "syn.json"
        fileio.save_probe(probe, path)
        back = fileio.load_probe(path)
        assert isinstance(back, SyntaxProbe)
        assert np.array_equal(back.matrix, probe.matrix)

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "mystery"}')
        with pytest.raises(fileio.FormatError):
            fileio.load_probe(path)


class TestTreeExport:
    def test_two_leaf_tree_single_merge_line(self):
        tree = caterpillar_tree([0, 1])
        text = fileio.export_tree(tree, "json", "ex", 0.1, 0.2)
        obj = json.loads(text)
        assert len(obj["merges"]) == 1
        assert obj["merges"][0]["members"] == [0, 1]

    def test_export_import_fixpoint(self):
        oracle, pos, dep = toy_instance(9, seed=4)
        res = build_pe_tree(pos, dep, oracle, 0.3, 0.2)
        text = fileio.export_tree(res.tree, "json", "e9", 0.3, 0.2)
        tree2, meta = fileio.import_tree(text)
        assert meta == {"example_id": "e9", "alpha1": 0.3, "alpha2": 0.2}
        text2 = fileio.export_tree(tree2, "json", meta["example_id"],
                                   meta["alpha1"], meta["alpha2"])
        assert text2 == text

    def test_dot_output_parses_under_grammar_checker(self):
        import re
        oracle, pos, dep = toy_instance(6, seed=5)
        res = build_pe_tree(pos, dep, oracle, 0.2, 0.2)
        dot = fileio.export_tree(res.tree, "dot", "e6")
        lines = dot.strip().splitlines()
        assert lines[0] == "digraph hierarchy {"
        assert lines[-1] == "}"
        node_re = re.compile(r'^\s*n\d+ \[label="[^"]*"\];$')
        edge_re = re.compile(r"^\s*n\d+ -> n\d+;$")
        attr_re = re.compile(r"^\s*node \[shape=box\];$")
        nodes = edges = 0
        for line in lines[1:-1]:
            if attr_re.match(line):
                continue
            if node_re.match(line):
                nodes += 1
            elif edge_re.match(line):
                edges += 1
            else:
                raise AssertionError(f"unparseable DOT line: {line!r}")
        assert nodes == 2 * res.tree.n - 1
        assert edges == 2 * (res.tree.n - 1)

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            fileio.export_tree(caterpillar_tree([0, 1]), "yaml")


def test_example_dir_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    records = [fileio.DatasetRecord("r0", ["a", "b", "c"], 0, 1, 0.5)]
    (tmp_path / "embeddings").mkdir()
    fileio.save_dataset(records, tmp_path / "dataset.jsonl")
    fileio.save_embeddings(tmp_path / "embeddings" / "r0.emb",
                           rng.normal(0, 1, 6), rng.normal(0, 1, (3, 6)))
    recs, embs = fileio.load_example_dir(tmp_path)
    assert recs == records
    assert embs["r0"][1].shape == (3, 6)


def test_frozen_adapter_export_passes_all_loaders():
    # files produced by the standalone adapter, checked in as fixtures
    adapter_dir = FIXTURES / "adapter"
    records, embs = fileio.load_example_dir(adapter_dir)
    assert len(records) == 3
    for rec in records:
        seq, toks = embs[rec.id]
        assert toks.shape[0] == rec.n
        oracle = fileio.load_cache(adapter_dir / "caches" /
                                   f"{rec.id}.cache.json")
        assert oracle.n == rec.n
        assert oracle.query(full_mask(rec.n)) == pytest.approx(
            rec.predicted_prob, abs=1e-6)
        assert len(oracle.entries) == rec.n + 2
