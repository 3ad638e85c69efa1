import json

import pytest

from pe_adapter import AdapterConfig, export, make_tiny_model

EXAMPLES = [
    {"id": "r000", "tokens": ["the", "movie", "was", "goodish"], "label": 1},
    {"id": "r001", "tokens": ["badly", "flat", "plot"], "label": 0},
    {"id": "r002", "tokens": ["acting", "was", "very", "sharp"], "label": 1},
    {"id": "r003", "tokens": ["duller", "and", "duller"], "label": 0},
    {"id": "r004", "tokens": ["fun", "start", "but", "slow", "end"], "label": 1},
    {"id": "r005", "tokens": ["not", "a", "good", "film"], "label": 0},
    {"id": "r006", "tokens": ["sharpest", "acting"], "label": 1},
    {"id": "r007", "tokens": ["the", "plot", "was", "flatly", "dull"], "label": 0},
    {"id": "r008", "tokens": ["great", "fun"], "label": 1},
    {"id": "r009", "tokens": ["starting", "slow", "but", "great"], "label": 1},
]


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory):
    return make_tiny_model(tmp_path_factory.mktemp("tiny-model"), seed=0)


@pytest.fixture(scope="session")
def input_jsonl(tmp_path_factory):
    path = tmp_path_factory.mktemp("input") / "raw.jsonl"
    path.write_text("\n".join(json.dumps(e) for e in EXAMPLES) + "\n",
                    encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def exported(tiny_model, input_jsonl, tmp_path_factory):
    out = tmp_path_factory.mktemp("exported")
    cfg = AdapterConfig(model=tiny_model, data=str(input_jsonl), out=str(out))
    records = export(cfg)
    return out, records
