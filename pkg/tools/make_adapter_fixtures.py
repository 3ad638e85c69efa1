#!/usr/bin/env python3
"""Freeze a small adapter export into tests/fixtures/adapter/.

Run from the repository root with the adapter installed:
    python3 tools/make_adapter_fixtures.py
The tiny model is built in a temp dir and discarded; only the exported
files are committed.
"""
import json
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "adapter" / "src"))

from pe_adapter import AdapterConfig, export, make_tiny_model  # noqa: E402

EXAMPLES = [
    {"id": "ad000", "tokens": ["the", "movie", "was", "goodish"], "label": 1},
    {"id": "ad001", "tokens": ["badly", "flat", "plot"], "label": 0},
    {"id": "ad002", "tokens": ["great", "fun"], "label": 1},
]


def main():
    target = ROOT / "tests" / "fixtures" / "adapter"
    if target.exists():
        shutil.rmtree(target)
    with tempfile.TemporaryDirectory() as tmp:
        model_dir = make_tiny_model(Path(tmp) / "tiny", seed=0)
        data = Path(tmp) / "raw.jsonl"
        data.write_text("\n".join(json.dumps(e) for e in EXAMPLES) + "\n",
                        encoding="utf-8")
        export(AdapterConfig(model=model_dir, data=str(data),
                             out=str(target)))
    print(f"froze adapter export into {target}")


if __name__ == "__main__":
    main()
