import json

import pytest

from stub_encoder import StubEncoder


@pytest.fixture
def stub_encoder():
    return StubEncoder()


@pytest.fixture
def write_corpus(tmp_path):
    def _write(rows, name="rows.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for rid, text in rows:
                fh.write(json.dumps({"row_id": rid, "text": text}) + "\n")
        return path
    return _write
