"""Command line front door.

    tapas_export --in rows.jsonl --model tapas-base --pool cls --out emb.tgem

Exits 0 on success with a one-line JSON summary on stdout; failures print a
one-line JSON error to stderr and exit 1 (usage errors exit 2).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .encoders import MODEL_IDS, POOLINGS, ModelLoadError
from .exporter import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tapas_export", description=__doc__)
    parser.add_argument("--in", dest="corpus", required=True,
                        help="JSONL corpus of {row_id, text} rows")
    parser.add_argument("--model", choices=sorted(MODEL_IDS), default="tapas-base")
    parser.add_argument("--pool", choices=list(POOLINGS), default="cls")
    parser.add_argument("--out", required=True, help="TGEM file to write")
    parser.add_argument("--batch", type=int, default=16)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = export(ExportJob(args.corpus, args.model, args.pool,
                                   args.out, args.batch))
    except (ModelLoadError, ValueError, OSError) as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
