"""CLI: embed-export --manifest PATH --out PATH [--model NAME] [--batch N]"""

from __future__ import annotations

import argparse
import sys

from .export import DEFAULT_BATCH, DEFAULT_MODEL, ExportError, ExportJob, export


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    parser.add_argument("--manifest", required=True, help="UTF-8 file, one text per line")
    parser.add_argument("--out", required=True, help="binary embedding file to write")
    parser.add_argument("--model", default=DEFAULT_MODEL)
    parser.add_argument("--batch", type=int, default=DEFAULT_BATCH)
    args = parser.parse_args(argv)
    job = ExportJob(manifest=args.manifest, out=args.out, model=args.model, batch_size=args.batch)
    try:
        held = export(job)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(held)} embeddings -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
