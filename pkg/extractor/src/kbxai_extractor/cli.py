"""Run an extraction job from the command line.

`kbxai-extract job.json --out DIR` writes embeddings.csv, saliency.csv,
and one `sim_<name>.csv` column per typical exemplar.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .job import (
    ExtractorError,
    exemplar_similarity,
    extract_embeddings,
    load_job,
    saliency_summary,
    write_embeddings,
    write_feature_column,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kbxai-extract")
    parser.add_argument("job", help="job JSON file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--skip-saliency", action="store_true")
    args = parser.parse_args(argv)
    try:
        job = load_job(args.job)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        vectors = extract_embeddings(job)
        write_embeddings(job, vectors, out / "embeddings.csv")
        if not args.skip_saliency:
            write_feature_column(saliency_summary(job), out / "saliency.csv")
        for name in sorted(job.typical_exemplars):
            column = exemplar_similarity(job, name, vectors=vectors)
            write_feature_column(column, out / f"sim_{name}.csv")
        print(f"wrote {len(vectors)} embeddings to {out}")
        return 0
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
