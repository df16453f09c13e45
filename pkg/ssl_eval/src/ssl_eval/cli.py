"""Command-line entry point.

Subcommands: export, dist.  Exit codes are stable: 0 success, 2 bad
paths or violated preconditions, 3 model weights unavailable (a
download instruction is printed), 4 corrupt embedding file.
"""

from __future__ import annotations

import argparse
import sys

from .efem import embedding_distance, read_embedding_file
from .errors import ContractError, EmbeddingFormatError, ModelUnavailableError

EXIT_OK = 0
EXIT_BAD_PATHS = 2
EXIT_NO_MODEL = 3
EXIT_CORRUPT = 4


def cmd_export(args) -> int:
    # torch import is heavy; keep it off the dist path
    from .wavlm import export_embeddings

    try:
        written, skipped = export_embeddings(
            args.wav_dir, args.out_dir, layers=args.layers, model_dir=args.model_dir
        )
    except ModelUnavailableError as exc:
        print(exc, file=sys.stderr)
        return EXIT_NO_MODEL
    except (ContractError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_BAD_PATHS
    print(f"exported {len(written)} embedding files to {args.out_dir}"
          + (f" (skipped {len(skipped)})" if skipped else ""))
    return EXIT_OK


def cmd_dist(args) -> int:
    try:
        a = read_embedding_file(args.a)
        b = read_embedding_file(args.b)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_BAD_PATHS
    except EmbeddingFormatError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CORRUPT
    try:
        dist = embedding_distance(a, b, per_vector=args.per_vector)
    except ContractError as exc:
        print(exc, file=sys.stderr)
        return EXIT_BAD_PATHS
    print(f"{dist:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssl-eval",
        description="Export frozen WavLM layer embeddings and compare them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="embed every WAV in a directory")
    p_export.add_argument("--wav-dir", required=True)
    p_export.add_argument("--out-dir", required=True)
    p_export.add_argument("--layers", choices=("transformer-only", "all"),
                          default="transformer-only")
    p_export.add_argument("--model-dir", default=None,
                          help="local save_pretrained directory with the WavLM weights")
    p_export.set_defaults(func=cmd_export)

    p_dist = sub.add_parser("dist", help="embedding distance between two EFEM files")
    p_dist.add_argument("a")
    p_dist.add_argument("b")
    p_dist.add_argument("--per-vector", action="store_true",
                        help="average per-frame squared norms instead of per-element squares")
    p_dist.set_defaults(func=cmd_dist)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
