"""Command-line entry point.

Subcommands: process, simulate, train, summary, eval.  Exit codes are
stable: 0 success, 2 sample-rate mismatch, 3 missing weights, 4 corrupt
file (WAV or weights), 5 invalid configuration, 6 bad manifest or paths.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bark import build_bark_matrix
from .config import PipelineConfig, load_pipeline_config, write_reference_config
from .dsp import read_wav, write_wav
from .errors import (
    ConfigError,
    ContractError,
    SampleRateError,
    SignalIntegrityError,
    TrainingDivergedError,
    WeightFormatError,
    WeightIntegrityError,
    WeightShapeError,
)
from .metrics import evaluate
from .model import count_macs_per_second, count_params, load_params, summarize
from .pipeline import process_file_arrays
from .simulate import make_dataset
from .training import prepare_dataset, train
from .validation import check_sample_rate

EXIT_OK = 0
EXIT_SAMPLE_RATE = 2
EXIT_MISSING_WEIGHTS = 3
EXIT_CORRUPT = 4
EXIT_BAD_CONFIG = 5
EXIT_BAD_PATHS = 6

log = logging.getLogger("echofree")


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return load_pipeline_config(path)


def _read_input_wav(path):
    try:
        x, sr = read_wav(path)
    except FileNotFoundError:
        raise
    except SampleRateError:
        raise
    except Exception as exc:
        raise _Corrupt(f"{path}: unreadable WAV ({exc})") from exc
    check_sample_rate(sr, str(path))
    return x


class _Corrupt(Exception):
    pass


def cmd_process(args) -> int:
    cfg = _load_config(args.config)
    mic = _read_input_wav(args.mic)
    far = _read_input_wav(args.far)
    if len(mic) != len(far):
        log.warning("mic (%d) and far (%d) lengths differ; zero-padding the shorter",
                    len(mic), len(far))
    weights_path = Path(args.weights)
    if not weights_path.exists():
        print(f"weights file not found: {weights_path}", file=sys.stderr)
        return EXIT_MISSING_WEIGHTS
    params = load_params(weights_path, cfg.model)
    out, pipe = process_file_arrays(
        mic, far, params,
        chunk=args.chunk,
        model_cfg=cfg.model, stft_cfg=cfg.stft, kalman_cfg=cfg.kalman,
        oracle_ones=args.oracle_ones,
        collect_intermediates=args.dump_intermediates is not None,
    )
    write_wav(args.out, out)
    print(f"algorithmic latency: {pipe.latency_samples} samples "
          f"({pipe.latency_ms:.1f} ms)")
    if args.dump_intermediates is not None:
        pipe.dump_intermediates(args.dump_intermediates)
        print(f"intermediates written to {args.dump_intermediates}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    manifest = make_dataset(cfg.sim, args.n, args.clip_len, args.out,
                            speech_source_dir=args.source_dir)
    print(f"wrote {args.n} samples; manifest at {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    manifest = Path(args.data)
    if not manifest.is_file():
        print(f"manifest not found: {manifest}", file=sys.stderr)
        return EXIT_BAD_PATHS
    bark = build_bark_matrix(cfg.model.out_bands, cfg.stft.n_bins)
    dataset = prepare_dataset(
        manifest, cfg.stft, cfg.kalman, bark,
        val_fraction=cfg.train.val_fraction, seed=cfg.train.seed,
        dtype=np.float32 if cfg.train.dtype == "float32" else np.float64,
    )
    stage_plan = {"1": (1,), "2": (2,), "both": (1, 2)}[args.stage]
    initial = None
    if args.resume is not None:
        initial = load_params(args.resume, cfg.model)
    params, history = train(
        cfg.train, dataset, cfg.model, bark,
        stage_plan=stage_plan, out_dir=args.out,
        initial_params=initial, initial_lr=args.lr,
    )
    last = history.rows[-1]
    print(f"finished: stage {last['stage']} epoch {last['epoch']} "
          f"val_loss {last['val_loss']:.5f}; artifacts in {args.out}")
    return EXIT_OK


def cmd_summary(args) -> int:
    cfg = _load_config(args.config)
    print(summarize(cfg.model))
    print(f"parameter budget check: {count_params(cfg.model)} in [250000, 350000]")
    print(f"MACs/s budget check: {count_macs_per_second(cfg.model)} <= 40000000")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = Path(args.manifest)
    processed = Path(args.processed)
    if not manifest.is_file() or not processed.is_dir():
        print(f"manifest or processed dir missing: {manifest}, {processed}",
              file=sys.stderr)
        return EXIT_BAD_PATHS
    report = evaluate(processed, manifest, embeddings_dir=args.embeddings)
    if args.out_csv:
        report.to_csv(args.out_csv)
        print(f"report written to {args.out_csv}")
    for line in report.summary_lines():
        print(line)
    return EXIT_OK


def cmd_init_config(args) -> int:
    write_reference_config(args.out, desk=args.desk)
    print(f"wrote {'desk' if args.desk else 'reference'} config to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echofree",
        description="Streaming echo cancellation: adaptive filter + neural post-filter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="run the full pipeline over a WAV pair")
    p.add_argument("--mic", required=True)
    p.add_argument("--far", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--chunk", type=int, default=None,
                   help="feed input in chunks of this many samples")
    p.add_argument("--dump-intermediates", default=None,
                   help="directory for echo/residual/gain/mask dumps")
    p.add_argument("--oracle-ones", action="store_true",
                   help="debug: replace predicted gains with ones")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--clip-len", type=float, default=2.0)
    p.add_argument("--source-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="two-stage training on a simulated set")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="simulator manifest CSV")
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="EFWT checkpoint to start from")
    p.add_argument("--lr", type=float, default=None,
                   help="override the starting learning rate (resume)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summary", help="print layer shapes and budgets")
    p.add_argument("--config")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("eval", help="score processed clips against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--processed", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("init-config", help="write a reference or desk config file")
    p.add_argument("--out", required=True)
    p.add_argument("--desk", action="store_true")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SampleRateError as exc:
        print(f"sample-rate error: {exc}", file=sys.stderr)
        return EXIT_SAMPLE_RATE
    except FileNotFoundError as exc:
        missing = Path(str(exc.filename or ""))
        if missing.suffix == ".efwt":
            print(f"weights file not found: {missing}", file=sys.stderr)
            return EXIT_MISSING_WEIGHTS
        print(f"path error: {exc}", file=sys.stderr)
        return EXIT_BAD_PATHS
    except (WeightFormatError, WeightIntegrityError, WeightShapeError,
            SignalIntegrityError, _Corrupt) as exc:
        print(f"corrupt input: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ContractError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_PATHS


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
