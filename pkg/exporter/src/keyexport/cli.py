"""export-keys command line.

Exit codes: 0 success, 2 usage problems (bad flags, empty/unreadable
text), 3 model-load failure, 4 captured-shape mismatch.
"""

import argparse
import sys

from .extract import (
    EmptyTextError,
    ExportConfig,
    ModelLoadError,
    ShapeMismatchError,
    export_keys,
)


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="export-keys",
        description="Dump pre/post-rotary attention keys per (layer, head) as LKD1 files.",
    )
    parser.add_argument("--model", required=True, help="model id or local path")
    parser.add_argument("--text", required=True, help="UTF-8 text file to run through the model")
    parser.add_argument("--max-tokens", type=int, default=4096)
    parser.add_argument("--stage", choices=["pre", "post", "both"], default="both")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--window", type=int, default=512, help="tokens per forward pass")
    parser.add_argument("--layers", type=_ints, default=[], help="layer filter (default all)")
    parser.add_argument("--heads", type=_ints, default=[], help="KV-head filter (default all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExportConfig(
            model_id=args.model,
            text_path=args.text,
            out_dir=args.out,
            max_tokens=args.max_tokens,
            stage=args.stage,
            window=args.window,
            layers=args.layers,
            heads=args.heads,
        )
        written = export_keys(config)
    except (ValueError, EmptyTextError) as exc:
        print(f"error (usage): {exc}", file=sys.stderr)
        return 2
    except ModelLoadError as exc:
        print(f"error (model): {exc}", file=sys.stderr)
        return 3
    except ShapeMismatchError as exc:
        print(f"error (shape): {exc}", file=sys.stderr)
        return 4
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
