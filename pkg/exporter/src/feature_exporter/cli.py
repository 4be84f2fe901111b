"""export-features command line entry point.

Exit codes follow the band toolkit convention: 0 success, 1 usage error,
2 data or model error.
"""

import argparse
import sys

from .encoders import ExporterError
from .export import export_features


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _cutoff_list(text: str):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty cutoff list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="export-features", description=__doc__)
    parser.add_argument("--model", required=True,
                        help="transformers checkpoint id, or toy:<seed>")
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--texts", default=None,
                        help="caption file, one line per caption")
    parser.add_argument("--cutoffs", type=_cutoff_list, required=True)
    parser.add_argument("--mode", choices=("lp", "hp"), required=True)
    parser.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        manifest = export_features(args.model, args.images, args.texts,
                                   args.cutoffs, args.mode, args.out)
    except ExporterError as err:
        sys.stderr.write(f"export-features: {err}\n")
        return 2
    except (OSError, FileNotFoundError) as err:
        sys.stderr.write(f"export-features: i/o error: {err}\n")
        return 2
    except ValueError as err:
        sys.stderr.write(f"export-features: invalid arguments: {err}\n")
        return 1
    print(f"wrote {len(manifest.files)} files to {args.out}")
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
