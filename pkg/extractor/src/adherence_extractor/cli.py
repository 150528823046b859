"""Command line: extract --windows DIR --model NAME --out FILE."""

import argparse
import sys

from .extract import MODEL_DIMS, extract
from .models import MissingWeightsError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adherence-extract",
        description="Embed a window cache with a pretrained model, writing AEMB v1",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="embed every window WAV in a cache")
    p.add_argument("--windows", required=True,
                   help="window cache directory (or its windows/ subdirectory)")
    p.add_argument("--model", required=True, choices=sorted(MODEL_DIMS))
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None,
                   help="torch state-dict checkpoint for the model")
    p.add_argument("--random-init", action="store_true",
                   help="run with deterministic random weights (pipeline testing)")
    p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def progress(done, total, name):
        if not args.quiet and (done % 25 == 0 or done == total):
            print(f"  {done}/{total} {name}", file=sys.stderr)

    try:
        out = extract(args.windows, args.model, args.out,
                      weights=args.weights, random_init=args.random_init,
                      progress=progress)
    except MissingWeightsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
