"""The ``export-embeddings`` command.

Two modes, selected by the input flag: ``--manifest`` embeds every image
of a corpus manifest, ``--prompts`` embeds a ``category<TAB>prompt``
file into a unit-norm bank.  Both write EMB1 containers and print a
small JSON summary.  Exit codes match the analyzer toolkit: 0 success,
1 usage error, 2 data error (unreadable inputs or an unresolvable
model; the message names the offender), 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback

from embexport import __version__
from embexport.errors import ExportError
from embexport.export import (
    ExportJob,
    TEMPLATES,
    export_image_embeddings,
    export_prompt_bank,
    parse_prompts,
)


class UsageError(Exception):
    """Bad flags or flag values; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a positive integer, got {text!r}"
        ) from None
    if value < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return value


def build_parser() -> _Parser:
    parser = _Parser(
        prog="export-embeddings",
        description="Embed manifest images or text prompts into EMB1 "
                    "files.",
    )
    parser.add_argument("--version", action="version",
                        version=f"embexport {__version__}")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--manifest", help="corpus manifest CSV")
    source.add_argument("--prompts",
                        help="category<TAB>prompt file for a text bank")
    parser.add_argument("--model", required=True,
                        help="checkpoint directory or hub identifier")
    parser.add_argument("--out", required=True, help="output EMB1 path")
    parser.add_argument("--normalize", action="store_true",
                        help="unit-normalize image embeddings")
    parser.add_argument("--template", choices=tuple(TEMPLATES),
                        default=None,
                        help="prompt phrasing (default: bare)")
    parser.add_argument("--batch-size", type=_positive_int, default=16)
    parser.add_argument("--device", default="cpu",
                        help="torch device (default: cpu)")
    return parser


def _check_device(name: str) -> None:
    import torch

    try:
        torch.device(name)
    except (RuntimeError, ValueError) as exc:
        raise UsageError(f"bad device {name!r}: {exc}") from None


def _run(args) -> int:
    _check_device(args.device)
    if args.manifest:
        if args.template is not None:
            raise UsageError("--template only applies to --prompts")
        result = export_image_embeddings(ExportJob(
            manifest=args.manifest,
            model=args.model,
            out=args.out,
            normalize=args.normalize,
            batch_size=args.batch_size,
            device=args.device,
        ))
        summary = {
            "out": str(result.out),
            "n": result.n,
            "d": result.d,
            "datasets": result.datasets,
            "skipped": [rec["index"] for rec in result.skipped],
        }
    else:
        if args.normalize:
            raise UsageError(
                "--normalize only applies to --manifest "
                "(prompt banks are always unit-norm)"
            )
        prompts = parse_prompts(args.prompts)
        result = export_prompt_bank(
            prompts, args.model, args.out,
            template=args.template or "bare",
            device=args.device,
        )
        summary = {
            "out": str(result.out),
            "n": result.n,
            "d": result.d,
            "categories": result.datasets,
        }
    print(json.dumps(summary, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return 0 if (exc.code or 0) == 0 else 1
    try:
        return _run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ExportError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
