"""Command-line entry point.

    ckpt-export export --in model.pt --arch 16-230-5 --out out_dir/

Exit codes: 0 success, 2 bad input (unreadable checkpoint, malformed
architecture, shape or parameter mismatch), 3 missing checkpoint file.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError, MissingCheckpointError
from .exporter import export_checkpoint
from .ntc import blob_path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ckpt-export",
        description="Convert a torch checkpoint into an NTC model container.")
    sub = ap.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="export one checkpoint")
    exp.add_argument("--in", dest="in_path", required=True,
                     help="torch checkpoint (saved state_dict)")
    exp.add_argument("--arch", required=True,
                     help='architecture string, e.g. "16-230-5" or '
                          '"8c3-2p-16c3-2p-32c3-512-5"')
    exp.add_argument("--out", dest="out_path", required=True,
                     help="output directory (or explicit .ntc path)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export_checkpoint(args.in_path, args.arch, args.out_path)
    except MissingCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest} and {blob_path(manifest)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
