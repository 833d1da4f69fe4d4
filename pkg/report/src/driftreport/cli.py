"""Command line front end.

``driftflow-report MANIFEST OUT_DIR`` renders one run directory.  Exit
codes follow the producer's convention: 0 on a completed render (even
one containing placeholder panels), 2 for usage errors including an
unreadable manifest.
"""

from __future__ import annotations

import argparse
import sys

from .manifest import ReportError
from .render import render


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="driftflow-report",
        description="Render a driftflow run manifest into a static HTML "
                    "summary with one figure or summary panel per report.",
    )
    parser.add_argument("manifest", help="path to a run's manifest.json")
    parser.add_argument("out_dir",
                        help="directory for index.html and the PNG figures")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        result = render(args.manifest, args.out_dir)
    except ReportError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    for panel in result.panels:
        state = "placeholder" if panel.error else (
            "figure" if panel.image else "summary")
        print(f"panel {panel.title}: {state}")
    print(f"panels: {len(result.panels)} "
          f"({result.n_placeholders} placeholder(s)), "
          f"artifacts listed: {result.n_artifacts}")
    print(f"index: {result.index}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
