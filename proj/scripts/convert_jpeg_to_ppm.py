#!/usr/bin/env python3
"""Mirror a <root>/<class>/<image>.jpg tree as binary PPM files.

For builds without libjpeg: the ingester reads PPM/PGM directly.
"""

import argparse
import pathlib
import sys

from PIL import Image

SUFFIXES = {".jpg", ".jpeg", ".png"}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("src", type=pathlib.Path)
    ap.add_argument("dst", type=pathlib.Path)
    args = ap.parse_args(argv)

    if not args.src.is_dir():
        ap.error(f"{args.src} is not a directory")
    converted = failed = 0
    for path in sorted(args.src.rglob("*")):
        if path.suffix.lower() not in SUFFIXES:
            continue
        out = (args.dst / path.relative_to(args.src)).with_suffix(".ppm")
        out.parent.mkdir(parents=True, exist_ok=True)
        try:
            with Image.open(path) as im:
                im.convert("RGB").save(out, format="PPM")
            converted += 1
        except OSError as e:
            print(f"skip {path}: {e}", file=sys.stderr)
            failed += 1
    print(f"{converted} converted, {failed} skipped")
    return 1 if failed and not converted else 0


if __name__ == "__main__":
    sys.exit(main())
