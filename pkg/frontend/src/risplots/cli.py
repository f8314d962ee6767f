"""``plot --spec <file>``: render one figure described by a TOML/JSON spec."""

from __future__ import annotations

import argparse
import sys

from .render import SchemaError, load_spec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render simulation CSV output as figures")
    parser.add_argument("--spec", required=True, help="TOML or JSON plot spec")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        out = render(spec)
    except (SchemaError, FileNotFoundError, KeyError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
