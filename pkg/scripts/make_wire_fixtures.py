#!/usr/bin/env python3
"""Regenerate the shared wire-frame fixtures.

The fixture file holds canonical encodings of a seeded sample of every frame
type.  The Python suite and the browser client's suite both decode and
re-encode each fixture and demand byte equality, which pins the two codecs
to one wire format.
"""

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from gen import random_frame  # noqa: E402

from csi.wire import decode_frame, encode_frame  # noqa: E402


def main() -> None:
    rng = random.Random(20240820)
    encodings = []
    seen = set()
    while len(encodings) < 120:
        encoded = encode_frame(random_frame(rng))
        assert encode_frame(decode_frame(encoded)) == encoded
        if encoded not in seen:
            seen.add(encoded)
            encodings.append(encoded)
    out = ROOT / "tests" / "data" / "wire_fixtures.json"
    out.write_text(
        json.dumps({"frames": encodings}, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {out} ({len(encodings)} frames)")


if __name__ == "__main__":
    main()
