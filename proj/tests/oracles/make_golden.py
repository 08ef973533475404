#!/usr/bin/env python3
"""Writes the golden trace with nothing but the struct and json modules.

    make_golden.py OUT        write the file
    make_golden.py --check F  exit 1 unless F matches what would be written
"""
import json
import struct
import sys

ROWS = [
    [1.0],
    [0.25, 0.75],
    [0.5, 0.25, 0.25],
    [0.125, 0.375, 0.0625, 0.4375],
    [0.03125, 0.5, 0.125, 0.09375, 0.25],
]

HEADER = {
    "model_name": "golden",
    "dataset": "handmade",
    "prompt_id": 3,
    "layer": 1,
    "head": 2,
    "num_steps": len(ROWS),
    "record_kind": "FULL_SCORES",
    "quantile_levels": [],
    "score_precision": "f32",
    "exporter": {"name": "make_golden.py", "revision": 1},
}


def golden_bytes():
    header = json.dumps(HEADER, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = bytearray(b"SIFTTRC1")
    out += struct.pack("<II", 1, len(header))
    out += header
    for step, row in enumerate(ROWS, start=1):
        assert len(row) == step and sum(row) == 1.0
        out += struct.pack("<I", step)
        out += struct.pack("<%df" % step, *row)
    return bytes(out)


def main(argv):
    if len(argv) == 3 and argv[1] == "--check":
        with open(argv[2], "rb") as f:
            found = f.read()
        if found != golden_bytes():
            print("golden trace differs from the python writer", file=sys.stderr)
            return 1
        print("ok: %d bytes" % len(found))
        return 0
    if len(argv) == 2:
        with open(argv[1], "wb") as f:
            f.write(golden_bytes())
        return 0
    print(__doc__, file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main(sys.argv))
