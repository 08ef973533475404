#!/usr/bin/env python3
"""Checks `siftlab fit` against an independent numpy recomputation.

    fit_oracle.py SIFTLAB_BINARY WORK_DIR

Generates a few traces with the binary, parses them here with struct,
recomputes every fit and the R^2 summary, and compares with the JSON report.
"""
import json
import os
import struct
import subprocess
import sys

import numpy as np

TAUS = [0.5, 0.75, 0.875]
WARMUPS = [16, 64, 128, 256]
TOL = 1e-8


def read_trace(path):
    with open(path, "rb") as f:
        data = f.read()
    assert data[:8] == b"SIFTTRC1", path
    version, hlen = struct.unpack_from("<II", data, 8)
    assert version == 1
    header = json.loads(data[16:16 + hlen])
    pos = 16 + hlen
    records = []
    for step in range(1, header["num_steps"] + 1):
        if header["record_kind"] == "FULL_SCORES":
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
        else:
            n = len(header["quantile_levels"])
        records.append(np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(np.float64))
        pos += 4 * n
    assert pos == len(data)
    return header, records


def series_for(header, records, tau):
    if header["record_kind"] == "FULL_SCORES":
        return np.array([np.quantile(r, tau, method="linear") for r in records])
    levels = header["quantile_levels"]
    hits = [i for i, q in enumerate(levels) if abs(q - tau) <= 1e-9]
    if not hits:
        return None
    return np.array([r[hits[0]] for r in records])


def fit(series, first, last):
    steps = np.arange(first, last + 1, dtype=np.float64)
    ys = np.log(np.maximum(series[first - 1:last], 1e-12))
    slope, intercept = np.polyfit(np.log(steps), ys, 1)
    return np.exp(intercept), -slope


def r2(series, alpha, beta, first, last):
    steps = np.arange(first, last + 1, dtype=np.float64)
    ys = np.log(np.maximum(series[first - 1:last], 1e-12))
    pred = np.log(alpha) - beta * np.log(steps)
    return 1.0 - np.sum((ys - pred) ** 2) / np.sum((ys - ys.mean()) ** 2)


def close(a, b, what):
    if a is None or b is None or abs(a - b) > TOL * max(1.0, abs(b)):
        raise AssertionError("%s: report %r, oracle %r" % (what, a, b))


def check(binary, work, traces, skip):
    out = os.path.join(work, "fit_skip%d.json" % skip)
    cmd = [binary, "fit", "--out", out, "--fit-skip", str(skip), "--taus", ",".join(map(str, TAUS)),
           "--warmups", ",".join(map(str, WARMUPS))]
    for t in traces:
        cmd += ["--trace", t]
    subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL)
    with open(out) as f:
        report = json.load(f)

    pooled = {}
    checked = 0
    for path, entry in zip(traces, report["traces"]):
        header, records = read_trace(path)
        n = len(records)
        fits = {(e["tau"], e["warmup"]): e for e in entry["fits"]}
        for tau in TAUS:
            s = series_for(header, records, tau)
            if s is None:
                assert not any(k[0] == tau for k in fits), path
                continue
            first = 1 + skip
            for w in [None] + WARMUPS:
                last = n if w is None else w
                if w is not None and not (first + 1 <= w < n):
                    assert (tau, w) not in fits
                    continue
                alpha, beta = fit(s, first, last)
                eval_first = first if w is None else 1
                expect = r2(s, alpha, beta, eval_first, n)
                got = fits[(tau, w)]
                where = "%s tau=%g w=%s" % (os.path.basename(path), tau, w)
                close(got["alpha"], alpha, where + " alpha")
                close(got["beta"], beta, where + " beta")
                close(got["r2"], expect, where + " r2")
                assert got["fit_first"] == first and got["fit_last"] == last, where
                assert got["n_points"] == n - eval_first + 1, where
                pooled.setdefault((tau, w), []).append(expect)
                checked += 1

    for s in report["summary"]:
        values = pooled.get((s["tau"], s["warmup"]), [])
        assert s["count"] == len(values), s
        if not values:
            continue
        for key, p in (("median", 50), ("p5", 5), ("p25", 25), ("p75", 75), ("p95", 95)):
            close(s[key], float(np.percentile(values, p, method="linear")),
                  "summary tau=%g w=%s %s" % (s["tau"], s["warmup"], key))
    return checked


def main(argv):
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    binary, work = argv[1], argv[2]
    os.makedirs(work, exist_ok=True)
    traces = []

    def gen(name, *flags):
        path = os.path.join(work, name)
        subprocess.run([binary, "gen-trace", "--out", path, *flags], check=True, stdout=subprocess.DEVNULL)
        traces.append(path)

    for seed in range(1, 7):
        gen("scores%d.trc" % seed, "--kind", "scores", "--steps", "400", "--seed", str(seed),
            "--concentration", str(0.5 + 0.5 * seed))
    gen("matched.trc", "--kind", "matched", "--tau", "0.75", "--beta", "1.2", "--steps", "400", "--seed", "3")
    gen("series.trc", "--kind", "powerlaw", "--tau", "0.875", "--alpha", "0.8", "--beta", "0.9",
        "--noise", "0.2", "--steps", "300", "--seed", "5")

    checked = sum(check(binary, work, traces, skip) for skip in (0, 3))
    print("ok: %d fits and their summaries match the numpy oracle" % checked)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
