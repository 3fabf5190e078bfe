#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times each hot kernel (forward and backward) on encoder-shaped inputs and
prints a speedup table. Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --rows 8192 --repeats 7 --json out.json
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from mdbench.kernels import pyfallback

try:
    from mdbench.kernels import _ckernels
except ImportError:
    print(
        "compiled extension is not built; install the package first "
        "(pip install -e . --no-build-isolation)",
        file=sys.stderr,
    )
    raise SystemExit(1)


def best_of(fn, repeats: int) -> float:
    """Best wall time over ``repeats`` runs (seconds)."""
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def make_cases(rows: int, hidden: int, batch: int, heads: int, seq: int, seed: int):
    """One input set per kernel, shaped like a desk-config training step."""
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.normal(size=(rows, hidden)))
    gain = rng.normal(1.0, 0.1, size=hidden)
    bias = rng.normal(0.0, 0.1, size=hidden)
    dy = np.ascontiguousarray(rng.normal(size=(rows, hidden)))
    _, mean, rstd = pyfallback.layer_norm(x, gain, bias, 1e-12)

    scores = np.ascontiguousarray(rng.normal(size=(batch, heads * seq, seq)))
    lengths = rng.integers(seq // 2, seq + 1, size=batch)
    key_mask = (np.arange(seq)[None, :] < lengths[:, None]).astype(np.float64)
    probs = pyfallback.masked_softmax(scores, key_mask)
    dprobs = np.ascontiguousarray(rng.normal(size=probs.shape))

    ff = np.ascontiguousarray(rng.normal(size=(rows, 2 * hidden)))
    dff = np.ascontiguousarray(rng.normal(size=ff.shape))

    return {
        "layer_norm": lambda mod: mod.layer_norm(x, gain, bias, 1e-12),
        "layer_norm_backward": lambda mod: mod.layer_norm_backward(dy, x, gain, mean, rstd),
        "masked_softmax": lambda mod: mod.masked_softmax(scores, key_mask),
        "masked_softmax_backward": lambda mod: mod.masked_softmax_backward(dprobs, probs),
        "gelu": lambda mod: mod.gelu(ff),
        "gelu_backward": lambda mod: mod.gelu_backward(dff, ff),
    }


def run(args) -> dict:
    cases = make_cases(args.rows, args.hidden, args.batch, args.heads, args.seq, args.seed)
    results = {}
    for name, call in cases.items():
        call(pyfallback)  # warm caches before timing either side
        call(_ckernels)
        python_s = best_of(lambda: call(pyfallback), args.repeats)
        cython_s = best_of(lambda: call(_ckernels), args.repeats)
        results[name] = {
            "python_ms": 1e3 * python_s,
            "cython_ms": 1e3 * cython_s,
            "speedup": python_s / cython_s,
        }
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=4096,
                        help="flattened batch*seq rows for layer norm and GELU")
    parser.add_argument("--hidden", type=int, default=128)
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--heads", type=int, default=4)
    parser.add_argument("--seq", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write results to this JSON file")
    args = parser.parse_args(argv)

    results = run(args)

    shapes = (
        f"rows={args.rows} hidden={args.hidden} "
        f"attention={args.batch}x{args.heads}x{args.seq}x{args.seq}"
    )
    print(f"kernel benchmark ({shapes}, best of {args.repeats})")
    header = f"{'kernel':<26} {'python ms':>10} {'cython ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, row in results.items():
        print(
            f"{name:<26} {row['python_ms']:>10.3f} {row['cython_ms']:>10.3f} "
            f"{row['speedup']:>7.2f}x"
        )

    if args.json:
        payload = {"config": vars(args) | {"json": None}, "results": results}
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
        print(f"wrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
