"""Compare the compiled kernels with the pure-Python fallback.

Usage:
    python benchmarks/bench_kernels.py [--key-bits 1024] [--count 200] [--repeat 3]

Each row times one kernel on identical inputs under both backends and
checks that the outputs agree before reporting the speedup.
"""

from __future__ import annotations

import argparse
import random
import time

from aerisai import paillier
from aerisai._native import available_backends, load_backend
from aerisai.pairing import SS512, PairingGroup


def _best(fn, repeat: int) -> tuple[float, object]:
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def build_cases(key_bits: int, count: int, seed: int):
    rng = random.Random(seed)
    pk, sk = paillier.paillier_setup(key_bits, rng)
    n, n2 = pk.n, pk.n_squared
    ms = [rng.randrange(n) for _ in range(count)]
    rhos = [rng.randrange(1, n) for _ in range(count)]
    exps = [rng.getrandbits(pk.obf_exp_bits) for _ in range(count)]
    obfs = [pow(r, n, n2) for r in rhos]
    cts = [(1 + m * n) * o % n2 for m, o in zip(ms, obfs)]
    crt = sk._crt

    groups = {name: PairingGroup(SS512, load_backend(name)) for name in available_backends()}
    g = next(iter(groups.values())).g
    scalars = [rng.randrange(1, SS512.r) for _ in range(max(count // 20, 4))]

    def cases(k, group):
        fb = k.FixedBase(pk.obf_base, n2, pk.obf_exp_bits)
        egg = group.egg
        return {
            "powmod_batch (rho^n)": lambda: k.powmod_batch(rhos, n, n2),
            "fixed-base comb": lambda: fb.pow_batch(exps),
            "paillier encrypt": lambda: k.paillier_encrypt_batch(ms, obfs, n, n2),
            "paillier CRT decrypt": lambda: k.paillier_crt_decrypt_batch(cts, *crt),
            "mulmod_fold (5 vectors)": lambda: k.mulmod_fold([cts] * 5, n2),
            "g1_mul": lambda: [group.mul(g, s) for s in scalars],
            "gt_pow": lambda: [group.gt_pow(egg, s) for s in scalars],
            "pairing": lambda: [group.pair(g, group.mul(g, s)) for s in scalars[:4]],
        }

    return {name: cases(load_backend(name), grp) for name, grp in groups.items()}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--key-bits", type=int, default=1024, choices=paillier.KEY_SIZES)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    per_backend = build_cases(args.key_bits, args.count, args.seed)
    backends = list(per_backend)
    print(f"backends: {', '.join(backends)}; key_bits={args.key_bits}, count={args.count}")
    header = f"{'kernel':<26}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for kernel in per_backend[backends[0]]:
        times, outputs = [], []
        for b in backends:
            t, out = _best(per_backend[b][kernel], args.repeat)
            times.append(t)
            outputs.append(out)
        if any(o != outputs[0] for o in outputs[1:]):
            raise SystemExit(f"backend outputs disagree for {kernel}")
        line = f"{kernel:<26}" + "".join(f"{t * 1e3:>14.2f}" for t in times)
        if len(backends) > 1:
            line += f"{times[1] / times[0]:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
