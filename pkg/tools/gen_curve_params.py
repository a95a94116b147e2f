"""Search parameters for the supersingular curve y^2 = x^3 + x over F_p.

Deterministic: prints the first Solinas prime r = 2^a + 2^b + 1 (b descending)
and the first prime p = h*r - 1 with 4 | h and p of the requested size.
Output is pasted into src/aerisai/pairing.py.
"""
import sys

import gmpy2


def solinas(a):
    for b in range(a - 1, 1, -1):
        for sign in (1, -1):
            r = 2**a + sign * 2**b + (1 if sign > 0 else -1)
            if gmpy2.is_prime(r, 64):
                return r, b, sign
    raise RuntimeError("no solinas prime")


def cofactor(r, pbits):
    base = (2 ** (pbits - 1)) // (4 * r) + 1
    k = base
    while True:
        h = 4 * k
        p = h * r - 1
        if p.bit_length() == pbits and gmpy2.is_prime(p, 64):
            return h, p
        k += 1


for name, rbits, pbits in (("ss512", 160, 512), ("ss1536", 256, 1536)):
    r, b, sign = solinas(rbits - 1)
    h, p = cofactor(r, pbits)
    assert p % 4 == 3 and (p + 1) % r == 0 and (p - 1) % r != 0
    print(name, f"r = 2^{rbits-1} {'+' if sign > 0 else '-'} 2^{b} {'+' if sign > 0 else '-'} 1")
    print("  r =", hex(r))
    print("  h =", hex(h))
    print("  p =", hex(p))
    sys.stdout.flush()
