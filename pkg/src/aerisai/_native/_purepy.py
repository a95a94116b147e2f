"""Pure-Python kernels. Same surface as the compiled ``_kernels`` module.

Curve arithmetic is for the supersingular curve y^2 = x^3 + x over F_p with
p = 3 (mod 4); F_p^2 = F_p[i]/(i^2 + 1). Points are affine ``(x, y)`` tuples,
``None`` is the point at infinity. Target-group elements are ``(a, b)`` for
a + b*i.
"""

from __future__ import annotations

from typing import Sequence

NAME = "python"

Point = "tuple[int, int] | None"


# -- modular batches (Paillier hot paths) -----------------------------------


def powmod(base: int, exp: int, mod: int) -> int:
    return pow(base, exp, mod)


def powmod_batch(bases: Sequence[int], exp: int, mod: int) -> list[int]:
    return [pow(b, exp, mod) for b in bases]


def mulmod_batch(xs: Sequence[int], ys: Sequence[int], mod: int) -> list[int]:
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    return [x * y % mod for x, y in zip(xs, ys)]


def mulmod_fold(vectors: Sequence[Sequence[int]], mod: int) -> list[int]:
    """Elementwise product of several equal-length vectors."""
    if not vectors:
        raise ValueError("nothing to fold")
    out = list(vectors[0])
    for vec in vectors[1:]:
        if len(vec) != len(out):
            raise ValueError("length mismatch")
        out = [a * b % mod for a, b in zip(out, vec)]
    return out


def paillier_encrypt_batch(ms: Sequence[int], obfuscators: Sequence[int], n: int, n2: int) -> list[int]:
    # (n+1)^m = 1 + m*n (mod n^2)
    if len(ms) != len(obfuscators):
        raise ValueError("length mismatch")
    return [(1 + m * n) % n2 * r % n2 for m, r in zip(ms, obfuscators)]


def paillier_crt_decrypt_batch(
    cs: Sequence[int], p: int, q: int, hp: int, hq: int, q_inv_p: int
) -> list[int]:
    p2, q2 = p * p, q * q
    pm1, qm1 = p - 1, q - 1
    out = []
    for c in cs:
        mp = (pow(c % p2, pm1, p2) - 1) // p * hp % p
        mq = (pow(c % q2, qm1, q2) - 1) // q * hq % q
        out.append(mq + ((mp - mq) * q_inv_p % p) * q)
    return out


class FixedBase:
    """Comb table for ``base ** e mod m`` with ``e < 2**exp_bits``."""

    def __init__(self, base: int, mod: int, exp_bits: int, window: int = 8):
        self.mod = mod
        self.exp_bits = exp_bits
        self.window = window
        self.rows = -(-exp_bits // window)
        width = 1 << window
        table = []
        g = base % mod
        for _ in range(self.rows):
            row = [1] * width
            acc = 1
            for j in range(1, width):
                acc = acc * g % mod
                row[j] = acc
            table.append(row)
            g = acc * g % mod  # g^(2^window)
        self._table = table

    def pow(self, e: int) -> int:
        if e < 0 or e.bit_length() > self.exp_bits:
            raise ValueError("exponent out of table range")
        mask = (1 << self.window) - 1
        mod = self.mod
        acc = 1
        for row in self._table:
            d = e & mask
            if d:
                acc = acc * row[d] % mod
            e >>= self.window
        return acc

    def pow_batch(self, exps: Sequence[int]) -> list[int]:
        return [self.pow(e) for e in exps]


# -- F_p^2 ---------------------------------------------------------------------


def _fp2_mul(a0, a1, b0, b1, p):
    t0 = a0 * b0
    t1 = a1 * b1
    return (t0 - t1) % p, ((a0 + a1) * (b0 + b1) - t0 - t1) % p


def _fp2_sqr(a0, a1, p):
    return (a0 + a1) * (a0 - a1) % p, 2 * a0 * a1 % p


def gt_mul(p: int, x: tuple[int, int], y: tuple[int, int]) -> tuple[int, int]:
    return _fp2_mul(x[0], x[1], y[0], y[1], p)


def gt_pow(p: int, a: int, b: int, k: int) -> tuple[int, int]:
    """Power of a norm-one element of F_p^2 (k >= 0)."""
    if k == 0:
        return 1, 0
    r0, r1 = a % p, b % p
    for bit in bin(k)[3:]:
        # norm one: (x+yi)^2 = (2x^2 - 1) + ((x+y)^2 - 1) i
        r0, r1 = (2 * r0 * r0 - 1) % p, ((r0 + r1) * (r0 + r1) - 1) % p
        if bit == "1":
            r0, r1 = _fp2_mul(r0, r1, a, b, p)
    return r0, r1


# -- G1 ------------------------------------------------------------------------


def _to_affine(X, Y, Z, p):
    if Z == 0:
        return None
    zi = pow(Z, -1, p)
    zi2 = zi * zi % p
    return X * zi2 % p, Y * zi2 * zi % p


def _jac_double(X, Y, Z, p):
    if Z == 0 or Y == 0:
        return 1, 1, 0
    XX = X * X % p
    YY = Y * Y % p
    ZZ = Z * Z % p
    S = 4 * X * YY % p
    M = (3 * XX + ZZ * ZZ) % p
    X3 = (M * M - 2 * S) % p
    Y3 = (M * (S - X3) - 8 * YY * YY) % p
    Z3 = 2 * Y * Z % p
    return X3, Y3, Z3


def _jac_add_affine(X, Y, Z, x2, y2, p):
    if Z == 0:
        return x2, y2, 1
    ZZ = Z * Z % p
    U2 = x2 * ZZ % p
    S2 = y2 * Z * ZZ % p
    H = (U2 - X) % p
    R = (S2 - Y) % p
    if H == 0:
        if R == 0:
            return _jac_double(X, Y, Z, p)
        return 1, 1, 0
    HH = H * H % p
    HHH = H * HH % p
    V = X * HH % p
    X3 = (R * R - HHH - 2 * V) % p
    Y3 = (R * (V - X3) - Y * HHH) % p
    Z3 = Z * H % p
    return X3, Y3, Z3


def g1_mul(p: int, x: int, y: int, k: int):
    if k < 0:
        raise ValueError("negative scalar")
    if k == 0:
        return None
    X, Y, Z = x, y, 1
    for bit in bin(k)[3:]:
        X, Y, Z = _jac_double(X, Y, Z, p)
        if bit == "1":
            X, Y, Z = _jac_add_affine(X, Y, Z, x, y, p)
    return _to_affine(X, Y, Z, p)


def g1_add(p: int, P, Q):
    if P is None:
        return Q
    if Q is None:
        return P
    X, Y, Z = _jac_add_affine(P[0], P[1], 1, Q[0], Q[1], p)
    return _to_affine(X, Y, Z, p)


# -- pairing -----------------------------------------------------------------


def _final_exp(f0, f1, p, cofactor):
    # f^(p-1) = conj(f)^2 / N(f); lands in the norm-one subgroup
    norm_inv = pow((f0 * f0 + f1 * f1) % p, -1, p)
    u0 = (f0 * f0 - f1 * f1) * norm_inv % p
    u1 = -2 * f0 * f1 * norm_inv % p
    return gt_pow(p, u0, u1, cofactor)


def pairing(p: int, r: int, P, Q) -> tuple[int, int]:
    """Reduced Tate pairing e(P, psi(Q)), psi(x, y) = (-x, i*y)."""
    if P is None or Q is None:
        return 1, 0
    xp, yp = P
    xq, yq = Q
    f0, f1 = 1, 0
    X, Y, Z = xp, yp, 1
    bits = bin(r)[3:]
    last = len(bits) - 1
    for idx, bit in enumerate(bits):
        # tangent at T, evaluated at psi(Q), scaled by an F_p factor
        XX = X * X % p
        YY = Y * Y % p
        ZZ = Z * Z % p
        M = (3 * XX + ZZ * ZZ) % p
        Z3 = 2 * Y * Z % p
        l0 = (M * (xq * ZZ + X) - 2 * YY) % p
        l1 = yq * Z3 % p * ZZ % p
        f0, f1 = _fp2_sqr(f0, f1, p)
        f0, f1 = _fp2_mul(f0, f1, l0, l1, p)
        S = 4 * X * YY % p
        X3 = (M * M - 2 * S) % p
        Y = (M * (S - X3) - 8 * YY * YY) % p
        X, Z = X3, Z3
        if bit == "1" and idx != last:
            ZZ = Z * Z % p
            H = (xp * ZZ - X) % p
            R = (yp * Z % p * ZZ - Y) % p
            Z3 = Z * H % p
            l0 = (R * (xq + xp) - yp * Z3) % p
            l1 = yq * Z3 % p
            f0, f1 = _fp2_mul(f0, f1, l0, l1, p)
            HH = H * H % p
            HHH = H * HH % p
            V = X * HH % p
            X3 = (R * R - HHH - 2 * V) % p
            Y = (R * (V - X3) - Y * HHH) % p
            X, Z = X3, Z3
    # the final addition reaches infinity through a vertical line, which the
    # final exponentiation kills
    return _final_exp(f0, f1, p, (p + 1) // r)
