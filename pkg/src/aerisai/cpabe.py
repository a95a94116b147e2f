"""Ciphertext-policy attribute-based encryption over a symmetric pairing.

Access policies are trees of threshold gates with attribute leaves. The
ciphertext blinds a random target-group element M with e(g,g)^(alpha*s);
32-byte key material is carried as ``key XOR SHA-256(M)`` so callers can
wrap any session key, and a short digest of M lets decryption detect a
wrong recovery (for example, mixed components from colluding keys).

Policy grammar::

    expr    := term ("OR" term)*
    term    := factor ("AND" factor)*
    factor  := ATTR | "(" expr ")" | INT "of" "(" expr ("," expr)* ")"
    ATTR    := [a-z0-9:_-]+
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .pairing import CURVES, G1Point, GTElement, PairingGroup, default_group

VERSION = 1
KEY_BYTES = 32
_CHECK_BYTES = 16
_KEY_DST = b"aerisai/cpabe-key"
_CHECK_DST = b"aerisai/cpabe-check"

Path = tuple[int, ...]


class CpabeError(Exception):
    pass


class PolicyError(CpabeError, ValueError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} at position {position}")
        self.position = position


class InvalidAttributesError(CpabeError, ValueError):
    pass


class CpabeDecryptionError(CpabeError):
    pass


class PolicyUnsatisfiedError(CpabeDecryptionError):
    pass


# -- access trees --------------------------------------------------------------

_ATTR_RE = re.compile(r"[a-z0-9:_-]+\Z")


@dataclass(frozen=True)
class PolicyNode:
    threshold: int
    children: tuple["PolicyNode", ...] = ()
    attribute: str | None = None
    index: int = 1

    @property
    def is_leaf(self) -> bool:
        return self.attribute is not None


def leaf(attribute: str, index: int = 1) -> PolicyNode:
    return PolicyNode(1, (), attribute, index)


def gate(threshold: int, children: Iterable[PolicyNode], index: int = 1) -> PolicyNode:
    kids = tuple(PolicyNode(c.threshold, c.children, c.attribute, i) for i, c in enumerate(children, 1))
    return PolicyNode(threshold, kids, None, index)


@dataclass(frozen=True)
class AccessTree:
    root: PolicyNode

    def __post_init__(self):
        _validate(self.root, 1)

    def leaves(self) -> list[tuple[Path, str]]:
        out: list[tuple[Path, str]] = []

        def walk(node: PolicyNode, path: Path) -> None:
            if node.is_leaf:
                out.append((path, node.attribute))
            else:
                for child in node.children:
                    walk(child, path + (child.index,))

        walk(self.root, ())
        return out

    def attributes(self) -> set[str]:
        return {a for _, a in self.leaves()}

    def node_at(self, path: Path) -> PolicyNode:
        node = self.root
        for idx in path:
            node = node.children[idx - 1]
        return node

    def __str__(self) -> str:
        return format_policy(self)


def _validate(node: PolicyNode, expected_index: int) -> None:
    if node.index != expected_index:
        raise PolicyError("child indices must be contiguous from 1")
    if node.is_leaf:
        if node.children or node.threshold != 1:
            raise PolicyError("leaf nodes have threshold 1 and no children")
        if not _ATTR_RE.match(node.attribute):
            raise PolicyError(f"bad attribute {node.attribute!r}")
        return
    if not node.children:
        raise PolicyError("internal node without children")
    if not 1 <= node.threshold <= len(node.children):
        raise PolicyError(f"threshold {node.threshold} out of range 1..{len(node.children)}")
    for i, child in enumerate(node.children, 1):
        _validate(child, i)


_TOKEN_RE = re.compile(r"\s*(?:(?P<lp>\()|(?P<rp>\))|(?P<comma>,)|(?P<word>[A-Za-z0-9:_-]+))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise PolicyError(f"unexpected character {text[pos:].lstrip()[:1]!r}", pos)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "word":
            if value in ("AND", "OR"):
                kind = value
            elif value == "of":
                kind = "of"
            elif not _ATTR_RE.match(value):
                raise PolicyError(f"bad attribute {value!r}", start)
        tokens.append((kind, value, start))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0):
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else ("end", "", len(self.text))

    def take(self, kind: str):
        tok = self.peek()
        if tok[0] != kind:
            raise PolicyError(f"expected {kind}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> PolicyNode:
        if not self.tokens:
            raise PolicyError("empty policy", 0)
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise PolicyError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def expr(self) -> PolicyNode:
        terms = [self.term()]
        while self.peek()[0] == "OR":
            self.i += 1
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else gate(1, terms)

    def term(self) -> PolicyNode:
        factors = [self.factor()]
        while self.peek()[0] == "AND":
            self.i += 1
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else gate(len(factors), factors)

    def factor(self) -> PolicyNode:
        kind, value, pos = self.peek()
        if kind == "lp":
            self.i += 1
            node = self.expr()
            self.take("rp")
            return node
        if kind == "word" and self.peek(1)[0] == "of":
            if not value.isdigit():
                raise PolicyError("threshold must be an integer", pos)
            self.i += 2
            self.take("lp")
            children = [self.expr()]
            while self.peek()[0] == "comma":
                self.i += 1
                children.append(self.expr())
            self.take("rp")
            q = int(value)
            if not 1 <= q <= len(children):
                raise PolicyError(f"threshold {q} out of range 1..{len(children)}", pos)
            return gate(q, children)
        if kind == "word":
            self.i += 1
            return leaf(value)
        raise PolicyError(f"unexpected {value or 'end of input'!r}", pos)


def parse_policy(text: str) -> AccessTree:
    return AccessTree(_Parser(text).parse())


def _format_node(node: PolicyNode, top: bool) -> str:
    if node.is_leaf:
        return node.attribute
    k = len(node.children)
    if k > 1 and node.threshold in (1, k):
        op = " OR " if node.threshold == 1 else " AND "
        body = op.join(_format_node(c, False) for c in node.children)
        return body if top else f"({body})"
    return f"{node.threshold} of (" + ", ".join(_format_node(c, True) for c in node.children) + ")"


def format_policy(tree: AccessTree) -> str:
    return _format_node(tree.root, True)


def _as_tree(policy) -> AccessTree:
    if isinstance(policy, AccessTree):
        return policy
    if isinstance(policy, str):
        return parse_policy(policy)
    if isinstance(policy, PolicyNode):
        return AccessTree(policy)
    raise PolicyError(f"not a policy: {type(policy).__name__}")


def satisfies(policy, attrs: Iterable[str]) -> bool:
    attrs = set(attrs)

    def ok(node: PolicyNode) -> bool:
        if node.is_leaf:
            return node.attribute in attrs
        return sum(ok(c) for c in node.children) >= node.threshold

    return ok(_as_tree(policy).root)


def lagrange_coeff(k: int, index_set: Iterable[int], order: int) -> int:
    """Lagrange basis polynomial for ``k`` over ``index_set``, evaluated at 0."""
    s = list(index_set)
    if len(set(s)) != len(s):
        raise ValueError("indices must be distinct")
    if k not in s:
        raise ValueError(f"{k} not in index set")
    num, den = 1, 1
    for j in s:
        if j != k:
            num = num * (-j) % order
            den = den * (k - j) % order
    return num * pow(den, -1, order) % order


# -- keys and ciphertexts --------------------------------------------------------


@dataclass(frozen=True)
class CpabePublicParams:
    group: PairingGroup = field(repr=False)
    g: G1Point
    Q: G1Point
    egg_alpha: GTElement

    def to_bytes(self) -> bytes:
        grp = self.group
        name = grp.params.name.encode()
        return (
            bytes([VERSION, len(name)]) + name + grp.g1_to_bytes(self.g) + grp.g1_to_bytes(self.Q) + grp.gt_to_bytes(self.egg_alpha)
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CpabePublicParams":
        r = _Reader(raw)
        r.version()
        grp = default_group(r.take(r.u8()).decode())
        return cls(grp, grp.g1_from_bytes(r.take(grp.g1_bytes)), grp.g1_from_bytes(r.take(grp.g1_bytes)), grp.gt_from_bytes(r.take(grp.gt_bytes)))


@dataclass(frozen=True)
class CpabeMasterKey:
    group: PairingGroup = field(repr=False)
    beta: int = field(repr=False)
    g_alpha: G1Point = field(repr=False)


@dataclass(frozen=True)
class CpabeUserKey:
    group: PairingGroup = field(repr=False)
    S: G1Point
    per_attribute: Mapping[str, tuple[G1Point, G1Point]]
    attribute_set: frozenset[str]

    def to_bytes(self) -> bytes:
        grp = self.group
        name = grp.params.name.encode()
        out = [bytes([VERSION, len(name)]), name, grp.g1_to_bytes(self.S), struct.pack(">H", len(self.per_attribute))]
        for attr in sorted(self.per_attribute):
            si, si2 = self.per_attribute[attr]
            a = attr.encode()
            out += [struct.pack(">H", len(a)), a, grp.g1_to_bytes(si), grp.g1_to_bytes(si2)]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CpabeUserKey":
        r = _Reader(raw)
        r.version()
        grp = default_group(r.take(r.u8()).decode())
        S = grp.g1_from_bytes(r.take(grp.g1_bytes))
        per = {}
        for _ in range(r.u16()):
            attr = r.take(r.u16()).decode()
            per[attr] = (grp.g1_from_bytes(r.take(grp.g1_bytes)), grp.g1_from_bytes(r.take(grp.g1_bytes)))
        r.done()
        return cls(grp, S, per, frozenset(per))


@dataclass(frozen=True)
class CpabeCiphertext:
    policy: AccessTree
    C_tilde: GTElement
    C: G1Point
    leaves: Mapping[Path, tuple[G1Point, G1Point]]
    check: bytes
    pad: bytes | None = None

    def to_bytes(self, group: PairingGroup) -> bytes:
        text = format_policy(self.policy).encode()
        out = [
            bytes([VERSION]),
            struct.pack(">I", len(text)),
            text,
            group.gt_to_bytes(self.C_tilde),
            group.g1_to_bytes(self.C),
        ]
        paths = [p for p, _ in self.policy.leaves()]
        out.append(struct.pack(">H", len(paths)))
        for path in paths:
            cf, cf2 = self.leaves[path]
            out += [group.g1_to_bytes(cf), group.g1_to_bytes(cf2)]
        out.append(self.check)
        out.append(b"\x00" if self.pad is None else b"\x01" + self.pad)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes, group: PairingGroup) -> "CpabeCiphertext":
        r = _Reader(raw)
        r.version()
        policy = parse_policy(r.take(r.u32()).decode())
        C_tilde = group.gt_from_bytes(r.take(group.gt_bytes))
        C = group.g1_from_bytes(r.take(group.g1_bytes))
        paths = [p for p, _ in policy.leaves()]
        if r.u16() != len(paths):
            raise CpabeError("leaf count does not match policy")
        leaves = {}
        for path in paths:
            leaves[path] = (group.g1_from_bytes(r.take(group.g1_bytes)), group.g1_from_bytes(r.take(group.g1_bytes)))
        check = r.take(_CHECK_BYTES)
        pad = r.take(KEY_BYTES) if r.u8() else None
        r.done()
        return cls(policy, C_tilde, C, leaves, check, pad)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CpabeError("truncated encoding")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def version(self) -> None:
        if self.u8() != VERSION:
            raise CpabeError("unsupported encoding version")

    def done(self) -> None:
        if self.pos != len(self.raw):
            raise CpabeError("trailing bytes")


# -- algorithms ------------------------------------------------------------------


def cpabe_setup(rng, group: PairingGroup | None = None) -> tuple[CpabePublicParams, CpabeMasterKey]:
    grp = group or default_group()
    alpha = grp.random_scalar(rng)
    beta = grp.random_scalar(rng)
    g_alpha = grp.mul(grp.g, alpha)
    pk = CpabePublicParams(grp, grp.g, grp.mul(grp.g, beta), grp.gt_pow(grp.egg, alpha))
    return pk, CpabeMasterKey(grp, beta, g_alpha)


def _keygen(mk: CpabeMasterKey, attrs: Iterable[str], rng) -> tuple[CpabeUserKey, int]:
    attrs = frozenset(attrs)
    if not attrs:
        raise InvalidAttributesError("attribute set is empty")
    for a in attrs:
        if not isinstance(a, str) or not _ATTR_RE.match(a):
            raise InvalidAttributesError(f"bad attribute {a!r}")
    grp = mk.group
    r = grp.random_scalar(rng)
    g_r = grp.mul(grp.g, r)
    S = grp.mul(grp.add(mk.g_alpha, g_r), pow(mk.beta, -1, grp.order))
    per = {}
    for a in sorted(attrs):
        r_i = grp.random_scalar(rng)
        per[a] = (grp.add(g_r, grp.mul(grp.hash_to_g1(a.encode()), r_i)), grp.mul(grp.g, r_i))
    return CpabeUserKey(grp, S, per, attrs), r


def keygen(mk: CpabeMasterKey, attrs: Iterable[str], rng) -> CpabeUserKey:
    return _keygen(mk, attrs, rng)[0]


def _kdf(group: PairingGroup, M: GTElement) -> tuple[bytes, bytes]:
    raw = group.gt_to_bytes(M)
    key = hashlib.sha256(_KEY_DST + raw).digest()
    check = hashlib.sha256(_CHECK_DST + raw).digest()[:_CHECK_BYTES]
    return key, check


def _encrypt(pk: CpabePublicParams, message, policy, rng) -> tuple[CpabeCiphertext, dict[Path, int]]:
    grp = pk.group
    tree = _as_tree(policy)
    order = grp.order
    if isinstance(message, (bytes, bytearray)):
        if len(message) != KEY_BYTES:
            raise CpabeError(f"key material must be {KEY_BYTES} bytes")
        M = grp.gt_pow(grp.egg, grp.random_scalar(rng))
        key, check = _kdf(grp, M)
        pad = bytes(a ^ b for a, b in zip(message, key))
    else:
        M = tuple(message)
        if not grp.is_gt(M):
            raise CpabeError("message is not a target-group element")
        _, check = _kdf(grp, M)
        pad = None

    s = grp.random_scalar(rng)
    shares: dict[Path, int] = {}

    def share(node: PolicyNode, path: Path, secret: int) -> None:
        shares[path] = secret
        if node.is_leaf:
            return
        coeffs = [secret] + [grp.random_scalar(rng) for _ in range(node.threshold - 1)]
        for child in node.children:
            x = child.index
            val = 0
            for c in reversed(coeffs):
                val = (val * x + c) % order
            share(child, path + (x,), val)

    share(tree.root, (), s)
    leaves = {}
    for path, attr in tree.leaves():
        lf = shares[path]
        leaves[path] = (grp.mul(grp.g, lf), grp.mul(grp.hash_to_g1(attr.encode()), lf))
    ct = CpabeCiphertext(
        policy=tree,
        C_tilde=grp.gt_mul(M, grp.gt_pow(pk.egg_alpha, s)),
        C=grp.mul(pk.Q, s),
        leaves=leaves,
        check=check,
        pad=pad,
    )
    return ct, shares


def encrypt(pk: CpabePublicParams, message, policy, rng) -> CpabeCiphertext:
    """Encrypt 32 bytes of key material (or a GT element) under ``policy``."""
    return _encrypt(pk, message, policy, rng)[0]


def _plan(node: PolicyNode, attrs: frozenset[str]):
    """Children to use at each satisfied node: the q_x smallest satisfiable."""
    if node.is_leaf:
        return () if node.attribute in attrs else None
    chosen = []
    for child in node.children:
        sub = _plan(child, attrs)
        if sub is not None:
            chosen.append((child, sub))
            if len(chosen) == node.threshold:
                return tuple(chosen)
    return None


def _node_value(ct: CpabeCiphertext, uk: CpabeUserKey, node: PolicyNode, path: Path, plan) -> GTElement:
    grp = uk.group
    if node.is_leaf:
        s_j, s_j2 = uk.per_attribute[node.attribute]
        c_f, c_f2 = ct.leaves[path]
        return grp.gt_div(grp.pair(s_j, c_f), grp.pair(s_j2, c_f2))
    indices = [child.index for child, _ in plan]
    out = (1, 0)
    for child, sub in plan:
        d_y = _node_value(ct, uk, child, path + (child.index,), sub)
        out = grp.gt_mul(out, grp.gt_pow(d_y, lagrange_coeff(child.index, indices, grp.order)))
    return out


def node_decrypt(ct: CpabeCiphertext, uk: CpabeUserKey, path: Path = ()) -> GTElement:
    """e(g,g)^(r * l_x(0)) for the node at ``path``; raises if unsatisfied."""
    node = ct.policy.node_at(path)
    plan = _plan(node, uk.attribute_set)
    if plan is None:
        raise PolicyUnsatisfiedError("attributes do not satisfy the policy")
    return _node_value(ct, uk, node, path, plan)


def decrypt_element(ct: CpabeCiphertext, uk: CpabeUserKey) -> GTElement:
    grp = uk.group
    d_root = node_decrypt(ct, uk)
    blind = grp.gt_div(grp.pair(ct.C, uk.S), d_root)  # e(g,g)^(alpha*s)
    M = grp.gt_div(ct.C_tilde, blind)
    if _kdf(grp, M)[1] != ct.check:
        raise CpabeDecryptionError("recovered element fails the integrity check")
    return M


def decrypt(ct: CpabeCiphertext, uk: CpabeUserKey) -> bytes:
    """Recover the 32-byte key material; raises CpabeDecryptionError."""
    if ct.pad is None:
        raise CpabeError("ciphertext carries a group element, use decrypt_element")
    M = decrypt_element(ct, uk)
    key, _ = _kdf(uk.group, M)
    return bytes(a ^ b for a, b in zip(ct.pad, key))


def group_for(name: str) -> PairingGroup:
    if name not in CURVES:
        raise CpabeError(f"unknown curve {name!r}")
    return default_group(name)
