from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerisai import cpabe
from aerisai.cpabe import (
    AccessTree,
    CpabeCiphertext,
    CpabeDecryptionError,
    CpabePublicParams,
    CpabeUserKey,
    InvalidAttributesError,
    PolicyError,
    PolicyUnsatisfiedError,
    gate,
    leaf,
)
from aerisai.pairing import GT_ONE


def subsets(attrs):
    for k in range(len(attrs) + 1):
        yield from (frozenset(c) for c in itertools.combinations(attrs, k))


@pytest.fixture(scope="module")
def keys_abc(abe):
    _, mk = abe
    rng = random.Random(101)
    return {s: cpabe.keygen(mk, s, rng) for s in subsets("abc") if s}


def try_decrypt(ct, uk):
    try:
        return cpabe.decrypt(ct, uk)
    except CpabeDecryptionError:
        return None


# -- setup and keygen ---------------------------------------------------------


def test_setup_identities(abe, group):
    pk, mk = abe
    assert pk.Q is not None
    assert pk.egg_alpha == group.pair(pk.g, mk.g_alpha)
    assert group.egg != GT_ONE
    assert group.pair(pk.Q, pk.g) == group.gt_pow(group.egg, mk.beta)


def test_keygen_fresh_blinding(abe):
    _, mk = abe
    rng = random.Random(1)
    k1, k2 = cpabe.keygen(mk, {"a"}, rng), cpabe.keygen(mk, {"a"}, rng)
    assert k1.S != k2.S
    assert k1.attribute_set == frozenset({"a"}) == frozenset(k1.per_attribute)


def test_keygen_rejects_bad_attributes(abe):
    _, mk = abe
    with pytest.raises(InvalidAttributesError):
        cpabe.keygen(mk, set(), random.Random(1))
    with pytest.raises(InvalidAttributesError):
        cpabe.keygen(mk, {""}, random.Random(1))
    with pytest.raises(InvalidAttributesError):
        cpabe.keygen(mk, {"Has Space"}, random.Random(1))


# -- policies ----------------------------------------------------------------


def test_parse_examples():
    t = cpabe.parse_policy("role:client")
    assert t.root.is_leaf and t.root.attribute == "role:client"
    t = cpabe.parse_policy("(a AND b) OR c")
    assert t.root.threshold == 1 and len(t.root.children) == 2
    assert t.root.children[0].threshold == 2
    assert [c.attribute for c in t.root.children[0].children] == ["a", "b"]
    assert t.root.children[1].attribute == "c"
    t = cpabe.parse_policy("2 of (a, b, c)")
    assert t.root.threshold == 2 and len(t.root.children) == 3
    assert [c.index for c in t.root.children] == [1, 2, 3]


def test_parse_errors():
    with pytest.raises(PolicyError) as info:
        cpabe.parse_policy("a AND (b OR")
    assert info.value.position is not None
    with pytest.raises(PolicyError):
        cpabe.parse_policy("4 of (a, b, c)")
    with pytest.raises(PolicyError):
        cpabe.parse_policy("0 of (a, b)")
    with pytest.raises(PolicyError):
        cpabe.parse_policy("")
    with pytest.raises(PolicyError):
        cpabe.parse_policy("a b")


def test_tree_invariants():
    with pytest.raises(PolicyError):
        AccessTree(gate(3, [leaf("a"), leaf("b")]))
    with pytest.raises(PolicyError):
        AccessTree(cpabe.PolicyNode(1, (leaf("a", 1), leaf("b", 3))))
    with pytest.raises(PolicyError):
        AccessTree(cpabe.PolicyNode(2, (), "a"))


def random_tree(rng, attrs, max_leaves):
    """Random threshold tree with at most ``max_leaves`` leaves."""

    def build(budget, depth):
        if budget == 1 or depth >= 3 or rng.random() < 0.3:
            return leaf(rng.choice(attrs))
        n_children = rng.randint(2, min(budget, 4))
        split = [1] * n_children
        for _ in range(budget - n_children):
            if rng.random() < 0.5:
                split[rng.randrange(n_children)] += 1
        children = [build(b, depth + 1) for b in split]
        return gate(rng.randint(1, n_children), children)

    return AccessTree(build(rng.randint(1, max_leaves), 0))


def test_format_parse_roundtrip():
    rng = random.Random(3)
    for _ in range(200):
        t = random_tree(rng, list("abcde"), 5)
        assert cpabe.parse_policy(cpabe.format_policy(t)) == t


def test_satisfies_examples():
    assert cpabe.satisfies("a", {"a"})
    assert not cpabe.satisfies("(a AND b)", {"a"})
    got = {s for s in subsets("abc") if cpabe.satisfies("2 of (a, b, c)", s)}
    assert got == {frozenset("ab"), frozenset("ac"), frozenset("bc"), frozenset("abc")}


# -- lagrange ---------------------------------------------------------------


def test_lagrange_examples(group):
    r = group.order
    assert cpabe.lagrange_coeff(1, {1}, r) == 1
    assert cpabe.lagrange_coeff(1, [1, 2], r) == 2
    assert cpabe.lagrange_coeff(2, [1, 2], r) == r - 1
    with pytest.raises(ValueError):
        cpabe.lagrange_coeff(3, [1, 2], r)


@given(st.lists(st.integers(min_value=0, max_value=2**159), min_size=1, max_size=5), st.data())
def test_lagrange_interpolation(coeffs, data):
    r = 0x8000008000000000000000000000000000000001
    t = len(coeffs)
    S = data.draw(st.lists(st.integers(min_value=1, max_value=20), min_size=t, max_size=t, unique=True))

    def f(x):
        return sum(c * x**i for i, c in enumerate(coeffs)) % r

    assert sum(f(k) * cpabe.lagrange_coeff(k, S, r) for k in S) % r == f(0)


# -- encrypt / decrypt ------------------------------------------------------


def test_single_leaf(abe, keys_abc):
    pk, _ = abe
    key = bytes(range(32))
    ct = cpabe.encrypt(pk, key, "a", random.Random(1))
    assert len(ct.leaves) == 1
    assert cpabe.decrypt(ct, keys_abc[frozenset("a")]) == key
    with pytest.raises(PolicyUnsatisfiedError):
        cpabe.decrypt(ct, keys_abc[frozenset("b")])


def test_and_or(abe, keys_abc):
    pk, _ = abe
    key = random.Random(2).randbytes(32)
    ct = cpabe.encrypt(pk, key, "(a AND b) OR c", random.Random(2))
    assert cpabe.decrypt(ct, keys_abc[frozenset("c")]) == key
    assert cpabe.decrypt(ct, keys_abc[frozenset("ab")]) == key
    assert try_decrypt(ct, keys_abc[frozenset("a")]) is None
    ct2 = cpabe.encrypt(pk, key, "a AND b", random.Random(3))
    assert cpabe.decrypt(ct2, keys_abc[frozenset("ab")]) == key


def test_threshold_all_subsets(abe, keys_abc):
    pk, _ = abe
    key = random.Random(4).randbytes(32)
    ct = cpabe.encrypt(pk, key, "2 of (a, b, c)", random.Random(4))
    for s, uk in keys_abc.items():
        expected = cpabe.satisfies(ct.policy, s)
        assert (try_decrypt(ct, uk) == key) is expected, s


def test_random_roundtrips(abe):
    pk, mk = abe
    rng = random.Random(5)
    attrs = list("abcd")
    for _ in range(30):
        tree = random_tree(rng, attrs, 4)
        held = frozenset(rng.sample(attrs, rng.randint(1, 4)))
        uk = cpabe.keygen(mk, held, rng)
        key = rng.randbytes(32)
        ct = cpabe.encrypt(pk, key, tree, rng)
        got = try_decrypt(ct, uk)
        assert (got == key) is cpabe.satisfies(tree, held)
        if got is not None:
            assert got == key


def test_collusion_simple(abe):
    pk, mk = abe
    rng = random.Random(6)
    k1, k2 = cpabe.keygen(mk, {"a"}, rng), cpabe.keygen(mk, {"b"}, rng)
    key = rng.randbytes(32)
    ct = cpabe.encrypt(pk, key, "a AND b", rng)
    for S in (k1.S, k2.S):
        mixed = CpabeUserKey(k1.group, S, {"a": k1.per_attribute["a"], "b": k2.per_attribute["b"]}, frozenset("ab"))
        assert try_decrypt(ct, mixed) is None


def test_node_decryption_algebra(abe, group):
    pk, mk = abe
    rng = random.Random(7)
    uk, r = cpabe._keygen(mk, {"a", "b", "d"}, rng)
    ct, shares = cpabe._encrypt(pk, rng.randbytes(32), "(a AND b) OR (2 of (c, d, a))", rng)
    for path, secret in shares.items():
        node = ct.policy.node_at(path)
        if cpabe.satisfies(AccessTree(cpabe.PolicyNode(node.threshold, node.children, node.attribute, 1)), uk.attribute_set):
            assert cpabe.node_decrypt(ct, uk, path) == group.gt_pow(group.egg, r * secret)
        else:
            with pytest.raises(PolicyUnsatisfiedError):
                cpabe.node_decrypt(ct, uk, path)


def test_group_element_message(abe, keys_abc, group):
    pk, _ = abe
    M = group.gt_pow(group.egg, 4242)
    ct = cpabe.encrypt(pk, M, "a", random.Random(8))
    assert ct.pad is None
    assert cpabe.decrypt_element(ct, keys_abc[frozenset("a")]) == M
    with pytest.raises(cpabe.CpabeError):
        cpabe.decrypt(ct, keys_abc[frozenset("a")])


def test_message_validation(abe):
    pk, _ = abe
    with pytest.raises(cpabe.CpabeError):
        cpabe.encrypt(pk, b"short", "a", random.Random(1))
    with pytest.raises(cpabe.CpabeError):
        cpabe.encrypt(pk, (2, 3), "a", random.Random(1))


def test_tampered_ciphertext_fails(abe, keys_abc):
    pk, _ = abe
    ct = cpabe.encrypt(pk, bytes(32), "a", random.Random(9))
    bad = CpabeCiphertext(ct.policy, pk.group.gt_mul(ct.C_tilde, pk.group.egg), ct.C, ct.leaves, ct.check, ct.pad)
    with pytest.raises(CpabeDecryptionError):
        cpabe.decrypt(bad, keys_abc[frozenset("a")])


# -- serialisation ------------------------------------------------------------


def test_serialisation_roundtrips(abe, keys_abc, group):
    pk, _ = abe
    assert CpabePublicParams.from_bytes(pk.to_bytes()) == pk
    uk = keys_abc[frozenset("abc")]
    assert CpabeUserKey.from_bytes(uk.to_bytes()) == uk
    key = bytes(range(32, 64))
    ct = cpabe.encrypt(pk, key, "2 of (a, b, c)", random.Random(10))
    ct2 = CpabeCiphertext.from_bytes(ct.to_bytes(group), group)
    assert ct2 == ct
    assert cpabe.decrypt(ct2, CpabeUserKey.from_bytes(uk.to_bytes())) == key
    with pytest.raises(cpabe.CpabeError):
        CpabeCiphertext.from_bytes(ct.to_bytes(group)[:-3], group)


@settings(max_examples=15, deadline=None)
@given(st.binary(min_size=32, max_size=32))
def test_roundtrip_property(abe, keys_abc, key):
    pk, _ = abe
    ct = cpabe.encrypt(pk, key, "a OR b", random.Random(key))
    assert cpabe.decrypt(ct, keys_abc[frozenset("b")]) == key
