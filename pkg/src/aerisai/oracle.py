"""Noise oracle: decrypt the aggregated noise and broadcast it to authorised clients.

One broadcast per round serves every client: the noise vector is sealed under
a fresh session key and that key is wrapped under a CP-ABE policy, so only
keys whose attributes satisfy the policy can open it.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from . import cpabe, paillier, symwrap
from .cpabe import AccessTree, CpabeCiphertext, CpabePublicParams
from .ledger import ORACLE_SENDER
from .paillier import EncryptedVector, FixedPointCodec, PaillierPrivateKey
from .pairing import PairingGroup, default_group
from .symwrap import SealedNoise

VERSION = 1


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class NoiseBroadcast:
    round: int
    sealed: SealedNoise = field(repr=False)
    wrapped_key: CpabeCiphertext = field(repr=False)
    policy_text: str

    def __post_init__(self):
        if self.sealed.round != self.round:
            raise OracleError("sealed noise is bound to a different round")
        if cpabe.parse_policy(self.policy_text) != self.wrapped_key.policy:
            raise OracleError("policy text does not match the wrapped key")

    def to_bytes(self, group: PairingGroup | None = None) -> bytes:
        group = group or default_group()
        text = self.policy_text.encode()
        wrapped = self.wrapped_key.to_bytes(group)
        return b"".join(
            [
                struct.pack(">BQH", VERSION, self.round, len(text)),
                text,
                struct.pack(">I", len(wrapped)),
                wrapped,
                self.sealed.to_bytes(),
            ]
        )

    @classmethod
    def from_bytes(cls, raw: bytes, group: PairingGroup | None = None) -> "NoiseBroadcast":
        group = group or default_group()
        try:
            version, rnd, tlen = struct.unpack_from(">BQH", raw)
            if version != VERSION:
                raise OracleError(f"unsupported broadcast version {version}")
            off = 11
            text = raw[off : off + tlen].decode()
            off += tlen
            (wlen,) = struct.unpack_from(">I", raw, off)
            off += 4
            wrapped = CpabeCiphertext.from_bytes(raw[off : off + wlen], group)
            sealed = SealedNoise.from_bytes(raw[off + wlen :])
        except (struct.error, UnicodeDecodeError, cpabe.CpabeError, symwrap.SymwrapError) as exc:
            raise OracleError(f"malformed broadcast: {exc}") from exc
        return cls(rnd, sealed, wrapped, text)

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()


def process_noise_request(
    ct_noise: EncryptedVector,
    sk_o: PaillierPrivateKey,
    codec: FixedPointCodec,
    policy: AccessTree | str,
    pk_abe: CpabePublicParams,
    rng,
    round: int,
    divisor: int = 1,
) -> NoiseBroadcast:
    """Decrypt the global noise, seal it under a fresh key, wrap that key under ``policy``.

    ``divisor`` is the contract's combined-scale factor for the noise vector.
    """
    if ct_noise.key_id != sk_o.key_id:
        raise paillier.KeyMismatchError("noise vector is not under the oracle key")
    if isinstance(policy, str):
        policy_text = policy
        tree = cpabe.parse_policy(policy)
    else:
        tree = policy
        policy_text = cpabe.format_policy(policy)
    zeta = paillier.decrypt_vector(sk_o, ct_noise, codec, divisor)
    sek = symwrap.gen_session_key(rng)
    try:
        sealed = symwrap.seal(sek, zeta, round, rng)
        wrapped = cpabe.encrypt(pk_abe, sek.bytes, tree, rng)
    finally:
        sek.wipe()
    return NoiseBroadcast(round, sealed, wrapped, policy_text)


def broadcast_cost_model(n_clients: int, unicast: bool = False) -> int:
    """Messages needed to deliver one round's noise: 1 broadcast, or one per client."""
    if n_clients < 0:
        raise ValueError("negative client count")
    return n_clients if unicast else 1


class Oracle:
    """Holds SK_o and the CP-ABE public parameters; nothing derived from SK_c."""

    def __init__(self, sk_o: PaillierPrivateKey, codec: FixedPointCodec, pk_abe: CpabePublicParams, rng):
        if codec.modulus != sk_o.n:
            raise paillier.KeyMismatchError("codec modulus differs from the oracle key")
        self._sk_o = sk_o
        self.codec = codec
        self.pk_abe = pk_abe
        self._rng = rng
        self.broadcasts: list[bytes] = []

    @property
    def key_id(self) -> str:
        return self._sk_o.key_id

    def serve(self, ledger, policy: AccessTree | str) -> NoiseBroadcast:
        """Read the global noise from the ledger, broadcast it, and anchor its digest on-chain."""
        state = ledger.state
        bc = process_noise_request(state.noise, self._sk_o, self.codec, policy, self.pk_abe, self._rng, state.round, state.divisor)
        blob = bc.to_bytes(self.pk_abe.group)
        digest = ledger.put_artifact(blob)
        ledger.query_noise(ORACLE_SENDER, digest)  # the read, with the broadcast digest attached
        self.broadcasts.append(digest)
        return bc

    def decrypt_raw(self, vec: EncryptedVector, check_key: bool = True) -> list[int]:
        """Raw SK_o decryption; ``check_key=False`` skips the key binding (used by isolation tests)."""
        if check_key:
            return paillier.decrypt_vector_ints(self._sk_o, vec)
        return paillier.decrypt_ints(self._sk_o, vec.values)

