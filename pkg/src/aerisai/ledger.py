"""In-process consortium ledger and the aggregation contract.

The contract holds the encrypted global model (under the clients' shared
Paillier key) and the encrypted global noise (under the oracle key). Each
round every roster member uploads one gradient vector and one noise vector;
``aggregate`` folds them homomorphically, scales the sums by the mean scalar
Q and adds them into the global state. The contract never holds a private key.

State transitions are pure functions of the transaction sequence, so any
chain can be replayed from genesis and checked block by block.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import struct
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import paillier
from .paillier import EncryptedVector, FixedPointCodec, PaillierPublicKey

MAX_TX_BYTES = 100 * 2**20
MEAN_BITS = 16
CONTRACT_SENDER = "contract"
ORACLE_SENDER = "oracle"
ZERO_HASH = bytes(32)

_TX_MAGIC = b"ATX\x01"
_BLOCK_MAGIC = b"ABK\x01"


class LedgerError(Exception):
    pass


class TxTooLargeError(LedgerError):
    pass


class DuplicateUploadError(LedgerError):
    pass


class KeyMismatchError(LedgerError):
    pass


class UnauthorizedError(LedgerError):
    pass


class NotReadyError(LedgerError):
    pass


class RoundMismatchError(LedgerError):
    pass


class PayloadError(LedgerError):
    pass


class AuditError(LedgerError):
    """Replay diverged from the recorded chain."""

    def __init__(self, height: int, reason: str):
        super().__init__(f"audit failed at height {height}: {reason}")
        self.height = height
        self.reason = reason


class TxKind(enum.IntEnum):
    GENESIS = 0
    UPLOAD_GRADIENT = 1
    UPLOAD_NOISE = 2
    AGGREGATE = 3
    QUERY_MODEL = 4
    QUERY_NOISE = 5


def mean_scalar(n_clients: int) -> int:
    """Q = round(2^16 / N)."""
    if n_clients < 1:
        raise ValueError("roster must be nonempty")
    return (2 * 2**MEAN_BITS + n_clients) // (2 * n_clients)


# -- transactions ------------------------------------------------------------------


@dataclass(frozen=True)
class Transaction:
    round: int
    kind: TxKind
    sender: str
    payload: bytes = field(repr=False)

    @property
    def size_bytes(self) -> int:
        return len(self.payload)

    def canonical(self) -> bytes:
        s = self.sender.encode()
        return (
            _TX_MAGIC
            + struct.pack(">QBH", self.round, int(self.kind), len(s))
            + s
            + struct.pack(">Q", len(self.payload))
            + self.payload
        )

    @property
    def tx_id(self) -> bytes:
        return hashlib.sha256(self.canonical()).digest()

    @classmethod
    def from_canonical(cls, raw: bytes) -> "Transaction":
        if raw[:4] != _TX_MAGIC:
            raise PayloadError("bad transaction magic")
        rnd, kind, slen = struct.unpack_from(">QBH", raw, 4)
        off = 4 + 11
        sender = raw[off : off + slen].decode()
        off += slen
        (plen,) = struct.unpack_from(">Q", raw, off)
        off += 8
        payload = raw[off:]
        if len(payload) != plen:
            raise PayloadError("transaction payload length mismatch")
        try:
            kind = TxKind(kind)
        except ValueError as exc:
            raise PayloadError(f"unknown transaction kind {kind}") from exc
        return cls(rnd, kind, sender, payload)


@dataclass(frozen=True)
class Receipt:
    tx_id: bytes
    round: int
    kind: TxKind
    sender: str
    size_bytes: int


# -- contract state ------------------------------------------------------------------


def _freeze(d: Mapping) -> Mapping:
    return MappingProxyType(dict(d))


@dataclass(frozen=True)
class ContractState:
    round: int
    model: EncryptedVector = field(repr=False)
    noise: EncryptedVector = field(repr=False)
    roster: tuple[str, ...]
    Q: int
    ppk_c: PaillierPublicKey = field(repr=False)
    ppk_o: PaillierPublicKey = field(repr=False)
    scale: int = paillier.DEFAULT_SCALE
    scaled: bool = False
    pending_gradients: Mapping[str, EncryptedVector] = field(default_factory=dict, repr=False)
    pending_noise: Mapping[str, EncryptedVector] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pending_gradients", _freeze(self.pending_gradients))
        object.__setattr__(self, "pending_noise", _freeze(self.pending_noise))

    @property
    def model_dim(self) -> int:
        return len(self.model)

    @property
    def divisor(self) -> int:
        """Extra factor carried by the global vectors once the first aggregate has run."""
        return self.Q * len(self.roster) if self.scaled else 1

    @property
    def ready(self) -> bool:
        full = set(self.roster)
        return set(self.pending_gradients) == full and set(self.pending_noise) == full

    def state_hash(self) -> bytes:
        h = hashlib.sha256()
        h.update(b"aerisai/state\x01")
        h.update(struct.pack(">QQQ?", self.round, self.Q, self.scale, self.scaled))
        for cid in self.roster:
            h.update(struct.pack(">H", len(cid)) + cid.encode())
        for pk in (self.ppk_c, self.ppk_o):
            h.update(bytes.fromhex(pk.key_id))
        h.update(_vec_bytes(self.model, self.ppk_c))
        h.update(_vec_bytes(self.noise, self.ppk_o))
        for label, pending, pk in ((b"G", self.pending_gradients, self.ppk_c), (b"N", self.pending_noise, self.ppk_o)):
            for cid in sorted(pending):
                h.update(label + cid.encode() + hashlib.sha256(_vec_bytes(pending[cid], pk)).digest())
        return h.digest()


def _vec_bytes(vec: EncryptedVector, pk: PaillierPublicKey) -> bytes:
    return vec.to_bytes(pk.ciphertext_bytes)


# -- genesis payload -------------------------------------------------------------------


def _pack_blob(b: bytes) -> bytes:
    return struct.pack(">Q", len(b)) + b


def _unpack_blobs(raw: bytes) -> list[bytes]:
    out, off = [], 0
    while off < len(raw):
        if off + 8 > len(raw):
            raise PayloadError("truncated blob")
        (n,) = struct.unpack_from(">Q", raw, off)
        off += 8
        if off + n > len(raw):
            raise PayloadError("truncated blob")
        out.append(raw[off : off + n])
        off += n
    return out


def _genesis_payload(state: ContractState) -> bytes:
    header = {
        "roster": list(state.roster),
        "Q": state.Q,
        "scale": state.scale,
        "ppk_c": state.ppk_c.to_dict(),
        "ppk_o": state.ppk_o.to_dict(),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return _pack_blob(head) + _pack_blob(_vec_bytes(state.model, state.ppk_c)) + _pack_blob(_vec_bytes(state.noise, state.ppk_o))


def state_from_genesis(tx: Transaction) -> ContractState:
    if tx.kind != TxKind.GENESIS:
        raise PayloadError("first transaction is not a genesis")
    try:
        head, model_raw, noise_raw = _unpack_blobs(tx.payload)
        header = json.loads(head)
        ppk_c = PaillierPublicKey.from_dict(header["ppk_c"])
        ppk_o = PaillierPublicKey.from_dict(header["ppk_o"])
        model = EncryptedVector.from_bytes(model_raw)
        noise = EncryptedVector.from_bytes(noise_raw)
    except (ValueError, KeyError, paillier.PaillierError) as exc:
        raise PayloadError(f"bad genesis payload: {exc}") from exc
    if model.key_id != ppk_c.key_id or noise.key_id != ppk_o.key_id:
        raise PayloadError("genesis vectors under the wrong keys")
    return ContractState(0, model, noise, tuple(header["roster"]), int(header["Q"]), ppk_c, ppk_o, int(header["scale"]))


def genesis(
    init_params,
    roster: Sequence[str],
    ppk_c: PaillierPublicKey,
    ppk_o: PaillierPublicKey,
    codec: FixedPointCodec,
    rng,
) -> tuple[ContractState, Transaction]:
    """Initial state: Enc_c(theta_0), Enc_o(0), t = 0, Q = round(2^16/N).

    ``init_params`` is either the parameter vector or an integer dimension,
    in which case the initial model is drawn uniformly from [-0.1, 0.1).
    """
    roster = tuple(roster)
    if not roster:
        raise LedgerError("roster must be nonempty")
    if len(set(roster)) != len(roster) or CONTRACT_SENDER in roster or ORACLE_SENDER in roster:
        raise LedgerError("roster ids must be unique and not reserved")
    if isinstance(init_params, (int, np.integer)):
        dim = int(init_params)
        if dim < 1:
            raise LedgerError("model dimension must be positive")
        theta0 = np.array([(rng.getrandbits(53) / 2**53 - 0.5) * 0.2 for _ in range(dim)])
    else:
        theta0 = np.asarray(init_params, dtype=np.float64).ravel()
        if theta0.size == 0:
            raise LedgerError("model dimension must be positive")
    model = paillier.encrypt_vector(ppk_c, theta0, codec, rng)
    noise = paillier.encrypt_ints(ppk_o, [0] * theta0.size, rng)
    state = ContractState(0, model, noise, roster, mean_scalar(len(roster)), ppk_c, ppk_o, codec.scale)
    tx = Transaction(0, TxKind.GENESIS, CONTRACT_SENDER, _genesis_payload(state))
    return state, tx


# -- transitions -------------------------------------------------------------------------


def check_size(tx: Transaction, max_tx_bytes: int = MAX_TX_BYTES) -> None:
    if tx.size_bytes > max_tx_bytes:
        raise TxTooLargeError(f"payload of {tx.size_bytes} bytes exceeds limit {max_tx_bytes}")


def _apply_upload(state: ContractState, tx: Transaction) -> ContractState:
    if tx.sender not in state.roster:
        raise UnauthorizedError(f"{tx.sender!r} is not in the roster")
    if tx.round != state.round:
        raise RoundMismatchError(f"upload for round {tx.round}, contract is at {state.round}")
    grad = tx.kind == TxKind.UPLOAD_GRADIENT
    pending = state.pending_gradients if grad else state.pending_noise
    if tx.sender in pending:
        raise DuplicateUploadError(f"{tx.sender} already uploaded {'gradients' if grad else 'noise'} in round {state.round}")
    try:
        vec = EncryptedVector.from_bytes(tx.payload)
    except paillier.PaillierError as exc:
        raise PayloadError(str(exc)) from exc
    pk = state.ppk_c if grad else state.ppk_o
    if vec.key_id != pk.key_id:
        raise KeyMismatchError(f"{'gradient' if grad else 'noise'} upload under key {vec.key_id}, expected {pk.key_id}")
    if len(vec) != state.model_dim:
        raise PayloadError(f"vector of length {len(vec)}, model has {state.model_dim}")
    n2 = pk.n_squared
    if any(not 0 < c < n2 for c in vec.values):
        raise PayloadError("ciphertext outside (0, n^2)")
    new = dict(pending)
    new[tx.sender] = vec
    if grad:
        return replace(state, pending_gradients=new)
    return replace(state, pending_noise=new)


def _fold_mean(pk: PaillierPublicKey, current: EncryptedVector, uploads: Iterable[EncryptedVector], Q: int, rescale: int) -> EncryptedVector:
    if rescale != 1:
        current = paillier.scalar_mul_vector(pk, current, rescale)
    total = paillier.add_vectors(pk, list(uploads))
    mean = paillier.scalar_mul_vector(pk, total, Q)
    return paillier.add_vectors(pk, [current, mean])


def _apply_aggregate(state: ContractState) -> ContractState:
    if not state.ready:
        missing = sorted((set(state.roster) - set(state.pending_gradients)) | (set(state.roster) - set(state.pending_noise)))
        raise NotReadyError(f"waiting for uploads from {missing}")
    # first aggregate lifts both global vectors to the combined scale
    rescale = 1 if state.scaled else state.Q * len(state.roster)
    order = state.roster
    model = _fold_mean(state.ppk_c, state.model, [state.pending_gradients[c] for c in order], state.Q, rescale)
    noise = _fold_mean(state.ppk_o, state.noise, [state.pending_noise[c] for c in order], state.Q, rescale)
    return replace(state, round=state.round + 1, model=model, noise=noise, scaled=True, pending_gradients={}, pending_noise={})


def apply_tx(state: ContractState | None, tx: Transaction, max_tx_bytes: int = MAX_TX_BYTES) -> ContractState:
    """Pure transition function of the contract."""
    check_size(tx, max_tx_bytes)
    if tx.kind == TxKind.GENESIS:
        if state is not None:
            raise LedgerError("genesis after start")
        return state_from_genesis(tx)
    if state is None:
        raise LedgerError("chain does not start with genesis")
    if tx.kind in (TxKind.UPLOAD_GRADIENT, TxKind.UPLOAD_NOISE):
        return _apply_upload(state, tx)
    if tx.kind == TxKind.AGGREGATE:
        if tx.sender != CONTRACT_SENDER or tx.round != state.round:
            raise PayloadError("malformed aggregate transaction")
        return _apply_aggregate(state)
    # queries are read-only; they only need to come from a known party
    if tx.sender not in state.roster and tx.sender != ORACLE_SENDER:
        raise UnauthorizedError(f"{tx.sender!r} may not query")
    return state


# -- blocks ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    txs: tuple[Transaction, ...] = field(repr=False)
    state_hash: bytes
    tx_ids: tuple[bytes, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not self.tx_ids:
            object.__setattr__(self, "tx_ids", tuple(tx.tx_id for tx in self.txs))

    @property
    def block_hash(self) -> bytes:
        h = hashlib.sha256(b"aerisai/block\x01")
        h.update(struct.pack(">Q", self.height) + self.prev_hash + self.state_hash)
        for tid in self.tx_ids:
            h.update(tid)
        return h.digest()

    def to_bytes(self) -> bytes:
        out = [_BLOCK_MAGIC, struct.pack(">Q", self.height), self.prev_hash, self.state_hash, struct.pack(">I", len(self.txs))]
        for tid, tx in zip(self.tx_ids, self.txs):
            raw = tx.canonical()
            out += [tid, struct.pack(">Q", len(raw)), raw]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Block":
        if raw[:4] != _BLOCK_MAGIC:
            raise PayloadError("bad block magic")
        (height,) = struct.unpack_from(">Q", raw, 4)
        prev_hash, state_hash = raw[12:44], raw[44:76]
        (count,) = struct.unpack_from(">I", raw, 76)
        off = 80
        txs, ids = [], []
        for _ in range(count):
            tid = raw[off : off + 32]
            (n,) = struct.unpack_from(">Q", raw, off + 32)
            off += 40
            txs.append(Transaction.from_canonical(raw[off : off + n]))
            ids.append(tid)
            off += n
        if off != len(raw):
            raise PayloadError("trailing bytes in block")
        return cls(height, prev_hash, tuple(txs), state_hash, tuple(ids))


# -- the sequencer ------------------------------------------------------------------------


class Ledger:
    """Single-writer sequencer: applies transactions in arrival order, one block per round."""

    def __init__(self, state: ContractState, genesis_tx: Transaction, max_tx_bytes: int = MAX_TX_BYTES):
        self.max_tx_bytes = max_tx_bytes
        self._lock = threading.RLock()
        self._state = state
        self._chain: list[Block] = [Block(0, ZERO_HASH, (genesis_tx,), state.state_hash())]
        self._open: list[Transaction] = []
        self.artifacts: dict[bytes, bytes] = {}
        self.bytes_on_ledger = genesis_tx.size_bytes

    @classmethod
    def create(cls, init_params, roster, ppk_c, ppk_o, codec, rng, max_tx_bytes: int = MAX_TX_BYTES) -> "Ledger":
        state, tx = genesis(init_params, roster, ppk_c, ppk_o, codec, rng)
        return cls(state, tx, max_tx_bytes)

    # snapshot reads
    @property
    def state(self) -> ContractState:
        with self._lock:
            return self._state

    @property
    def chain(self) -> list[Block]:
        with self._lock:
            return list(self._chain)

    @property
    def height(self) -> int:
        return len(self._chain) - 1

    @property
    def pending_txs(self) -> list[Transaction]:
        with self._lock:
            return list(self._open)

    def submit(self, tx: Transaction) -> Receipt:
        with self._lock:
            self._state = apply_tx(self._state, tx, self.max_tx_bytes)
            self._open.append(tx)
            self.bytes_on_ledger += tx.size_bytes
            return Receipt(tx.tx_id, tx.round, tx.kind, tx.sender, tx.size_bytes)

    def upload(self, sender: str, kind: TxKind, vec: EncryptedVector) -> Receipt:
        with self._lock:
            st = self._state
            pk = st.ppk_c if kind == TxKind.UPLOAD_GRADIENT else st.ppk_o
            # widen if needed so a vector under a larger foreign key still reaches the key check
            widest = max((v.bit_length() for v in vec.values), default=0)
            width = max(pk.ciphertext_bytes, -(-widest // 8))
            return self.submit(Transaction(st.round, kind, sender, vec.to_bytes(width)))

    def aggregate(self) -> Receipt:
        with self._lock:
            return self.submit(Transaction(self._state.round, TxKind.AGGREGATE, CONTRACT_SENDER, b""))

    def query_model(self, sender: str) -> EncryptedVector:
        with self._lock:
            self.submit(Transaction(self._state.round, TxKind.QUERY_MODEL, sender, b""))
            return self._state.model

    def query_noise(self, sender: str, response_digest: bytes = b"") -> EncryptedVector:
        """Read the encrypted noise; the oracle records the digest of its broadcast here."""
        with self._lock:
            self.submit(Transaction(self._state.round, TxKind.QUERY_NOISE, sender, response_digest))
            return self._state.noise

    def put_artifact(self, blob: bytes) -> bytes:
        digest = hashlib.sha256(blob).digest()
        with self._lock:
            self.artifacts[digest] = bytes(blob)
        return digest

    def get_artifact(self, digest: bytes) -> bytes:
        blob = self.artifacts[digest]
        if hashlib.sha256(blob).digest() != digest:
            raise AuditError(self.height, "off-chain artifact does not match its digest")
        return blob

    def seal_block(self) -> Block:
        with self._lock:
            prev = self._chain[-1]
            block = Block(prev.height + 1, prev.block_hash, tuple(self._open), self._state.state_hash())
            self._chain.append(block)
            self._open = []
            return block

    # persistence
    def persist(self, directory: str | os.PathLike) -> Path:
        with self._lock:
            return save_chain(self._chain, directory, self.artifacts)


def save_chain(chain: Sequence[Block], directory: str | os.PathLike, artifacts: Mapping[bytes, bytes] | None = None) -> Path:
    """Write ``blocks/NNNNNN.blk`` (length-prefixed), ``artifacts/`` and ``manifest.json``."""
    root = Path(directory)
    (root / "blocks").mkdir(parents=True, exist_ok=True)
    for block in chain:
        raw = block.to_bytes()
        (root / "blocks" / f"{block.height:06d}.blk").write_bytes(struct.pack(">Q", len(raw)) + raw)
    if artifacts:
        (root / "artifacts").mkdir(exist_ok=True)
        for digest, blob in artifacts.items():
            (root / "artifacts" / f"{digest.hex()}.bin").write_bytes(blob)
    manifest = {
        "height": chain[-1].height,
        "state_hash": chain[-1].state_hash.hex(),
        "head": chain[-1].block_hash.hex(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return root


def load_chain(directory: str | os.PathLike) -> list[Block]:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    chain = []
    for h in range(manifest["height"] + 1):
        path = root / "blocks" / f"{h:06d}.blk"
        if not path.exists():
            raise AuditError(h, "block file missing")
        raw = path.read_bytes()
        if len(raw) < 8 or struct.unpack(">Q", raw[:8])[0] != len(raw) - 8:
            raise AuditError(h, "block file length prefix mismatch")
        try:
            chain.append(Block.from_bytes(raw[8:]))
        except (PayloadError, struct.error, UnicodeDecodeError) as exc:
            raise AuditError(h, f"unparseable block: {exc}") from exc
    if chain and chain[-1].state_hash.hex() != manifest["state_hash"]:
        raise AuditError(chain[-1].height, "manifest state_hash differs from head block")
    return chain


def load_artifacts(directory: str | os.PathLike) -> dict[bytes, bytes]:
    root = Path(directory) / "artifacts"
    if not root.exists():
        return {}
    return {bytes.fromhex(p.stem): p.read_bytes() for p in sorted(root.glob("*.bin"))}


def audit_replay(chain: Sequence[Block], max_tx_bytes: int = MAX_TX_BYTES) -> ContractState:
    """Re-apply every transaction from genesis; raise AuditError at the first bad block."""
    if not chain:
        raise AuditError(0, "empty chain")
    state: ContractState | None = None
    prev_hash = ZERO_HASH
    for expected_height, block in enumerate(chain):
        h = block.height
        if h != expected_height:
            raise AuditError(expected_height, f"unexpected height {h}")
        if block.prev_hash != prev_hash:
            raise AuditError(h, "prev_hash does not match the previous block")
        if h == 0 and (len(block.txs) != 1 or block.txs[0].kind != TxKind.GENESIS):
            raise AuditError(0, "genesis block must hold exactly the genesis transaction")
        for tid, tx in zip(block.tx_ids, block.txs):
            if tx.tx_id != tid:
                raise AuditError(h, f"transaction {tid.hex()[:16]} does not match its id")
            if h and tx.kind == TxKind.GENESIS:
                raise AuditError(h, "genesis transaction after height 0")
            try:
                state = apply_tx(state, tx, max_tx_bytes)
            except LedgerError as exc:
                raise AuditError(h, f"transaction rejected on replay: {exc}") from exc
        if len(block.tx_ids) != len(block.txs):
            raise AuditError(h, "transaction id count mismatch")
        if state.state_hash() != block.state_hash:
            raise AuditError(h, "state_hash differs from replay")
        prev_hash = block.block_hash
    return state


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    height: int
    state_hash: str
    message: str


def audit_directory(directory: str | os.PathLike) -> AuditReport:
    try:
        chain = load_chain(directory)
        state = audit_replay(chain)
    except AuditError as exc:
        return AuditReport(False, exc.height, "", exc.reason)
    except (OSError, ValueError, KeyError) as exc:
        return AuditReport(False, -1, "", f"could not read chain: {exc}")
    artifacts = load_artifacts(directory)
    for block in chain:
        for tx in block.txs:
            if tx.kind == TxKind.QUERY_NOISE and len(tx.payload) == 32:
                blob = artifacts.get(tx.payload)
                if blob is None or hashlib.sha256(blob).digest() != tx.payload:
                    return AuditReport(False, block.height, "", "off-chain broadcast missing or altered")
    return AuditReport(True, chain[-1].height, state.state_hash().hex(), f"replayed {len(chain)} blocks")
