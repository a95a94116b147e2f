"""Client side of a round: train, perturb, encrypt and upload, then restore the global model."""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cpabe, mlkit, paillier, symwrap
from .cpabe import CpabeUserKey
from .ledger import Ledger, Receipt, TxKind
from .oracle import NoiseBroadcast
from .paillier import EncryptedVector, FixedPointCodec, PaillierPrivateKey, PaillierPublicKey

DELTA_DP = 1e-5
DELTA_BASES = ("denoised", "noisy")


class ClientError(Exception):
    pass


class AccessDeniedError(ClientError):
    pass


def noise_scale(epsilon: float, clip_c: float = 1.0, delta_dp: float = DELTA_DP) -> float:
    """Gaussian-mechanism calibration: clip * sqrt(2 ln(1.25/delta)) / epsilon."""
    if epsilon <= 0 or clip_c <= 0 or not 0 < delta_dp < 1:
        raise ValueError("epsilon, clip_c must be positive and delta_dp in (0, 1)")
    return clip_c * math.sqrt(2.0 * math.log(1.25 / delta_dp)) / epsilon


@dataclass(frozen=True)
class DpConfig:
    sigma: float
    epsilon: float | None = None
    mu: float = 0.0
    clip_c: float = 1.0

    def __post_init__(self):
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError("sigma must be finite and non-negative")
        if self.clip_c <= 0:
            raise ValueError("clip_c must be positive")

    @classmethod
    def from_budget(cls, epsilon: float, clip_c: float = 1.0, mu: float = 0.0, delta_dp: float = DELTA_DP) -> "DpConfig":
        return cls(noise_scale(epsilon, clip_c, delta_dp), epsilon, mu, clip_c)

    @classmethod
    def off(cls, clip_c: float = 1.0) -> "DpConfig":
        return cls(0.0, None, 0.0, clip_c)


# -- pure steps ----------------------------------------------------------------------


def compute_delta(theta_new: np.ndarray, theta_base: np.ndarray, clip_c: float) -> np.ndarray:
    """theta_new - theta_base, clipped elementwise to [-clip_c, clip_c]."""
    a = np.asarray(theta_new, dtype=np.float64)
    b = np.asarray(theta_base, dtype=np.float64)
    if a.shape != b.shape:
        raise ClientError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return np.clip(a - b, -clip_c, clip_c)


def snap(x: np.ndarray, scale: int) -> np.ndarray:
    """Round onto the fixed-point grid 1/scale."""
    return np.rint(np.asarray(x, dtype=np.float64) * scale) / scale


def perturb(delta: np.ndarray, dp: DpConfig, rng: np.random.Generator, scale: int | None = paillier.DEFAULT_SCALE):
    """Return (delta_hat, zeta) with zeta ~ N(mu, sigma^2) per coordinate.

    With ``scale`` set, delta and zeta are first snapped to the codec grid so
    that delta_hat - zeta == delta holds exactly in float64 and both encode
    without rounding.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if dp.sigma == 0.0 and dp.mu == 0.0:
        zeta = np.zeros_like(delta)
    else:
        zeta = dp.mu + dp.sigma * rng.standard_normal(delta.shape)
    if scale is not None:
        delta = snap(delta, scale)
        zeta = snap(zeta, scale)
    return delta + zeta, zeta


# -- shared model decryption ---------------------------------------------------------------


class DecryptCache:
    """Every client holds SK_c and downloads the same ciphertext, so the simulator
    decrypts it once per round and hands the plaintext to each client."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entry: tuple[EncryptedVector, list[int]] | None = None
        self.last_elapsed = 0.0
        self.hits = 0

    def decrypt(self, sk: PaillierPrivateKey, vec: EncryptedVector, timer: Callable[[], float] = time.perf_counter) -> list[int]:
        with self._lock:
            if self._entry is not None and self._entry[0] == vec:
                self.hits += 1
                return self._entry[1]
            t0 = timer()
            ints = paillier.decrypt_vector_ints(sk, vec)
            self.last_elapsed = timer() - t0
            self._entry = (vec, ints)
            return ints


# -- the client actor -------------------------------------------------------------------------


@dataclass
class ClientState:
    id: str
    data_shard: mlkit.Dataset = field(repr=False)
    local_model: mlkit.MlpModel = field(repr=False)
    ppk_c: PaillierPublicKey = field(repr=False)
    sk_c: PaillierPrivateKey = field(repr=False)
    ppk_o: PaillierPublicKey = field(repr=False)
    abe_key: CpabeUserKey | None = field(repr=False)
    attrs: frozenset[str]
    dp: DpConfig
    rng: object = field(repr=False)  # crypto randomness, needs getrandbits
    noise_rng: np.random.Generator = field(repr=False)
    train_seed: int = 0
    local_epochs: int = 1
    batch_size: int = 64
    delta_base: str = "denoised"
    adam: mlkit.AdamState | None = field(default=None, repr=False)
    noisy_global: np.ndarray | None = field(default=None, repr=False)
    last_noise: np.ndarray | None = field(default=None, repr=False)
    last_delta: np.ndarray | None = field(default=None, repr=False)
    last_delta_hat: np.ndarray | None = field(default=None, repr=False)
    access_denied: bool = False
    rounds_done: int = 0

    def __post_init__(self):
        if self.delta_base not in DELTA_BASES:
            raise ClientError(f"delta_base must be one of {DELTA_BASES}")
        if self.adam is None:
            self.adam = mlkit.AdamState.fresh(self.local_model.n_params)
        if self.noisy_global is None:
            self.noisy_global = self.local_model.params.copy()

    @property
    def codec_c(self) -> FixedPointCodec:
        return FixedPointCodec(self.ppk_c.n)

    @property
    def codec_o(self) -> FixedPointCodec:
        return FixedPointCodec(self.ppk_o.n)


def local_train(state: ClientState, theta_start: np.ndarray, epochs: int | None = None) -> np.ndarray:
    """Run local Adam epochs from ``theta_start``; deterministic in (state seeds, round)."""
    if len(state.data_shard) == 0:
        raise ClientError(f"client {state.id} has an empty shard")
    theta_start = np.asarray(theta_start, dtype=np.float64)
    if theta_start.shape != state.local_model.params.shape:
        raise ClientError("global parameter dimension does not match the local model")
    epochs = state.local_epochs if epochs is None else epochs
    seed = (state.train_seed, state.rounds_done)
    model = state.local_model.with_params(theta_start)
    trained, state.adam, _ = mlkit.train_epochs(model, state.data_shard, epochs, state.adam, seed, state.batch_size)
    return trained.params


def client_round(state: ClientState) -> tuple[np.ndarray, np.ndarray]:
    """Train from the restored model, form the clipped delta and perturb it."""
    theta_new = local_train(state, state.local_model.params)
    base = state.local_model.params if state.delta_base == "denoised" else state.noisy_global
    delta = compute_delta(theta_new, base, state.dp.clip_c)
    delta_hat, zeta = perturb(delta, state.dp, state.noise_rng)
    state.last_delta = snap(delta, paillier.DEFAULT_SCALE)
    state.last_delta_hat = delta_hat
    state.last_noise = zeta
    return delta_hat, zeta


def encrypt_update(state: ClientState, delta_hat: np.ndarray, zeta: np.ndarray) -> tuple[EncryptedVector, EncryptedVector]:
    grad_ct = paillier.encrypt_vector(state.ppk_c, delta_hat, state.codec_c, state.rng)
    noise_ct = paillier.encrypt_vector(state.ppk_o, zeta, state.codec_o, state.rng)
    return grad_ct, noise_ct


def submit_update(state: ClientState, ledger: Ledger, grad_ct: EncryptedVector, noise_ct: EncryptedVector) -> list[Receipt]:
    return [
        ledger.upload(state.id, TxKind.UPLOAD_GRADIENT, grad_ct),
        ledger.upload(state.id, TxKind.UPLOAD_NOISE, noise_ct),
    ]


def encrypt_and_upload(state: ClientState, delta_hat: np.ndarray, zeta: np.ndarray, ledger: Ledger) -> list[Receipt]:
    """Upload the gradient under the shared client key and the noise under the oracle key."""
    grad_ct, noise_ct = encrypt_update(state, delta_hat, zeta)
    return submit_update(state, ledger, grad_ct, noise_ct)


def unwrap_noise(state: ClientState, broadcast: NoiseBroadcast) -> np.ndarray:
    """Recover the session key with CP-ABE, then open the sealed noise."""
    if state.abe_key is None:
        raise AccessDeniedError(f"client {state.id} holds no attribute key")
    try:
        raw = cpabe.decrypt(broadcast.wrapped_key, state.abe_key)
    except cpabe.CpabeDecryptionError as exc:
        raise AccessDeniedError(f"client {state.id}: {exc}") from exc
    sek = symwrap.SessionKey(raw)
    try:
        return symwrap.open_sealed(sek, broadcast.sealed)
    finally:
        sek.wipe()


def download_model(state: ClientState, ledger: Ledger, cache: DecryptCache | None = None, timer=None) -> np.ndarray:
    """Decrypt the current global model (still carrying the aggregated noise)."""
    timer = timer or time.perf_counter
    st = ledger.state
    vec = ledger.query_model(state.id)
    if cache is None:
        ints = paillier.decrypt_vector_ints(state.sk_c, vec)
    else:
        ints = cache.decrypt(state.sk_c, vec, timer)
    return state.codec_c.decode_array(ints, st.divisor)


def restore(state: ClientState, theta_g: np.ndarray, broadcast: NoiseBroadcast | None, remove_noise: bool = True) -> np.ndarray:
    """Remove the broadcast noise from an already decrypted global model.

    On CP-ABE failure the client keeps the noisy model and sets ``access_denied``.
    """
    state.noisy_global = theta_g
    state.access_denied = False
    restored = theta_g
    if remove_noise:
        if broadcast is None:
            raise ClientError("noise removal needs the round's broadcast")
        try:
            zeta_g = unwrap_noise(state, broadcast)
        except AccessDeniedError:
            state.access_denied = True
        else:
            if zeta_g.shape != theta_g.shape:
                raise ClientError("broadcast noise has the wrong dimension")
            restored = theta_g - zeta_g
    state.local_model = state.local_model.with_params(restored)
    state.rounds_done += 1
    return restored


def download_and_restore(
    state: ClientState,
    ledger: Ledger,
    broadcast: NoiseBroadcast | None,
    cache: DecryptCache | None = None,
    remove_noise: bool = True,
) -> np.ndarray:
    """Fetch theta_G from the ledger and zeta_G from the broadcast, then keep theta_G - zeta_G."""
    if remove_noise and broadcast is not None and broadcast.round != ledger.state.round:
        raise ClientError(f"broadcast for round {broadcast.round}, ledger is at {ledger.state.round}")
    theta_g = download_model(state, ledger, cache)
    return restore(state, theta_g, broadcast, remove_noise)
