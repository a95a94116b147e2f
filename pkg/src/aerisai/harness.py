"""Key ceremony, experiment orchestration, baselines and metrics."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import random
import secrets
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import cpabe, ledger as ledger_mod, mlkit, oracle as oracle_mod, paillier
from .client import (
    ClientState,
    DecryptCache,
    DpConfig,
    client_round,
    compute_delta,
    download_model,
    encrypt_update,
    perturb,
    restore,
    submit_update,
)
from .cpabe import CpabePublicParams, CpabeUserKey
from .ledger import Ledger
from .paillier import FixedPointCodec, PaillierPrivateKey, PaillierPublicKey

log = logging.getLogger(__name__)

SCHEMES = ("aerisai", "safl", "local", "centralized", "spdl_like")
DATASETS = ("synthetic", "mnist")
DEFAULT_POLICY = "role:client"
CSV_COLUMNS = ("scheme", "round", "accuracy", "t_upload_ms", "t_update_ms", "t_model_dl_ms", "t_noise_dl_ms", "ledger_bytes")
BUDGET_GRID = tuple(0.4 * 10.0**-k for k in range(7))  # 0.4 ... 4e-7


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, round_: int, message: str):
        super().__init__(f"round {round_}: {message}")
        self.round = round_


# -- configuration ---------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "aerisai"
    n_clients: int = 5
    rounds: int = 30
    dataset: str = "synthetic"
    key_bits: int = 1024
    epsilon: float | None = None
    sigma: float | None = None
    clip_c: float = 1.0
    policy_text: str = DEFAULT_POLICY
    client_attrs: tuple[tuple[str, ...], ...] | None = None
    seed_data: int = 0
    seed_crypto: int = 1
    seed_noise: int = 2
    local_epochs: int = 1
    batch_size: int = 64
    lr: float = 0.001
    layer_dims: tuple[int, ...] | None = None
    n_samples: int = 2000
    test_fraction: float = 0.25
    synthetic_dim: int = 16
    n_classes: int = 4
    mnist_path: str | None = None
    delta_base: str = "denoised"
    workers: int = 1
    curve: str = "ss512"
    plaintext_spdl: bool = False

    def __post_init__(self):
        if self.client_attrs is not None:
            object.__setattr__(self, "client_attrs", tuple(tuple(sorted(a)) for a in self.client_attrs))
        if self.layer_dims is not None:
            object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        self.validate()

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}")
        if self.dataset == "mnist" and not self.mnist_path:
            raise ConfigError("mnist runs need mnist_path")
        if self.n_clients < 1 or self.rounds < 0:
            raise ConfigError("need n_clients >= 1 and rounds >= 0")
        if self.key_bits not in paillier.KEY_SIZES:
            raise ConfigError(f"key_bits must be one of {paillier.KEY_SIZES}")
        if self.epsilon is not None and self.sigma is not None:
            raise ConfigError("give either epsilon or sigma, not both")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if self.clip_c <= 0 or self.lr <= 0 or self.batch_size < 1 or self.local_epochs < 0:
            raise ConfigError("clip_c, lr, batch_size must be positive and local_epochs >= 0")
        if self.client_attrs is not None and len(self.client_attrs) != self.n_clients:
            raise ConfigError("client_attrs needs one attribute set per client")
        if self.delta_base not in ("denoised", "noisy"):
            raise ConfigError("delta_base must be denoised or noisy")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.curve not in ("ss512", "ss1536"):
            raise ConfigError("curve must be ss512 or ss1536")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        cpabe.parse_policy(self.policy_text)

    @property
    def dp(self) -> DpConfig:
        if self.epsilon is not None:
            return DpConfig.from_budget(self.epsilon, self.clip_c)
        return DpConfig(self.sigma or 0.0, None, 0.0, self.clip_c)

    @property
    def dims(self) -> tuple[int, ...]:
        if self.layer_dims is not None:
            return self.layer_dims
        if self.dataset == "mnist":
            return mlkit.MNIST_DIMS
        return (self.synthetic_dim,) + mlkit.SYNTHETIC_DIMS[1:-1] + (self.n_classes,)

    def attrs_for(self, i: int) -> frozenset[str]:
        if self.client_attrs is None:
            return frozenset({"role:client"})
        return frozenset(self.client_attrs[i])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["client_attrs"] is not None:
            d["client_attrs"] = [list(a) for a in d["client_attrs"]]
        if d["layer_dims"] is not None:
            d["layer_dims"] = list(d["layer_dims"])
        return d

    @property
    def config_hash(self) -> str:
        raw = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(raw).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        """Parse ``key = value`` lines ('#' comments); keys mirror the CLI flags with '-' or '_'."""
        kwargs = {}
        names = {f.name: f for f in dataclasses.fields(cls)}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = _CONFIG_ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if key not in names:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            kwargs[key] = _parse_value(key, value)
        return cls(**kwargs)


_CONFIG_ALIASES = {"clients": "n_clients", "budget": "epsilon", "policy": "policy_text"}


def _parse_value(key: str, value: str):
    if key in ("scheme", "dataset", "policy_text", "mnist_path", "delta_base", "curve"):
        return value.strip('"')
    if key in ("epsilon", "sigma", "clip_c", "lr", "test_fraction"):
        return None if value.lower() == "none" else float(value)
    if key == "plaintext_spdl":
        return value.lower() in ("1", "true", "yes", "on")
    if key == "layer_dims":
        return tuple(int(v) for v in value.replace(",", " ").split())
    if key == "client_attrs":
        # "a b; c d" -> one attribute set per client
        return tuple(tuple(part.split()) for part in value.split(";"))
    return int(value)


def load_attr_file(path: str | os.PathLike, n_clients: int) -> tuple[tuple[str, ...], ...]:
    """One line per client with whitespace-separated attributes; a single line applies to everyone."""
    lines = [ln.split("#", 1)[0].split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) == 1:
        lines = lines * n_clients
    if len(lines) != n_clients:
        raise ConfigError(f"{path}: {len(lines)} attribute lines for {n_clients} clients")
    return tuple(tuple(ln) for ln in lines)


# -- key ceremony -------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleBundle:
    ppk_o: PaillierPublicKey = field(repr=False)
    sk_o: PaillierPrivateKey = field(repr=False)
    pk_abe: CpabePublicParams = field(repr=False)


@dataclass(frozen=True)
class ClientBundle:
    client_id: str
    ppk_c: PaillierPublicKey = field(repr=False)
    sk_c: PaillierPrivateKey = field(repr=False)
    ppk_o: PaillierPublicKey = field(repr=False)
    pk_abe: CpabePublicParams = field(repr=False)
    abe_key: CpabeUserKey = field(repr=False)
    attrs: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Ceremony:
    ppk_c: PaillierPublicKey = field(repr=False)
    ppk_o: PaillierPublicKey = field(repr=False)
    pk_abe: CpabePublicParams = field(repr=False)
    oracle: OracleBundle = field(repr=False)
    clients: tuple[ClientBundle, ...] = field(repr=False)


def client_ids(n: int) -> list[str]:
    return [f"client-{i:02d}" for i in range(n)]


def key_ceremony(config: ExperimentConfig, rng, out_dir: str | os.PathLike | None = None) -> Ceremony:
    """Trusted-authority setup: two Paillier keypairs, CP-ABE setup, one attribute key per client.

    The CP-ABE master key only lives inside this function.
    """
    ppk_c, sk_c = paillier.paillier_setup(config.key_bits, rng)
    ppk_o, sk_o = paillier.paillier_setup(config.key_bits, rng)
    pk_abe, mk = cpabe.cpabe_setup(rng, cpabe.group_for(config.curve))
    bundles = []
    for i, cid in enumerate(client_ids(config.n_clients)):
        attrs = config.attrs_for(i)
        bundles.append(ClientBundle(cid, ppk_c, sk_c, ppk_o, pk_abe, cpabe.keygen(mk, attrs, rng), attrs))
    del mk
    cer = Ceremony(ppk_c, ppk_o, pk_abe, OracleBundle(ppk_o, sk_o, pk_abe), tuple(bundles))
    if out_dir is not None:
        write_keys(cer, out_dir)
    return cer


def write_keys(cer: Ceremony, out_dir: str | os.PathLike) -> Path:
    root = Path(out_dir)
    (root / "oracle").mkdir(parents=True, exist_ok=True)
    paillier.save_public_key(cer.ppk_c, root / "ppk_c.json")
    paillier.save_public_key(cer.ppk_o, root / "ppk_o.json")
    (root / "abe_public.bin").write_bytes(cer.pk_abe.to_bytes())
    paillier.save_private_key(cer.oracle.sk_o, root / "oracle" / "sk_o.json")
    for b in cer.clients:
        d = root / b.client_id
        d.mkdir(exist_ok=True)
        paillier.save_private_key(b.sk_c, d / "sk_c.json")
        (d / "abe_key.bin").write_bytes(b.abe_key.to_bytes())
        (d / "attrs.txt").write_text(" ".join(sorted(b.attrs)) + "\n")
    return root


# -- metrics -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundMetrics:
    scheme: str
    round: int
    accuracy: float
    t_upload_ms: float = 0.0
    t_update_ms: float = 0.0
    t_model_dl_ms: float = 0.0
    t_noise_dl_ms: float = 0.0
    ledger_bytes: int = 0
    key_bits: int = 0
    n_clients: int = 0

    @property
    def round_ms(self) -> float:
        return self.t_upload_ms + self.t_update_ms + self.t_model_dl_ms + self.t_noise_dl_ms

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list[RoundMetrics]
    ledger: Ledger | None = field(default=None, repr=False)
    ceremony: Ceremony | None = field(default=None, repr=False)
    oracle: oracle_mod.Oracle | None = field(default=None, repr=False)
    clients: list[ClientState] = field(default_factory=list, repr=False)
    init_params: np.ndarray | None = field(default=None, repr=False)
    broadcasts: list[oracle_mod.NoiseBroadcast] = field(default_factory=list, repr=False)
    out_dir: Path | None = None

    @property
    def accuracies(self) -> list[float]:
        return [m.accuracy for m in self.metrics]

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].accuracy if self.metrics else float("nan")


def write_metrics(result: ExperimentResult, out_dir: str | os.PathLike) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for m in result.metrics:
            w.writerow(m.row())
    doc = {
        "config": result.config.to_dict(),
        "config_hash": result.config.config_hash,
        "metrics": [dataclasses.asdict(m) for m in result.metrics],
    }
    (root / "metrics.json").write_text(json.dumps(doc, indent=1) + "\n")
    return root


def read_metrics(path: str | os.PathLike) -> list[RoundMetrics]:
    """Load RoundMetrics from a metrics.json file or every metrics.json under a directory."""
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.rglob("metrics.json"))
    out = []
    for f in files:
        doc = json.loads(f.read_text())
        out.extend(RoundMetrics(**m) for m in doc["metrics"])
    return out


@dataclass(frozen=True)
class TimingRow:
    scheme: str
    key_bits: int
    n_clients: int
    rounds: int
    upload_ms: float
    update_ms: float
    model_dl_ms: float
    noise_dl_ms: float
    round_ms: float


def timing_report(metrics: Iterable[RoundMetrics]) -> list[TimingRow]:
    """Median stage times grouped by (scheme, key_bits, n_clients)."""
    groups: dict[tuple[str, int, int], list[RoundMetrics]] = {}
    for m in metrics:
        groups.setdefault((m.scheme, m.key_bits, m.n_clients), []).append(m)
    rows = []
    for (scheme, bits, n), ms in sorted(groups.items()):
        med = lambda xs: float(statistics.median(xs))  # noqa: E731
        rows.append(
            TimingRow(
                scheme,
                bits,
                n,
                len(ms),
                med([m.t_upload_ms for m in ms]),
                med([m.t_update_ms for m in ms]),
                med([m.t_model_dl_ms for m in ms]),
                med([m.t_noise_dl_ms for m in ms]),
                med([m.round_ms for m in ms]),
            )
        )
    return rows


def timing_checks(rows: Sequence[TimingRow], noise_factor: float = 3.0) -> list[tuple[str, bool, str]]:
    """The two trend checks: longer keys cost more; noise download grows slower than N."""
    out = []
    by = {(r.scheme, r.key_bits, r.n_clients): r for r in rows}
    for (scheme, bits, n), r in sorted(by.items()):
        bigger = [b for (s, b, nn) in by if s == scheme and nn == n and b > bits]
        for b in bigger:
            other = by[(scheme, b, n)]
            out.append(
                (f"{scheme} N={n}: round time {b} > {bits} bits", other.round_ms > r.round_ms, f"{other.round_ms:.1f} ms vs {r.round_ms:.1f} ms")
            )
    for (scheme, bits, n), r in sorted(by.items()):
        for (s2, b2, n2), r2 in sorted(by.items()):
            if s2 == scheme and b2 == bits and n2 == 3 * n and scheme == "aerisai":
                ok = r2.noise_dl_ms < noise_factor * r.noise_dl_ms
                out.append((f"{scheme} {bits} bits: noise download N={n2} < {noise_factor:g}x N={n}", ok, f"{r2.noise_dl_ms:.1f} ms vs {r.noise_dl_ms:.1f} ms"))
    return out


def format_timing_table(rows: Sequence[TimingRow]) -> str:
    if not rows:
        return ""
    head = f"{'scheme':<12}{'bits':>6}{'N':>4}{'rounds':>8}{'upload':>10}{'update':>10}{'model_dl':>10}{'noise_dl':>10}{'round':>10}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.scheme:<12}{r.key_bits:>6}{r.n_clients:>4}{r.rounds:>8}{r.upload_ms:>10.1f}{r.update_ms:>10.1f}"
            f"{r.model_dl_ms:>10.1f}{r.noise_dl_ms:>10.1f}{r.round_ms:>10.1f}"
        )
    return "\n".join(lines)


# -- data -----------------------------------------------------------------------------------


def load_data(config: ExperimentConfig) -> tuple[list[mlkit.Dataset], mlkit.Dataset, mlkit.Dataset]:
    """(client shards, union of shards, test set)."""
    if config.dataset == "mnist":
        train = mlkit.load_mnist(config.mnist_path, "train")
        test = mlkit.load_mnist(config.mnist_path, "test")
    else:
        full = mlkit.make_synthetic(config.n_samples, config.synthetic_dim, config.n_classes, config.seed_data)
        train, test = mlkit.train_test_split(full, config.test_fraction, config.seed_data + 1)
    shards = mlkit.partition(train, config.n_clients, config.seed_data + 2)
    return shards, train, test


def _init_model(config: ExperimentConfig) -> mlkit.MlpModel:
    return mlkit.MlpModel.init(config.dims, config.seed_data + 3)


def _noise_rng(config: ExperimentConfig, i: int) -> np.random.Generator:
    return np.random.default_rng([config.seed_noise, i])


def _train_seed(config: ExperimentConfig, i: int) -> int:
    return config.seed_data * 1_000_003 + 7919 * i + 17


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- schemes ----------------------------------------------------------------------------------------


def _run_protocol(config: ExperimentConfig, shards, test, crypto_rng, out_dir: Path | None) -> ExperimentResult:
    """aerisai (and spdl_like with noise removal off) over ledger, oracle and clients."""
    remove_noise = config.scheme == "aerisai"
    cer = key_ceremony(config, crypto_rng)
    init = _init_model(config)
    ids = client_ids(config.n_clients)
    codec_c = FixedPointCodec(cer.ppk_c.n)
    codec_o = FixedPointCodec(cer.ppk_o.n)
    led = Ledger.create(init.params, ids, cer.ppk_c, cer.ppk_o, codec_c, crypto_rng)
    orc = oracle_mod.Oracle(cer.oracle.sk_o, codec_o, cer.pk_abe, random.Random(crypto_rng.getrandbits(64)))
    dp = config.dp
    clients = []
    for i, b in enumerate(cer.clients):
        clients.append(
            ClientState(
                id=b.client_id,
                data_shard=shards[i],
                local_model=init.with_params(init.params.copy()),
                ppk_c=b.ppk_c,
                sk_c=b.sk_c,
                ppk_o=b.ppk_o,
                abe_key=b.abe_key,
                attrs=b.attrs,
                dp=dp,
                rng=random.Random(crypto_rng.getrandbits(64)),
                noise_rng=_noise_rng(config, i),
                train_seed=_train_seed(config, i),
                local_epochs=config.local_epochs,
                batch_size=config.batch_size,
                delta_base=config.delta_base,
                adam=mlkit.AdamState.fresh(init.n_params, config.lr),
            )
        )
    cache = DecryptCache()
    metrics, broadcasts = [], []
    timer = time.perf_counter

    def train_and_encrypt(c: ClientState):
        delta_hat, zeta = client_round(c)
        t0 = timer()
        cts = encrypt_update(c, delta_hat, zeta)
        return cts, timer() - t0

    for t in range(config.rounds):
        try:
            results = _map(train_and_encrypt, clients, config.workers)
            upload_times = []
            for c, ((g_ct, n_ct), enc_s) in zip(clients, results):
                t0 = timer()
                submit_update(c, led, g_ct, n_ct)
                upload_times.append(enc_s + timer() - t0)
            t0 = timer()
            led.aggregate()
            t_update = timer() - t0

            bc = None
            t_oracle = 0.0
            if remove_noise:
                t0 = timer()
                bc = orc.serve(led, config.policy_text)
                t_oracle = timer() - t0
                broadcasts.append(bc)
            model_times, noise_times = [], []
            if bc is not None and bc.round != led.state.round:
                raise ExperimentError(t, "broadcast round does not match the ledger")
            for c in clients:
                t0 = timer()
                hits = cache.hits
                theta_g = download_model(c, led, cache, timer)
                t1 = timer()
                # a cache hit stands in for the decryption each client would run in parallel
                model_times.append(t1 - t0 + (cache.last_elapsed if cache.hits > hits else 0.0))
                restore(c, theta_g, bc, remove_noise)
                noise_times.append(timer() - t1)
            led.seal_block()
        except ExperimentError:
            raise
        except Exception as exc:
            raise ExperimentError(t, f"{type(exc).__name__}: {exc}") from exc

        evaluator = next((c for c in clients if not c.access_denied), clients[0])
        acc = mlkit.evaluate(evaluator.local_model, test)
        metrics.append(
            RoundMetrics(
                config.scheme,
                t + 1,
                acc,
                1e3 * statistics.fmean(upload_times),
                1e3 * t_update,
                1e3 * statistics.fmean(model_times),
                1e3 * (t_oracle + (statistics.fmean(noise_times) if remove_noise else 0.0)),
                led.bytes_on_ledger,
                config.key_bits,
                config.n_clients,
            )
        )
        log.info("%s round %d accuracy %.4f", config.scheme, t + 1, acc)

    res = ExperimentResult(config, metrics, led, cer, orc, clients, init.params.copy(), broadcasts)
    if out_dir is not None:
        led.persist(out_dir / "chain")
    return res


def _plaintext_federated(config: ExperimentConfig, shards, test, noisy: bool) -> ExperimentResult:
    """safl (no noise) or the plaintext form of spdl_like (noise kept in the model)."""
    init = _init_model(config)
    dp = config.dp if noisy else DpConfig.off(config.clip_c)
    theta = init.params.copy()
    adams = [mlkit.AdamState.fresh(init.n_params, config.lr) for _ in shards]
    rngs = [_noise_rng(config, i) for i in range(len(shards))]
    seeds = [_train_seed(config, i) for i in range(len(shards))]
    metrics = []
    for t in range(config.rounds):
        start = init.with_params(theta)

        def one(i):
            trained, adams[i], _ = mlkit.train_epochs(start, shards[i], config.local_epochs, adams[i], (seeds[i], t), config.batch_size)
            delta = compute_delta(trained.params, theta, dp.clip_c)
            if noisy:
                delta, _ = perturb(delta, dp, rngs[i])
            return delta

        deltas = _map(one, range(len(shards)), config.workers)
        theta = theta + np.mean(deltas, axis=0)
        metrics.append(RoundMetrics(config.scheme, t + 1, mlkit.evaluate(init.with_params(theta), test), key_bits=config.key_bits, n_clients=config.n_clients))
    return ExperimentResult(config, metrics, init_params=init.params.copy())


def _run_local(config: ExperimentConfig, shards, test) -> ExperimentResult:
    init = _init_model(config)
    models = [init] * len(shards)
    adams = [mlkit.AdamState.fresh(init.n_params, config.lr) for _ in shards]
    seeds = [_train_seed(config, i) for i in range(len(shards))]
    metrics = []
    for t in range(config.rounds):
        for i in range(len(shards)):
            models[i], adams[i], _ = mlkit.train_epochs(models[i], shards[i], config.local_epochs, adams[i], (seeds[i], t), config.batch_size)
        acc = float(np.mean([mlkit.evaluate(m, test) for m in models]))
        metrics.append(RoundMetrics(config.scheme, t + 1, acc, key_bits=config.key_bits, n_clients=config.n_clients))
    return ExperimentResult(config, metrics, init_params=init.params.copy())


def _run_centralized(config: ExperimentConfig, train, test) -> ExperimentResult:
    model = _init_model(config)
    init = model.params.copy()
    adam = mlkit.AdamState.fresh(model.n_params, config.lr)
    metrics = []
    for t in range(config.rounds):
        model, adam, _ = mlkit.train_epochs(model, train, config.local_epochs, adam, (config.seed_data, t), config.batch_size)
        metrics.append(RoundMetrics(config.scheme, t + 1, mlkit.evaluate(model, test), key_bits=config.key_bits, n_clients=config.n_clients))
    return ExperimentResult(config, metrics, init_params=init)


def run_experiment(config: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> ExperimentResult:
    """Run one scheme end to end; with ``out_dir`` write metrics (and the chain, for ledger schemes)."""
    config.validate()
    out = Path(out_dir) if out_dir is not None else None
    shards, train, test = load_data(config)
    crypto_rng = random.Random(config.seed_crypto)
    if config.scheme == "aerisai" or (config.scheme == "spdl_like" and not config.plaintext_spdl):
        result = _run_protocol(config, shards, test, crypto_rng, out)
    elif config.scheme in ("safl", "spdl_like"):
        result = _plaintext_federated(config, shards, test, noisy=config.scheme == "spdl_like")
    elif config.scheme == "local":
        result = _run_local(config, shards, test)
    else:
        result = _run_centralized(config, train, test)
    result.out_dir = out
    if out is not None:
        write_metrics(result, out)
        (out / "config.txt").write_text(config_to_text(config))
    return result


def config_to_text(config: ExperimentConfig) -> str:
    lines = [f"# config hash {config.config_hash}"]
    for k, v in config.to_dict().items():
        if v is None:
            continue
        if k == "client_attrs":
            v = "; ".join(" ".join(a) for a in v)
        elif k == "layer_dims":
            v = " ".join(str(d) for d in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def audit(chain_path: str | os.PathLike) -> ledger_mod.AuditReport:
    return ledger_mod.audit_directory(chain_path)


def system_rng():
    """Unseeded cryptographic randomness for real (non-reproducible) runs."""
    return secrets.SystemRandom()
