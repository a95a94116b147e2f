"""Command-line entry point: keygen, run, audit, report."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import random
import sys
from pathlib import Path

from . import cpabe, harness
from .harness import ConfigError, ExperimentConfig


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value file; flags given on the command line win")
    p.add_argument("--scheme", choices=harness.SCHEMES)
    p.add_argument("--clients", type=int, dest="n_clients")
    p.add_argument("--rounds", type=int)
    p.add_argument("--dataset", choices=harness.DATASETS)
    p.add_argument("--mnist-path", dest="mnist_path")
    p.add_argument("--key-bits", type=int, dest="key_bits")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--budget", type=float, dest="epsilon", help="privacy budget epsilon")
    noise.add_argument("--sigma", type=float, help="Gaussian noise std, bypassing the budget mapping")
    p.add_argument("--clip", type=float, dest="clip_c")
    p.add_argument("--policy", dest="policy_text")
    p.add_argument("--attrs", type=Path, help="attribute file, one line per client")
    p.add_argument("--seed-data", type=int, dest="seed_data")
    p.add_argument("--seed-crypto", type=int, dest="seed_crypto")
    p.add_argument("--seed-noise", type=int, dest="seed_noise")
    p.add_argument("--local-epochs", type=int, dest="local_epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--layer-dims", dest="layer_dims", help="e.g. 16,32,16,4")
    p.add_argument("--samples", type=int, dest="n_samples")
    p.add_argument("--delta-base", choices=("denoised", "noisy"), dest="delta_base")
    p.add_argument("--workers", type=int)
    p.add_argument("--plaintext-spdl", action="store_true", default=None, dest="plaintext_spdl")
    p.add_argument("--out", type=Path, required=True)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.from_text(args.config.read_text()) if args.config else ExperimentConfig()
    changes = {}
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            changes[f.name] = v
    if "layer_dims" in changes:
        changes["layer_dims"] = tuple(int(x) for x in changes["layer_dims"].replace(",", " ").split())
    # a budget on the command line overrides a sigma from the file, and vice versa
    if "epsilon" in changes:
        changes["sigma"] = None
    elif "sigma" in changes:
        changes["epsilon"] = None
    n = changes.get("n_clients", base.n_clients)
    if args.attrs:
        changes["client_attrs"] = harness.load_attr_file(args.attrs, n)
    elif "n_clients" in changes and base.client_attrs is not None and len(base.client_attrs) != n:
        changes["client_attrs"] = None
    return dataclasses.replace(base, **changes)


def cmd_keygen(args: argparse.Namespace) -> int:
    attrs = harness.load_attr_file(args.attrs, args.clients) if args.attrs else None
    config = ExperimentConfig(n_clients=args.clients, key_bits=args.key_bits, client_attrs=attrs, curve=args.curve)
    rng = random.Random(args.seed) if args.seed is not None else harness.system_rng()
    cer = harness.key_ceremony(config, rng, args.out)
    print(f"wrote keys for {len(cer.clients)} clients to {args.out}")
    print(f"  client key  {cer.ppk_c.key_id}")
    print(f"  oracle key  {cer.ppk_o.key_id}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = harness.run_experiment(config, args.out)
    print(f"{config.scheme}: {config.rounds} rounds, {config.n_clients} clients, config {config.config_hash}")
    for m in result.metrics:
        print(f"  round {m.round:>3}  accuracy {m.accuracy:.4f}")
    print(f"metrics written to {args.out / 'metrics.csv'}")
    if result.ledger is not None:
        print(f"chain persisted to {args.out / 'chain'}")
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    report = harness.audit(args.chain)
    if report.ok:
        print(f"audit ok: height {report.height}, state {report.state_hash[:16]}, {report.message}")
        return 0
    print(f"audit FAILED at height {report.height}: {report.message}")
    return 1


def cmd_report(args: argparse.Namespace) -> int:
    metrics = harness.read_metrics(args.metrics)
    if not metrics:
        print("no metrics found")
        return 0
    finals: dict[tuple[str, int, int], float] = {}
    for m in metrics:
        finals[(m.scheme, m.n_clients, m.key_bits)] = m.accuracy
    print("final accuracy")
    for (scheme, n, bits), acc in sorted(finals.items()):
        print(f"  {scheme:<12} N={n:<3} {bits:>5} bits  {acc:.4f}")
    rows = harness.timing_report(metrics)
    print()
    print(harness.format_timing_table(rows))
    checks = harness.timing_checks(rows)
    if checks:
        print()
        for name, ok, detail in checks:
            print(f"  [{'PASS' if ok else 'FAIL'}] {name} ({detail})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aerisai", description="Encrypted, noise-cancelling federated learning over an auditable ledger.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="run the key ceremony and write key files")
    k.add_argument("--clients", type=int, required=True)
    k.add_argument("--attrs", type=Path)
    k.add_argument("--key-bits", type=int, default=1024, choices=(1024, 2048, 3072))
    k.add_argument("--curve", default="ss512", choices=("ss512", "ss1536"))
    k.add_argument("--seed", type=int, help="deterministic ceremony (testing only)")
    k.add_argument("--out", type=Path, required=True)
    k.set_defaults(func=cmd_keygen)

    r = sub.add_parser("run", help="run one scheme and write metrics (and the chain)")
    _add_run_flags(r)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="replay a persisted chain")
    a.add_argument("--chain", type=Path, required=True)
    a.set_defaults(func=cmd_audit)

    rep = sub.add_parser("report", help="summarise metrics.json files under a directory")
    rep.add_argument("--metrics", type=Path, required=True)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, cpabe.CpabeError, harness.ExperimentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
