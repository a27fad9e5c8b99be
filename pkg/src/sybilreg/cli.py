"""Command-line interface.

Subcommands: ``weights``, ``fit``, ``simulate``, ``derive-networks`` and
``replay``. Every artifact embeds a run manifest holding the exact argument
vector, so ``sybilreg replay ARTIFACT`` regenerates it byte for byte.

Exit codes: 0 success, 2 invalid input, 3 size refusal, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from sybilreg import __version__
from sybilreg.errors import (
    DegenerateTopology,
    EstimationError,
    GraphError,
    ResourceRefusal,
    ValidationError,
)
from sybilreg.estimators import DEFAULT_RESAMPLES, ESTIMATOR_NAMES, EstimatorKind
from sybilreg.graph import (
    DEFAULT_MIN_TRANSFERS,
    DEFAULT_MIN_TREE_SIZE,
    DEFAULT_PI,
    build_referral_forest,
    flag_large_trees,
    flag_transfer_clusters,
)
from sybilreg.io import (
    dumps,
    format_float,
    read_dataset_csv,
    read_referrals_csv,
    read_spec,
    read_transfers_csv,
    spec_to_obj,
)
from sybilreg.model import DisjointNetworkSpec
from sybilreg.simulation import SimConfig, run_simulation
from sybilreg.weights import (
    DENSE_LIMIT,
    expected_topology_disjoint,
    optimal_weights_closed_form,
    optimal_weights_general,
)

log = logging.getLogger("sybilreg")

EXIT_OK, EXIT_INVALID, EXIT_REFUSED, EXIT_ESTIMATION = 0, 2, 3, 4


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp(args) -> str | None:
    # wall-clock time is opt-in so repeated runs stay byte-identical
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        return _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc).isoformat()
    if args.timestamp:
        return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return None


def _manifest(args, argv, inputs: dict, config: dict, seed=None) -> dict:
    return {
        "tool": "sybilreg",
        "version": __version__,
        "subcommand": args.command,
        "argv": list(argv),
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in inputs.items() if p is not None},
        "config": config,
        "seed": seed,
        "timestamp": _timestamp(args),
    }


def _write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv_text(rows, manifest: dict | None = None) -> str:
    lines = []
    if manifest is not None:
        lines.append("# manifest: " + dumps(manifest, indent=0).strip())
    for row in rows:
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _load_spec(args, dataset=None) -> DisjointNetworkSpec:
    if args.spec is None:
        if dataset is None:
            raise ValidationError("a spec file is required")
        return DisjointNetworkSpec((), dataset.n)
    return read_spec(args.spec, dataset)


def cmd_weights(args, argv) -> int:
    dataset = read_dataset_csv(args.data) if args.data else None
    spec = _load_spec(args, dataset)
    if args.format == "dense-csv" and spec.n_total > args.max_dense:
        raise ResourceRefusal(
            f"dense output for N={spec.n_total} exceeds the limit of {args.max_dense}; use --format block-json"
        )
    config = {"format": args.format, "method": args.method, "max_dense": args.max_dense}
    manifest = _manifest(args, argv, {"spec": args.spec, "data": args.data}, config)

    if args.method == "closed-form":
        W = optimal_weights_closed_form(spec)
    else:
        if args.format == "block-json":
            raise ValidationError("block-json output needs --method closed-form")
        W = optimal_weights_general(expected_topology_disjoint(spec))

    if args.format == "block-json":
        obj = {
            "n": spec.n_total,
            "independent_weight": 1.0,
            "networks": [
                {"network_id": k, "size": net.size, "pi": net.pi, "d": float(W.d[k]), "o": float(W.o[k])}
                for k, net in enumerate(spec.networks)
            ],
            "manifest": manifest,
        }
        _write_text(args.out, dumps(obj))
    else:
        dense = W.to_dense(max_n=args.max_dense)
        rows = ([format_float(v) for v in row] for row in dense)
        _write_text(args.out, _csv_text(rows, manifest))
    return EXIT_OK


def cmd_fit(args, argv) -> int:
    ds = read_dataset_csv(args.data, intercept=not args.no_intercept)
    spec = _load_spec(args, ds)
    kind = EstimatorKind(args.estimator, args.cutoff, args.resamples)
    config = {
        "estimator": kind.name,
        "cutoff": kind.cutoff,
        "resamples": kind.resamples,
        "intercept": not args.no_intercept,
    }
    manifest = _manifest(args, argv, {"data": args.data, "spec": args.spec}, config, seed=args.seed)
    fit = kind.fit(ds, spec, seed=args.seed)
    obj = {
        "estimator": kind.name,
        "columns": list(ds.columns),
        "beta": fit.beta,
        "se": fit.se,
        "sigma2_hat": fit.sigma2_hat,
        "cov_beta": fit.cov_beta,
        "n_obs": ds.n,
        "n_networks": len(spec.networks),
        "meta": fit.meta,
        "manifest": manifest,
    }
    _write_text(args.out, dumps(obj))
    return EXIT_OK


_SIM_FLAGS = ("n_obs", "n_reps", "noise_sd", "seed", "n_networks", "cutoff", "resamples")


def _sim_config(args) -> SimConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(base, dict):
            raise ValidationError(f"{args.config}: expected a JSON object")
    for name in _SIM_FLAGS:
        value = getattr(args, name)
        if value is not None:
            base[name] = value
    if args.random_count:
        base["random_count"] = True
    if args.beta_true is not None:
        base["beta_true"] = args.beta_true
    try:
        return SimConfig.from_dict(base)
    except TypeError as exc:
        raise ValidationError(f"bad simulation config: {exc}") from None


def cmd_simulate(args, argv) -> int:
    cfg = _sim_config(args)
    report = run_simulation(cfg, n_jobs=args.jobs)
    csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
    manifest = _manifest(args, argv, {"config": args.config}, cfg.to_dict(), seed=cfg.seed)
    obj = report.to_dict()
    obj["manifest"] = manifest
    _write_text(args.out, dumps(obj))
    rows = [["estimator", "mse", "mc_se"]]
    for name, mse, se in report.table():
        rows.append([name, format_float(mse), "null" if se is None else format_float(se)])
    _write_text(csv_path, _csv_text(rows, manifest))
    return EXIT_OK


def cmd_derive_networks(args, argv) -> int:
    ds = read_dataset_csv(args.data)
    if ds.row_ids is None:
        raise ValidationError(f"{args.data}: an id column is needed to match wallets to rows")
    id_map = ds.id_map()
    forest = build_referral_forest(read_referrals_csv(args.referrals))
    config = {"min_tree_size": args.min_tree_size, "min_transfers": args.min_transfers, "pi": args.pi}
    manifest = _manifest(
        args, argv, {"referrals": args.referrals, "transfers": args.transfers, "data": args.data}, config
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    spec, diag = flag_large_trees(forest, args.min_tree_size, args.pi, id_map, ds.n, return_diagnostics=True)
    outputs = [("tree_size_spec.json", "tree_size", spec, diag)]
    if args.transfers:
        transfers = read_transfers_csv(args.transfers)
        spec, diag = flag_transfer_clusters(
            forest, transfers, args.min_transfers, args.pi, id_map, ds.n, return_diagnostics=True
        )
        outputs.append(("transfers_spec.json", "transfers", spec, diag))
    for fname, heuristic, spec, diag in outputs:
        obj = spec_to_obj(spec, ds.row_ids)
        obj["heuristic"] = heuristic
        obj["diagnostics"] = diag
        obj["manifest"] = manifest
        _write_text(out_dir / fname, dumps(obj))
        log.info("%s: %d networks from %d trees", heuristic, len(spec.networks), diag["trees"])
    return EXIT_OK


def _manifest_from_artifact(path) -> dict:
    text = Path(path).read_text()
    if text.startswith("# manifest: "):
        return json.loads(text.splitlines()[0][len("# manifest: ") :])
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        raise ValidationError(f"{path}: not a sybilreg artifact") from None
    if not isinstance(obj, dict) or "manifest" not in obj:
        raise ValidationError(f"{path}: no manifest found")
    return obj["manifest"]


def cmd_replay(args, argv) -> int:
    manifest = _manifest_from_artifact(args.artifact)
    if manifest.get("tool") != "sybilreg":
        raise ValidationError(f"{args.artifact}: manifest is not from sybilreg")
    if manifest.get("version") != __version__:
        log.warning("artifact written by version %s, replaying with %s", manifest.get("version"), __version__)
    for name, info in manifest.get("inputs", {}).items():
        if Path(info["path"]).exists() and _sha256(info["path"]) != info["sha256"]:
            log.warning("input %s (%s) changed since the artifact was written", name, info["path"])
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sybilreg", description="Weighted regression with probabilistic Sybil networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--timestamp", action="store_true", help="record wall-clock time in the manifest")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", help="optimal weight matrix for a network spec")
    w.add_argument("--spec", required=True)
    w.add_argument("--data", help="dataset CSV, needed when the spec uses string row ids")
    w.add_argument("--out", required=True)
    w.add_argument("--format", choices=("block-json", "dense-csv"), default="block-json")
    w.add_argument("--method", choices=("closed-form", "general"), default="closed-form")
    w.add_argument("--max-dense", type=int, default=DENSE_LIMIT)
    w.set_defaults(func=cmd_weights)

    f = sub.add_parser("fit", help="fit one estimator")
    f.add_argument("--data", required=True)
    f.add_argument("--spec")
    f.add_argument("--estimator", choices=ESTIMATOR_NAMES, default="weighted")
    f.add_argument("--cutoff", type=float, default=0.5)
    f.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--no-intercept", action="store_true")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="Monte-Carlo comparison of all six estimators")
    s.add_argument("--config", help="JSON file with SimConfig fields; flags override it")
    s.add_argument("--n-obs", type=int)
    s.add_argument("--n-reps", type=int)
    s.add_argument("--noise-sd", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-networks", type=int)
    s.add_argument("--random-count", action="store_true", help="draw the network count from 1..n-networks")
    s.add_argument("--beta-true", type=float, nargs="+")
    s.add_argument("--cutoff", type=float)
    s.add_argument("--resamples", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="MSE table path (default: --out with .csv suffix)")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("derive-networks", help="candidate networks from referral and transfer logs")
    d.add_argument("--referrals", required=True)
    d.add_argument("--transfers")
    d.add_argument("--data", required=True)
    d.add_argument("--min-tree-size", type=int, default=DEFAULT_MIN_TREE_SIZE)
    d.add_argument("--min-transfers", type=int, default=DEFAULT_MIN_TRANSFERS)
    d.add_argument("--pi", type=float, default=DEFAULT_PI)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_derive_networks)

    r = sub.add_parser("replay", help="re-run the command recorded in an artifact's manifest")
    r.add_argument("artifact")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except (ValidationError, DegenerateTopology, GraphError, OSError, csv.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ResourceRefusal as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
