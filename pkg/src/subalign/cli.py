"""Command-line interface for batch experiments, ablations, and sweeps.

Subcommands
-----------
gen-synthetic   write a seeded multi-domain benchmark as SAF1 feature files
train-tafe      pre-train the target-aware feature extractor on raw rows
adapt           run the adaptation engine (optionally pre-training first)
eval            score a saved adaptation result against labeled data
progressive     extend a deployed result to a new target domain
sweep           re-run adaptation across values of one config field

Every command is a pure function of (inputs, config file, seed): repeated
invocations produce byte-identical data outputs. A JSON manifest recording
input digests, the config digest, and wall-clock time is written next to
each output. Outputs are written to a temporary file and renamed, so
failures never leave partial artifacts.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .data import DomainDataset, SyntheticSpec, accuracy, generate_synthetic, per_class_accuracy, read_features_csv
from .engine import MODES, AdaptConfig, AdaptResult, TRACE_COLUMNS, adapt
from .errors import FormatError, NumericalError, ParameterError, SubalignError
from .pretrain import extract_features, load_extractor, pretrain_extractor, save_extractor
from .progressive import DeployedModel, predict_deployed, progressive_adapt
from .saf import atomic_write_bytes, read_checkpoint, read_features, write_features


class UsageError(Exception):
    """Bad flags or config contents; maps to exit code 2."""


# ---------------------------------------------------------------------------
# key=value config files


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_int_tuple(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_float_tuple(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_optional_dim(text: str):
    lowered = text.strip().lower()
    if lowered in ("auto", "none"):
        return None
    return int(text)


_ADAPT_PARSERS = {
    "subspace_dim": _parse_optional_dim,
    "lambda_c": float, "lambda_cb": float, "gamma_c": float, "gamma_cb": float,
    "n_iter": int, "t1": int, "t2": int,
    "pretrain_epochs": int, "pretrain_lr": float, "pretrain_optimizer": str,
    "pretrain_batch_size": int,
    "hidden_widths": _parse_int_tuple, "feature_dim": int,
    "classifier_lr": float, "classifier_momentum": float,
    "classifier_optimizer": str,
    "alignment_lr": float, "alignment_optimizer": str,
    "alignment_lr_decay": float,
    "head_init_steps": int, "head_init_lr": float,
    "split_fraction": float, "seed": int,
    "centering": _parse_bool, "mode": str,
    "partial_da": _parse_bool, "class_prior_tau": float,
    "target_fraction": float, "min_pseudo_confidence": float,
    "progressive_refit_pool": _parse_bool, "progressive_warm_start": _parse_bool,
    "early_stop_tol": float,
}

_SPEC_PARSERS = {
    "classes": int, "ambient_dim": int, "intrinsic_dim": int, "per_class": int,
    "thetas": _parse_float_tuple, "translations": _parse_float_tuple,
    "scalings": _parse_float_tuple, "sigma": float, "seed": int,
}


def load_kv_file(path) -> dict:
    """Parse a flat key=value file ('#' comments and blank lines allowed)."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _apply_parsers(raw: dict, parsers: dict, what: str) -> dict:
    parsed = {}
    for key, value in raw.items():
        if key not in parsers:
            raise UsageError(f"unknown {what} key {key!r}")
        try:
            parsed[key] = parsers[key](value)
        except UsageError:
            raise
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    return parsed


def load_adapt_config(path, seed_override=None, mode_override=None) -> AdaptConfig:
    raw = load_kv_file(path) if path else {}
    kwargs = _apply_parsers(raw, _ADAPT_PARSERS, "config")
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
    if mode_override is not None:
        kwargs["mode"] = mode_override
    try:
        return AdaptConfig(**kwargs).validate()
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc


def load_synthetic_spec(path) -> SyntheticSpec:
    raw = load_kv_file(path) if path else {}
    kwargs = _apply_parsers(raw, _SPEC_PARSERS, "spec")
    try:
        return SyntheticSpec(**kwargs)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# manifests and reports


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(manifest_path, command, args, seed, config_digest, inputs,
                    outputs, started):
    payload = {
        "command": command,
        "argv": list(args),
        "seed": None if seed is None else int(seed),
        "config_digest": config_digest,
        "inputs": {os.fspath(p): _sha256_file(p) for p in inputs},
        "outputs": [os.fspath(p) for p in outputs],
        "wall_clock_seconds": round(time.monotonic() - started, 6),
        "toolkit_version": __version__,
    }
    blob = json.dumps(payload, sort_keys=True, indent=2).encode("utf-8") + b"\n"
    atomic_write_bytes(manifest_path, blob)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def _read_labeled(path, what) -> DomainDataset:
    path = os.fspath(path)
    ds = read_features_csv(path) if path.endswith(".csv") else read_features(path)
    if ds.labels is None:
        raise ParameterError(f"{what} file {path} carries no labels")
    return ds


def _load_features(path) -> DomainDataset:
    path = os.fspath(path)
    if path.endswith(".csv"):
        return read_features_csv(path)
    return read_features(path)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_synthetic(args) -> int:
    started = time.monotonic()
    spec = load_synthetic_spec(args.spec)
    if args.seed is not None:
        spec = SyntheticSpec(**{**spec.__dict__, "seed": int(args.seed)})
    source, targets = generate_synthetic(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for ds in [source] + targets:
        path = os.path.join(args.out_dir, f"{ds.domain_tag}.saf")
        write_features(path, ds)
        outputs.append(path)
    spec_digest = hashlib.sha256(
        json.dumps(spec.__dict__, sort_keys=True, default=list).encode()
    ).hexdigest()
    _write_manifest(
        os.path.join(args.out_dir, "manifest.json"), "gen-synthetic",
        args.argv, spec.seed, spec_digest,
        [args.spec] if args.spec else [], outputs, started,
    )
    print(f"wrote {len(outputs)} domain files to {args.out_dir}")
    return 0


def _cmd_train_tafe(args) -> int:
    started = time.monotonic()
    cfg = load_adapt_config(args.config, seed_override=args.seed)
    source = _read_labeled(args.source, "source")
    target = _load_features(args.target)
    model = pretrain_extractor(source, target, cfg)
    save_extractor(model, args.out)
    trace_path = args.out + ".losses.csv"
    _write_csv(
        trace_path,
        ("epoch", "source_ce", "target_entropy", "class_balance", "total"),
        [(r.epoch, r.source_ce, r.target_entropy, r.class_balance, r.total)
         for r in model.trace],
    )
    _write_manifest(args.out + ".manifest.json", "train-tafe", args.argv,
                    cfg.seed, cfg.digest(), [args.source, args.target],
                    [args.out, trace_path], started)
    print(f"pre-trained extractor saved to {args.out} (digest {model.digest()[:12]})")
    return 0


def _prepare_features(args, cfg):
    """Resolve (source_ds, target_ds, init_head, extractor_digest) for adapt."""
    source = _read_labeled(args.source, "source")
    target = _load_features(args.target)
    if args.features_precomputed:
        return source, target, None, None
    if args.tafe_ckpt:
        model = load_extractor(args.tafe_ckpt)
    else:
        model = pretrain_extractor(source, target, cfg)
    zs = extract_features(model, source.features)
    zt = extract_features(model, target.features)
    source = DomainDataset(features=zs, labels=source.labels,
                           domain_tag=source.domain_tag,
                           class_count=source.class_count)
    target = DomainDataset(features=zt, labels=target.labels,
                           domain_tag=target.domain_tag,
                           class_count=target.class_count)
    return source, target, model.head, model.digest()


def _write_trace_csv(path, result: AdaptResult):
    _write_csv(path, TRACE_COLUMNS, [r.as_tuple() for r in result.trace])


def _cmd_adapt(args) -> int:
    started = time.monotonic()
    cfg = load_adapt_config(args.config, seed_override=args.seed,
                            mode_override=args.mode)
    source, target, init_head, extractor_digest = _prepare_features(args, cfg)
    eval_labels = None
    if args.eval_labels:
        eval_labels = _read_labeled(args.eval_labels, "eval-labels").labels
    result = adapt(source.features, source.labels, target.features, cfg,
                   eval_labels=eval_labels, init_head=init_head)
    extra = {}
    if extractor_digest is not None:
        extra["extractor_digest"] = extractor_digest
    result.save(args.out, extra_meta=extra or None)
    trace_path = args.out + ".trace.csv"
    _write_trace_csv(trace_path, result)
    inputs = [args.source, args.target]
    if args.eval_labels:
        inputs.append(args.eval_labels)
    if args.tafe_ckpt:
        inputs.append(args.tafe_ckpt)
    _write_manifest(args.out + ".manifest.json", "adapt", args.argv, cfg.seed,
                    cfg.digest(), inputs, [args.out, trace_path], started)
    rank = result.alignment_rank
    cond = result.alignment_cond
    print(f"adaptation ({cfg.mode}) saved to {args.out}"
          + (f"; alignment rank {rank}, cond {cond:.3g}" if rank is not None else ""))
    return 0


def _evaluate_checkpoint(ckpt_path, target: DomainDataset, truth) -> tuple:
    result = AdaptResult.load(ckpt_path)
    predicted, _ = result.predict(target.features)
    overall = accuracy(predicted, truth)
    per_class = per_class_accuracy(predicted, truth, result.class_count)
    return overall, per_class, result


def _maybe_extract(dataset: DomainDataset, tafe_ckpt) -> DomainDataset:
    """Map raw rows through a saved extractor when one is supplied."""
    if not tafe_ckpt:
        return dataset
    model = load_extractor(tafe_ckpt)
    return DomainDataset(
        features=extract_features(model, dataset.features),
        labels=dataset.labels,
        domain_tag=dataset.domain_tag,
        class_count=dataset.class_count,
    )


def _cmd_eval(args) -> int:
    started = time.monotonic()
    target = _maybe_extract(_load_features(args.target), args.tafe_ckpt)
    labels_path = args.labels or args.target
    truth = _read_labeled(labels_path, "labels").labels
    if truth.shape[0] != target.n:
        raise ParameterError("label count does not match target rows")

    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    rows = []
    header = None
    inputs = [args.target]
    if args.labels:
        inputs.append(args.labels)
    if args.tafe_ckpt:
        inputs.append(args.tafe_ckpt)
    if seeds is None:
        overall, per_class, _ = _evaluate_checkpoint(args.ckpt, target, truth)
        header = ("seed", "accuracy") + tuple(
            f"class_{k}" for k in range(per_class.shape[0])
        )
        rows.append(("-",) + (overall,) + tuple(per_class))
        inputs.append(args.ckpt)
        print(f"accuracy {overall:.4f}")
    else:
        if "{seed}" not in args.ckpt:
            raise UsageError("--seeds requires a '{seed}' placeholder in --ckpt")
        overalls = []
        for seed in seeds:
            path = args.ckpt.replace("{seed}", str(seed))
            overall, per_class, _ = _evaluate_checkpoint(path, target, truth)
            if header is None:
                header = ("seed", "accuracy") + tuple(
                    f"class_{k}" for k in range(per_class.shape[0])
                )
            rows.append((seed,) + (overall,) + tuple(per_class))
            overalls.append(overall)
            inputs.append(path)
        blank = ("",) * (len(header) - 2)
        rows.append(("mean", float(np.mean(overalls))) + blank)
        rows.append(("std", float(np.std(overalls))) + blank)
        print(f"mean accuracy {np.mean(overalls):.4f} +- {np.std(overalls):.4f} "
              f"over seeds {seeds}")
    _write_csv(args.report, header, rows)
    _write_manifest(args.report + ".manifest.json", "eval", args.argv,
                    None, None, inputs, [args.report], started)
    return 0


def _cmd_progressive(args) -> int:
    started = time.monotonic()
    cfg = load_adapt_config(args.config, seed_override=args.seed)
    deployed_result = AdaptResult.load(args.ckpt)
    ckpt_meta, _ = read_checkpoint(args.ckpt)
    model = DeployedModel.from_adapt_result(
        deployed_result, extractor_digest=ckpt_meta.get("extractor_digest")
    )
    source = _maybe_extract(_read_labeled(args.source, "source"), args.tafe_ckpt)
    domain_a = _maybe_extract(_load_features(args.target_a), args.tafe_ckpt)
    domain_b = _maybe_extract(_load_features(args.target_b), args.tafe_ckpt)
    result, pool = progressive_adapt(model, domain_a.features, domain_b.features,
                                     source, cfg)
    extra = {"progressive_from": os.fspath(args.ckpt)}
    if model.extractor_digest:
        extra["extractor_digest"] = model.extractor_digest
    result.save(args.out, extra_meta=extra)
    trace_path = args.out + ".trace.csv"
    _write_trace_csv(trace_path, result)

    chain_rows = []
    pred_a, _ = predict_deployed(model, domain_a.features)
    acc_a = accuracy(pred_a, domain_a.labels) if domain_a.labels is not None else math.nan
    chain_rows.append(("deployed", domain_a.domain_tag, acc_a,
                       np.linalg.matrix_rank(model.alignment.matrix),
                       float(np.linalg.cond(model.alignment.matrix))))
    pred_b, _ = result.predict(domain_b.features)
    acc_b = accuracy(pred_b, domain_b.labels) if domain_b.labels is not None else math.nan
    chain_rows.append(("progressive", domain_b.domain_tag, acc_b,
                       result.alignment_rank, result.alignment_cond))
    chain_path = args.out + ".chain.csv"
    _write_csv(chain_path,
               ("stage", "domain", "accuracy", "alignment_rank", "alignment_cond"),
               chain_rows)
    inputs = [args.ckpt, args.source, args.target_a, args.target_b]
    if args.tafe_ckpt:
        inputs.append(args.tafe_ckpt)
    _write_manifest(args.out + ".manifest.json", "progressive", args.argv,
                    cfg.seed, cfg.digest(), inputs,
                    [args.out, trace_path, chain_path], started)
    print(f"progressive adaptation saved to {args.out} (pool rows {pool.n})")
    return 0


def _cmd_sweep(args) -> int:
    started = time.monotonic()
    base_cfg = load_adapt_config(args.config, seed_override=args.seed,
                                 mode_override=args.mode)
    if args.param not in _ADAPT_PARSERS:
        raise UsageError(f"unknown sweep parameter {args.param!r}")
    parser = _ADAPT_PARSERS[args.param]
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values must list at least one value")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base_cfg.seed]

    source = _read_labeled(args.source, "source")
    target = _read_labeled(args.target, "target")

    rows = []
    for raw_value in values:
        try:
            value = parser(raw_value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad sweep value {raw_value!r}: {exc}") from exc
        accs = []
        for seed in seeds:
            cfg_kwargs = {**base_cfg.to_dict(), args.param: value, "seed": seed}
            cfg = AdaptConfig.from_dict(cfg_kwargs)
            result = adapt(source.features, source.labels, target.features, cfg)
            predicted, _ = result.predict(target.features)
            accs.append(accuracy(predicted, target.labels))
        rows.append((args.param, raw_value, float(np.mean(accs)),
                     float(np.std(accs)), ";".join(str(s) for s in seeds)))
        print(f"{args.param}={raw_value}: mean accuracy {np.mean(accs):.4f}")
    _write_csv(args.report,
               ("param", "value", "mean_accuracy", "std_accuracy", "seeds"),
               rows)
    _write_manifest(args.report + ".manifest.json", "sweep", args.argv,
                    base_cfg.seed, base_cfg.digest(),
                    [args.source, args.target], [args.report], started)
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subalign",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "CSV column orders are fixed:\n"
            "  loss trace: epoch,source_ce,target_entropy,class_balance,total\n"
            "  adapt trace: " + ",".join(TRACE_COLUMNS) + "\n"
            "  eval report: seed,accuracy,class_0..class_K-1 (mean/std rows last)\n"
            "  sweep report: param,value,mean_accuracy,std_accuracy,seeds\n"
            "  chain report: stage,domain,accuracy,alignment_rank,alignment_cond\n"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic benchmark")
    p.add_argument("--spec", help="key=value spec file (defaults when omitted)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("train-tafe",
                       help="pre-train the target-aware feature extractor")
    p.add_argument("--source", required=True, help="labeled SAF1/CSV file")
    p.add_argument("--target", required=True, help="unlabeled SAF1/CSV file")
    p.add_argument("--config", help="key=value adaptation config")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_train_tafe)

    p = sub.add_parser("adapt", help="run the adaptation engine")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--features-precomputed", action="store_true",
                   help="treat the input files as extracted features")
    p.add_argument("--tafe-ckpt", help="reuse a saved extractor checkpoint")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--eval-labels",
                   help="labeled file scored per iteration into the trace")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("eval", help="score a saved adaptation result")
    p.add_argument("--ckpt", required=True,
                   help="checkpoint path; may contain '{seed}' with --seeds")
    p.add_argument("--target", required=True)
    p.add_argument("--labels", help="labeled SAF1/CSV (defaults to --target)")
    p.add_argument("--tafe-ckpt",
                   help="extractor checkpoint to map raw rows to features first")
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--seeds", help="comma list; aggregates mean and std")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("progressive",
                       help="adapt a deployed result to a new target domain")
    p.add_argument("--ckpt", required=True, help="deployed adaptation checkpoint")
    p.add_argument("--source", required=True, help="labeled source features")
    p.add_argument("--target-a", required=True, help="original target features")
    p.add_argument("--target-b", required=True, help="new target features")
    p.add_argument("--tafe-ckpt",
                   help="extractor checkpoint to map raw rows to features first")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_progressive)

    p = sub.add_parser("sweep", help="sweep one config field over values")
    p.add_argument("--source", required=True, help="labeled feature file")
    p.add_argument("--target", required=True, help="labeled feature file (for scoring)")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--report", required=True)
    p.add_argument("--seeds", help="comma list of seeds (default: config seed)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except (FormatError, ParameterError, FileNotFoundError, IsADirectoryError,
            NotADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SubalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
