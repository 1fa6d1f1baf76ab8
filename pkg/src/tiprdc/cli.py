"""Command-line entry point: ``tiprdc <command> --config run.yaml [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

from __future__ import annotations

import os

# single-threaded BLAS keeps float reductions reproducible across runs
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Optional, Sequence  # noqa: E402

import numpy as np  # noqa: E402

from .baselines import run_baseline  # noqa: E402
from .config import BaselineSection, RunConfig, dump_resolved, load_config, with_overrides  # noqa: E402
from .datasets import DatasetError, generate_rows, preset  # noqa: E402
from .evaluation import (  # noqa: E402
    ComparisonError,
    JobResult,
    SweepJob,
    adversary_audit,
    aggregate,
    compare_baselines,
    dedupe_grid,
    evaluate_point,
    run_jobs,
    write_report,
)
from .features import load_features, save_features  # noqa: E402
from .nn import ConfigError, Extractor, config_hash, load_checkpoint, save_checkpoint  # noqa: E402
from .training import extract_features, train, write_trace  # noqa: E402

log = logging.getLogger("tiprdc")

INCOMPLETE = "INCOMPLETE"


class UsageError(Exception):
    pass


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# commands -------------------------------------------------------------------

def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    marker = out / INCOMPLETE
    marker.write_text("train\n")
    dataset = cfg.load_dataset()
    tcfg = cfg.train_config(0)
    result = train(tcfg, dataset)
    resolved = {k: v for k, v in cfg.resolved().items() if k != "output"}
    meta = {"resolved": resolved, "dataset_fingerprint": dataset.fingerprint, "train": tcfg.to_dict()}
    digest = save_checkpoint(out / "checkpoint.json", result.models.as_dict(), tcfg.seed, meta)
    write_trace(out / "trace.jsonl", result.trace)
    dump_resolved(cfg, out / "resolved_config.json")
    marker.unlink()
    _emit({"checkpoint": str(out / "checkpoint.json"), "sha256": digest, "pretrain_accuracy": result.pretrain_accuracy,
           "trace_records": len(result.trace)})
    return 0


def _job_path(points_dir: Path, lam: float, seed: int) -> Path:
    return points_dir / f"lam={lam:g}_seed={seed}.json"


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    points_dir = out / "points"
    points_dir.mkdir(exist_ok=True)
    marker = out / INCOMPLETE
    marker.write_text("sweep\n")
    dataset = cfg.load_dataset()
    base, spec = cfg.train_config(0), cfg.eval_spec()
    jobs = [SweepJob(lam, s, base, spec, dataset) for lam in dedupe_grid(cfg.sweep.lambdas) for s in cfg.seeds()]
    # per-job files are only reusable under the same training and eval settings
    settings = {k: v for k, v in base.to_dict().items() if k not in ("lam", "seed")}
    key = config_hash({"train": settings, "eval": spec.to_dict(), "dataset": dataset.fingerprint})
    key_file = points_dir / "settings.sha256"
    if key_file.is_file() and key_file.read_text().strip() != key:
        raise UsageError(f"{points_dir} holds results from different settings; use a fresh --output")
    key_file.write_text(key + "\n")
    done: dict[tuple[float, int], JobResult] = {}
    for job in jobs:
        p = _job_path(points_dir, job.lam, job.seed)
        if p.is_file():
            done[(job.lam, job.seed)] = JobResult(**json.loads(p.read_text()))
    todo = [j for j in jobs if (j.lam, j.seed) not in done]
    log.info("sweep: %d jobs, %d already complete", len(jobs), len(done))
    for job, res in zip(todo, run_jobs(todo, args.parallel)):
        _job_path(points_dir, job.lam, job.seed).write_text(json.dumps(res.to_dict(), sort_keys=True) + "\n")
        done[(job.lam, job.seed)] = res
    results = [done[(j.lam, j.seed)] for j in jobs]
    report = compare_baselines(aggregate(results, dataset.fingerprint))
    paths = write_report(out, report)
    dump_resolved(cfg, out / "resolved_config.json")
    marker.unlink()
    _emit({k: str(v) for k, v in paths.items()})
    return 0


def cmd_baseline(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    dataset = cfg.load_dataset()
    if args.kind:
        fields = {k: v for k, v in (("sigma", args.sigma), ("epsilon", args.epsilon),
                                    ("retained_dim", args.retained_dim)) if v is not None}
        sections = [BaselineSection(kind=args.kind, **fields)]
    else:
        sections = cfg.baselines
    if not sections:
        raise UsageError("no baseline given: pass --kind or list baselines in the config")
    points = []
    for section in sections:
        bcfg = cfg.baseline_config(section)
        res = run_baseline(bcfg, dataset)
        path = out / f"features_{bcfg.label.replace('=', '').replace(',', '_').replace('@', '_')}.npz"
        save_features(path, bcfg.label, res.train, res.test, dataset.fingerprint)
        point = evaluate_point(bcfg.label, res.train, res.test, dataset, cfg.eval_spec(), cfg.seeds())
        points.append(point)
        log.info("%s -> %s", bcfg.label, path)
    report = compare_baselines(points)
    write_report(out, report, stem="baselines")
    dump_resolved(cfg, out / "resolved_config.json")
    _emit([dict(r) for r in report.records()])
    return 0


def _features_for(cfg: RunConfig, args, dataset):
    if bool(args.checkpoint) == bool(args.features):
        raise UsageError("pass exactly one of --checkpoint or --features")
    if args.features:
        feats = load_features(args.features)
        if feats.fingerprint != dataset.fingerprint:
            raise ComparisonError(
                f"feature file was computed on dataset {feats.fingerprint}, config resolves to {dataset.fingerprint}")
        return feats.method, feats.train, feats.test
    models, header = load_checkpoint(args.checkpoint)
    fp = header["config"].get("dataset_fingerprint")
    if fp is not None and fp != dataset.fingerprint:
        raise ComparisonError(f"checkpoint was trained on dataset {fp}, config resolves to {dataset.fingerprint}")
    ext = models["extractor"]
    if not isinstance(ext, Extractor):
        raise ConfigError("checkpoint has no extractor model")
    lam = header["config"].get("train", {}).get("lam")
    method = "tiprdc" if lam is None else f"tiprdc@lam={lam:g}"
    return method, extract_features(ext, dataset.train.X), extract_features(ext, dataset.test.X)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    dataset = cfg.load_dataset()
    method, ftr, fte = _features_for(cfg, args, dataset)
    point = evaluate_point(method, ftr, fte, dataset, cfg.eval_spec(), cfg.seeds())
    record = {"point": point.to_dict()}
    if args.audit:
        record["audit"] = adversary_audit(ftr, fte, dataset, cfg.audit.architectures, cfg.seeds(),
                                          cfg.eval_spec()).to_dict()
    (out / "evaluation.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    _emit(record)
    return 0


def cmd_audit(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    dataset = cfg.load_dataset()
    _, ftr, fte = _features_for(cfg, args, dataset)
    audit = adversary_audit(ftr, fte, dataset, cfg.audit.architectures, cfg.seeds(), cfg.eval_spec()).to_dict()
    (out / "audit.json").write_text(json.dumps(audit, indent=2, sort_keys=True) + "\n")
    _emit(audit)
    return 0


def cmd_generate_data(cfg: RunConfig, args) -> int:
    if cfg.dataset.csv is not None:
        raise UsageError("generate-data needs a synthetic dataset source")
    from .datasets import SyntheticSpec

    spec = SyntheticSpec(**cfg.dataset.synthetic) if cfg.dataset.synthetic else preset(cfg.dataset.preset)
    X, u, y = generate_rows(spec)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join([f"f{i}" for i in range(X.shape[1])] + ["u", "y"])
    rows = [",".join([repr(float(v)) for v in X[i]] + [str(int(u[i])), str(int(y[i]))]) for i in range(len(X))]
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    _emit({"path": str(path), "rows": len(X), "features": X.shape[1]})
    return 0


# argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiprdc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML or JSON run config (defaults used when omitted)")
        p.add_argument("--output", help="output directory (overrides config 'output')")
        p.add_argument("--seed", type=int, help="root seed (overrides config 'seed')")
        p.add_argument("--seeds", type=int, help="number of derived seeds (overrides sweep.seeds)")
        p.add_argument("--preset", help="synthetic dataset preset (overrides dataset source)")
        return p

    p = common(sub.add_parser("train", help="pretrain and run hybrid training at one lambda"))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("sweep", help="train and evaluate over the lambda grid"))
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--epochs", type=int)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("baseline", help="run comparison baselines"))
    p.add_argument("--kind", choices=["noisy", "dp", "encoder", "hybrid"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--retained-dim", type=int)
    p.set_defaults(func=cmd_baseline)

    for name, func, helptext in (("evaluate", cmd_evaluate, "retrain classifiers on frozen features"),
                                 ("audit", cmd_audit, "multi-architecture adversary audit")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--checkpoint")
        p.add_argument("--features")
        if name == "evaluate":
            p.add_argument("--audit", action="store_true")
        p.set_defaults(func=func)

    p = common(sub.add_parser("generate-data", help="write a synthetic dataset as CSV"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_data)
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {"output": args.output, "seed": args.seed, "sweep.seeds": args.seeds,
                 "train.lam": getattr(args, "lam", None), "train.epochs": getattr(args, "epochs", None),
                 "sweep.lambdas": getattr(args, "lambdas", None)}
    if args.preset:
        overrides.update({"dataset": {"preset": args.preset}})
    return with_overrides(cfg, **overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        return args.func(cfg, args)
    except (ConfigError, UsageError, ComparisonError) as exc:
        print(f"tiprdc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, OSError, ValueError, RuntimeError) as exc:
        print(f"tiprdc {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
