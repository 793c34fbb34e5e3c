"""Command line entry point: ``synover <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, simgen
from .classifiers import fit_bbc, fit_knn, fit_ks_plugin, fit_logistic, load_model, save_model, sqrt_n_k
from .data import load_csv, save_csv
from .evaluation import am_risk, concentration_audit, load_test_functions, write_rows_csv
from .oversampling import KDEO, PURE, SMOTE, TOPUP, OversamplerConfig, oversample_to_balance
from .rng import EXP_MEAN, EXP_RATE, RngStream


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _label_column(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def cmd_simulate(args) -> int:
    rng = RngStream(args.seed)
    spec = simgen.calibrated_spec(args.family, args.target_p1, d=args.d, n=args.n, mc_size=args.mc_size,
                                  rng=rng.substream(0), cache_path=args.calibration_cache,
                                  exp_convention=args.exp_convention)
    ds = simgen.generate(spec, rng.substream(1))
    save_csv(ds, args.out)
    print(json.dumps({"family": spec.family, "params": spec.params, "n": ds.n, "n1": int(ds.labels.sum())},
                     default=float))
    return 0


def cmd_oversample(args) -> int:
    ds = load_csv(args.input, _label_column(args.label_column))
    mode = TOPUP if args.mode == "topup" else PURE
    cfg = OversamplerConfig(method=args.method, k=args.k, scale=args.scale, mode=mode)
    out = oversample_to_balance(ds, cfg, RngStream(args.seed))
    save_csv(out, args.out, {"synthetic": (out.ids < 0).astype(int)})
    print(json.dumps({"n_in": ds.n, "n_out": out.n, "synthetic": int((out.ids < 0).sum())}))
    return 0


def cmd_train(args) -> int:
    ds = load_csv(args.input, _label_column(args.label_column))
    if args.oversample != "none":
        cfg = OversamplerConfig(method=args.oversample, k=args.k, scale=args.scale,
                                mode=TOPUP if args.mode == "topup" else PURE)
        fit_set = oversample_to_balance(ds, cfg, RngStream(args.seed))
    else:
        fit_set = ds
    K = args.K if args.K is not None else sqrt_n_k(ds.n)
    if args.classifier == "knn":
        model = fit_knn(fit_set, min(K, fit_set.n), args.threshold)
    elif args.classifier == "bbc":
        model = fit_bbc(ds, min(K, ds.n))
    elif args.classifier == "ks":
        model = fit_ks_plugin(fit_set, rate_count="n0" if args.oversample != "none" else "per_class")
    else:
        model = fit_logistic(fit_set, l1_penalty=args.l1_penalty)
    save_model(model, args.model_out)
    print(json.dumps({"classifier": args.classifier, "n_fit": fit_set.n, "model": str(args.model_out)}))
    return 0


def cmd_evaluate(args) -> int:
    ds = load_csv(args.input, _label_column(args.label_column))
    model = load_model(args.model)
    report = am_risk(model.predict(ds.features), ds.labels, beta=args.beta)
    text = json.dumps(report.__dict__, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def _experiment_spec(args) -> harness.ExperimentSpec:
    config = json.loads(Path(args.config).read_text())
    for key in ("seed", "replications", "output", "mc_size", "calibration_cache"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "levels", None):
        config["levels"] = _floats(args.levels)
    return harness.ExperimentSpec.from_dict(config)


def cmd_experiment(args) -> int:
    spec = _experiment_spec(args)
    if not spec.output:
        raise SystemExit("experiment needs an output path (config 'output' or --output)")
    rows = harness.run_experiment(spec, workers=args.workers)
    for s in harness.summarize(rows):
        print(f"{s['method']:<16} p1={s['p1']:<6} mean AM-risk={s['mean_am_risk']:.4f} "
              f"(se {s['stderr']:.4f}, n={s['replications']}, failed={s['failed']})")
    return 0


def cmd_sweep(args) -> int:
    spec = _experiment_spec(args)
    if not spec.output:
        raise SystemExit("sweep needs an output path (config 'output' or --output)")
    values = _ints(args.values) if args.axis == "smote_k" else _floats(args.values)
    rows = harness.sweep(spec, args.axis, values, workers=args.workers)
    for s in harness.summarize(rows):
        print(f"{s['method']:<16} {s['axis']}={s['axis_value']:<6} mean AM-risk={s['mean_am_risk']:.4f}")
    return 0


def cmd_audit(args) -> int:
    if args.family != "ex4":
        raise SystemExit("audit currently samples the ex4 minority marginal only")
    funcs = load_test_functions(d=2)
    rng = RngStream(args.seed)
    rows = []
    for n1 in _ints(args.n1):
        m = args.m if args.m is not None else args.m_factor * n1
        cfg = OversamplerConfig(method=args.method, k=args.k, scale=args.scale)
        reports = concentration_audit(lambda r, n: simgen.sample_ex4_minority(r, n), cfg, n1, m, funcs,
                                      args.reference_size, args.replications, rng.substream(n1))
        rows += [r.to_row() for r in reports]
        sups = [r.sup_discrepancy for r in reports]
        print(f"n1={n1:<6} m={m:<7} median sup discrepancy={np.median(sups):.5f}")
    write_rows_csv(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synover", description="Synthetic minority oversampling experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a calibrated synthetic dataset")
    s.add_argument("--family", required=True)
    s.add_argument("--d", type=int, default=4)
    s.add_argument("--target-p1", type=float, required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mc-size", type=int, default=1_000_000)
    s.add_argument("--exp-convention", choices=(EXP_RATE, EXP_MEAN), default=EXP_RATE)
    s.add_argument("--calibration-cache")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oversample", help="balance a CSV with SMOTE or KDEO")
    o.add_argument("--method", choices=(SMOTE, KDEO), required=True)
    o.add_argument("--k", type=int, default=5)
    o.add_argument("--scale", type=float, default=1.0)
    o.add_argument("--mode", choices=("pure", "topup"), default="pure")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--label-column", default="label")
    o.add_argument("--out", required=True)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oversample)

    t = sub.add_parser("train", help="fit a classifier and save it as JSON")
    t.add_argument("--classifier", choices=("knn", "ks", "lr", "bbc"), required=True)
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--label-column", default="label")
    t.add_argument("--oversample", choices=("none", SMOTE, KDEO), default="none")
    t.add_argument("--k", type=int, default=5)
    t.add_argument("--scale", type=float, default=1.0)
    t.add_argument("--mode", choices=("pure", "topup"), default="pure")
    t.add_argument("--K", type=int)
    t.add_argument("--threshold", type=float, default=0.5)
    t.add_argument("--l1-penalty", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--model-out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="AM-risk of a saved model on a labeled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--label-column", default="label")
    e.add_argument("--beta", type=float, default=0.5)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    for name, func in (("experiment", cmd_experiment), ("sweep", cmd_sweep)):
        x = sub.add_parser(name, help=f"run an {name} from a JSON config")
        x.add_argument("--config", required=True)
        x.add_argument("--seed", type=int)
        x.add_argument("--replications", type=int)
        x.add_argument("--levels", help="comma-separated minority proportions")
        x.add_argument("--mc-size", type=int)
        x.add_argument("--calibration-cache")
        x.add_argument("--output")
        x.add_argument("--workers", type=int, help=f"worker processes (default ${harness.WORKERS_ENV} or 1)")
        if name == "sweep":
            x.add_argument("--axis", choices=("smote_k", "kdeo_scale"), required=True)
            x.add_argument("--values", required=True, help="comma-separated axis values")
        x.set_defaults(func=func)

    a = sub.add_parser("audit", help="concentration audit of synthetic-sample means")
    a.add_argument("--family", default="ex4")
    a.add_argument("--method", choices=(SMOTE, KDEO), required=True)
    a.add_argument("--k", type=int, default=5)
    a.add_argument("--scale", type=float, default=1.0)
    a.add_argument("--n1", default="200,1600", help="comma-separated minority sizes")
    a.add_argument("--m", type=int)
    a.add_argument("--m-factor", type=int, default=4, help="m = factor * n1 when --m is absent")
    a.add_argument("--reference-size", type=int, default=100_000)
    a.add_argument("--replications", type=int, default=50)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
