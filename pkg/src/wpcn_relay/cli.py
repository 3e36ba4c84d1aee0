"""Command-line front end.

Subcommands: ``gen-data``, ``solve``, ``train``, ``distill``, ``search`` and
``evaluate``.  Exit status is 0 on success, 2 on a usage error and 3 on a
runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetMeta, generate_dataset, load_split, normalize, split_path
from .distill import DEFAULT_MENU, SearchConfig, TrainData, dasa, distill_train
from .model import NetworkInstance, sample_instance
from .neural.arch import ARCHITECTURES, STU_NODES, make_arch, make_student
from .neural.network import Model
from .neural.training import TrainConfig, TrainingDivergedError, predict, train
from .scheduler import InfeasibleError, expand_assignment, nl_powmu, verify_schedule
from .selection import METHODS, select

log = logging.getLogger("wpcn_relay")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
REPORT_COLUMNS = ("method", "mean_total", "gap", "runtime", "accuracy")
REFERENCE_NOTES = (
    "reference (4 sources, 2 relays, full-scale training): optimality gap 20% SC-NET, 22% SKIN-NET, 34% OR",
    "reference: relay cooperation shortens the schedule by up to 95% for N=2",
)


class CliError(RuntimeError):
    """A runtime failure with a user-facing message."""


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError(f"expected non-negative integers, got {text!r}")
    return vals


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _write_curves(path: Path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "train_ce", "val_ce"])
        w.writeheader()
        for row in history.to_rows():
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def _dataset_dir(args) -> Path:
    return Path(args.data) if args.data else Path(args.out)


def _dataset_name(args, data_dir: Path) -> str:
    if args.name:
        return args.name
    metas = sorted(data_dir.glob("*.meta.json"))
    if len(metas) != 1:
        raise CliError(f"found {len(metas)} datasets in {data_dir}; pass --name")
    return metas[0].name[: -len(".meta.json")]


def _load_training_data(args) -> tuple[DatasetMeta, TrainData]:
    data_dir = _dataset_dir(args)
    name = _dataset_name(args, data_dir)
    try:
        meta = DatasetMeta.load(split_path(data_dir, name, "meta"))
        tr = load_split(data_dir, name, "train")
        va = load_split(data_dir, name, "val")
    except FileNotFoundError as exc:
        raise CliError(f"dataset not found: {exc.filename}") from None
    return meta, TrainData(normalize(tr.X, meta), tr.y, normalize(va.X, meta), va.y)


def _load_model(path) -> Model:
    try:
        return Model.load(path)
    except FileNotFoundError:
        raise CliError(f"model file not found: {path}") from None


def _norm_ref(meta: DatasetMeta) -> dict:
    return {"n": meta.n, "k": meta.k, "seed": meta.seed, "mean": meta.mean, "std": meta.std}


def _train_cfg(args, lambda1=1.0, lambda2=0.0) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        lambda1=lambda1,
        lambda2=lambda2,
        temperature=getattr(args, "temperature", 1.0),
    )


def _save_training(args, out: Path, stem: str, model: Model, history, meta: DatasetMeta) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / f"{stem}.model.json"
    curves_path = out / f"{stem}.curves.csv"
    model.save(model_path, normalization=_norm_ref(meta))
    _write_curves(curves_path, history)
    return {
        "model": str(model_path),
        "curves": str(curves_path),
        "param_count": model.param_count(),
        "final_val_ce": history.val_ce[-1],
        "final_train_ce": history.train_ce[-1],
    }


def _run_training(fn, args, out: Path, stem: str):
    try:
        return fn()
    except TrainingDivergedError as exc:
        out.mkdir(parents=True, exist_ok=True)
        if exc.history is not None:
            _write_curves(out / f"{stem}.diverged.csv", exc.history)
        raise CliError(f"training diverged: {exc}") from None


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    name = args.name or f"n{args.n}k{args.k}"
    try:
        meta = generate_dataset(
            args.n, args.k, (args.train, args.val, args.test), seed=args.seed,
            out_dir=args.out, name=name, n_jobs=args.jobs,
        )
    except (ValueError, OSError) as exc:
        raise CliError(str(exc)) from None
    payload = {"name": name, "out": str(args.out), "n": meta.n, "k": meta.k, "sizes": meta.sizes, "seed": meta.seed}
    _emit(args, payload, f"wrote dataset {name!r} ({meta.sizes}) to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.instance:
        try:
            inst = NetworkInstance.from_json(Path(args.instance).read_text(encoding="utf-8"))
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read instance: {exc}") from None
    else:
        inst = sample_instance(args.n, args.k, seed=args.seed)
    try:
        res = select(inst, args.method)
    except InfeasibleError as exc:
        raise CliError(f"infeasible instance: {exc}") from None
    report = verify_schedule(inst, res.assignment, res.schedule)
    payload = {
        "method": args.method,
        "assignment": list(res.assignment),
        "schedule": res.schedule.to_dict(),
        "verify": report.to_dict(),
        "nodes_explored": res.nodes_explored,
        "runtime": res.elapsed,
    }
    text = (
        f"method {args.method}: assignment {list(res.assignment)}, "
        f"schedule length {res.total:.6e} s (EH {res.schedule.tau0:.6e} s), "
        f"feasible={report.feasible}"
    )
    _emit(args, payload, text)
    return EXIT_OK if report.feasible else EXIT_RUNTIME


def cmd_train(args) -> int:
    meta, data = _load_training_data(args)
    arch = make_arch(args.arch, meta.n, meta.k)
    out = Path(args.out)
    model, history = _run_training(
        lambda: train(arch, data.X_train, data.y_train, data.X_val, data.y_val, _train_cfg(args)),
        args, out, args.arch,
    )
    payload = _save_training(args, out, args.arch, model, history, meta)
    _emit(args, payload, f"trained {args.arch}: val CE {payload['final_val_ce']:.4f}, model {payload['model']}")
    return EXIT_OK


def cmd_distill(args) -> int:
    meta, data = _load_training_data(args)
    teacher = _load_model(args.teacher)
    student = make_student(args.nodes, meta.n, meta.k, kernel=args.kernel, n_hidden=args.hidden)
    out = Path(args.out)
    stem = args.stem
    cfg = _train_cfg(args, args.lambda1, args.lambda2)
    res = _run_training(lambda: distill_train(teacher, student, data, cfg), args, out, stem)
    payload = _save_training(args, out, stem, res.model, res.history, meta)
    payload["lambda1"], payload["lambda2"] = args.lambda1, args.lambda2
    _emit(args, payload, f"distilled {stem}: val CE {res.val_ce:.4f}, {payload['param_count']} parameters")
    return EXIT_OK


def cmd_search(args) -> int:
    meta, data = _load_training_data(args)
    teacher = _load_model(args.teacher)
    if not teacher.arch.nodes:
        raise CliError("the teacher must be a convolutional network")
    sc = SearchConfig(
        node_menu=args.menu,
        eps_params=args.eps,
        delta_params=args.delta,
        v_threshold=args.vth,
        train=_train_cfg(args, args.lambda1, args.lambda2),
    )
    out = Path(args.out)
    model, trace = _run_training(
        lambda: dasa(teacher, data, sc, log=lambda r: log.info("iteration %d: %s", r.iteration, r)),
        args, out, "dasa",
    )
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "dasa.model.json"
    trace_path = out / "search_trace.json"
    model.save(model_path, normalization=_norm_ref(meta))
    trace_doc = trace.to_dict()
    trace_doc["config"] = sc.to_dict()
    trace_doc["reference"] = "reference: 1508 trainable parameters after 8 iterations (3 sources, 2 relays)"
    trace_path.write_text(json.dumps(trace_doc, indent=2) + "\n", encoding="utf-8")
    payload = {
        "model": str(model_path),
        "trace": str(trace_path),
        "iterations": len(trace.records),
        "teacher_params": trace.teacher_params,
        "param_count": model.param_count(),
        "threshold_met": trace.threshold_met,
    }
    _emit(args, payload, f"search finished after {len(trace.records)} iterations: {model.param_count()} parameters")
    return EXIT_OK


@dataclass
class EvalReport:
    """Per-method means over the test split."""

    rows: list
    n_instances: int
    config: dict = field(default_factory=dict)
    reference: tuple = REFERENCE_NOTES

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in REPORT_COLUMNS])
        for note in self.reference:
            buf.write(f"# {note}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "columns": list(REPORT_COLUMNS),
            "rows": self.rows,
            "n_instances": self.n_instances,
            "config": self.config,
            "reference": list(self.reference),
        }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _time(fn, timing: bool):
    start = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - start if timing else None)


def evaluate(meta: DatasetMeta, test, models: dict, limit=None, timing: bool = True) -> EvalReport:
    """Compare the heuristics and trained models against the optimum.

    Runtimes cover selection plus scheduling of one instance; data and
    model loading are excluded.
    """
    count = len(test) if limit is None else min(limit, len(test))
    insts = [meta.instance(test.X[i]) for i in range(count)]
    X_norm = normalize(test.X[:count], meta)
    totals: dict[str, list] = {}
    times: dict[str, list] = {}
    acc: dict[str, list] = {}

    def record(name, total, runtime, hit=None):
        totals.setdefault(name, []).append(total)
        times.setdefault(name, []).append(runtime)
        if hit is not None:
            acc.setdefault(name, []).append(hit)

    for i, inst in enumerate(insts):
        res, rt = _time(lambda: select(inst, "bba"), timing)
        record("bba", res.total, rt)
        for method in ("or", "criterion", "direct"):
            res, rt = _time(lambda m=method: select(inst, m), timing)
            record(method, res.total, rt)
        for name, model in models.items():
            def run(model=model):
                a = tuple(int(j) for j in predict(model, X_norm[i : i + 1])[0])
                return a, nl_powmu(expand_assignment(inst, a), inst.sys).total
            (a, total), rt = _time(run, timing)
            record(name, total, rt, float(np.mean(np.asarray(a) == test.y[i])))

    opt = np.asarray(totals["bba"])
    rows = []
    for name, vals in totals.items():
        vals = np.asarray(vals)
        rows.append(
            {
                "method": name,
                "mean_total": float(vals.mean()),
                "gap": float(np.mean((vals - opt) / opt)),
                "runtime": float(np.mean(times[name])) if timing else None,
                "accuracy": float(np.mean(acc[name])) if name in acc else None,
            }
        )
    return EvalReport(rows, count)


def cmd_evaluate(args) -> int:
    data_dir = _dataset_dir(args)
    name = _dataset_name(args, data_dir)
    try:
        meta = DatasetMeta.load(split_path(data_dir, name, "meta"))
        test = load_split(data_dir, name, "test")
    except FileNotFoundError as exc:
        raise CliError(f"dataset not found: {exc.filename}") from None
    models = {}
    for path in args.models or ():
        model = _load_model(path)
        if (model.arch.n_sources, model.arch.n_relays) != (meta.n, meta.k):
            raise CliError(f"{path} was built for a different network size")
        label = model.arch.name
        while label in models:
            label += "'"
        models[label] = model
    report = evaluate(meta, test, models, args.limit, timing=not args.no_timing)
    report.config = {
        "dataset": name,
        "n": meta.n,
        "k": meta.k,
        "models": [str(p) for p in args.models or ()],
        "limit": args.limit,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    _emit(args, report.to_dict(), report.to_csv().rstrip("\n"))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_train_flags(p, epochs: int, lambdas: bool) -> None:
    p.add_argument("--data", help="dataset directory (default: --out)")
    p.add_argument("--name", help="dataset name (default: the only one in the directory)")
    p.add_argument("--epochs", type=_nonneg_int, default=epochs)
    p.add_argument("--lr", type=_positive_float, default=1e-3)
    p.add_argument("--batch", type=_positive_int, default=128)
    if lambdas:
        p.add_argument("--lambda1", type=_nonneg_float, default=0.5)
        p.add_argument("--lambda2", type=_nonneg_float, default=0.5)
        p.add_argument("--temperature", type=_positive_float, default=1.0)
        p.add_argument("--teacher", required=True, help="trained teacher model file")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default .)")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print JSON")

    parser = argparse.ArgumentParser(prog="wpcn-relay", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=".")
    parser.add_argument("--json", action="store_true", default=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a labeled dataset")
    p.add_argument("--n", type=_positive_int, default=3)
    p.add_argument("--k", type=_nonneg_int, default=2)
    p.add_argument("--train", type=_positive_int, default=20000)
    p.add_argument("--val", type=_positive_int, default=2000)
    p.add_argument("--test", type=_positive_int, default=1000)
    p.add_argument("--name")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("solve", parents=[common], help="select relays and schedule one instance")
    p.add_argument("--method", choices=sorted(METHODS), default="bba")
    p.add_argument("--n", type=_positive_int, default=3)
    p.add_argument("--k", type=_nonneg_int, default=2)
    p.add_argument("--instance", help="instance JSON file (default: sample one from --seed)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", parents=[common], help="train a network on a dataset")
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="sc-net")
    _add_train_flags(p, 30, lambdas=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("distill", parents=[common], help="distill a student from a teacher")
    _add_train_flags(p, 30, lambdas=True)
    p.add_argument("--nodes", type=_int_list, default=STU_NODES, help="student widths, e.g. 8,8,8,10")
    p.add_argument("--hidden", type=_positive_int, default=1, help="hidden blocks after the stem")
    p.add_argument("--kernel", type=_int_list, default=(2, 2), help="hidden kernel, e.g. 2,2")
    p.add_argument("--stem", default="stu-sc-net", help="output file stem")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("search", parents=[common], help="architecture search under a loss threshold")
    _add_train_flags(p, 20, lambdas=True)
    p.add_argument("--vth", type=_positive_float, default=1.5)
    p.add_argument("--eps", type=_positive_int, default=300)
    p.add_argument("--delta", type=_positive_float, default=None)
    p.add_argument("--menu", type=_int_list, default=DEFAULT_MENU)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", parents=[common], help="benchmark methods on the test split")
    p.add_argument("--data")
    p.add_argument("--name")
    p.add_argument("--models", nargs="*", default=[])
    p.add_argument("--limit", type=_positive_int)
    p.add_argument("--no-timing", action="store_true", help="omit runtimes (byte-stable report)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "distill" and len(args.kernel) != 2:
        print("error: --kernel needs two values", file=sys.stderr)
        return EXIT_USAGE
    if args.command in ("distill", "search") and args.lambda1 + args.lambda2 <= 0:
        print("error: --lambda1 and --lambda2 cannot both be 0", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "search" and 0 not in args.menu:
        print("error: --menu must contain 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
