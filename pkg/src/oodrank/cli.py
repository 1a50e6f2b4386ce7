"""oodrank command line: gen -> train -> attribute -> eval (-> report-pool).

Every command writes into ``--out-dir`` and records its fully resolved arguments as
``<command>_config.json``. Passing that file back through ``--config`` reproduces the
run. Logs go to stderr; stdout carries a single JSON summary line.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import attribution as A
from . import corpus as C
from . import evaluation as E
from . import model as M
from .factors import FactorKind, InapplicableFactor, factor_value

log = logging.getLogger("oodrank")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

# args that only affect where/how a run executes, never what it produces
RUNTIME_ARGS = {"config", "out_dir", "overwrite", "jobs", "verbose", "command", "handler"}

DEFAULT_SIZES = {"msgs": {"n_train": 1000, "n_ood": 2000, "population_size": 500},
                 "pair": {"n_train": 2000, "n_ood": 2000, "population_size": 600}}

METHOD_ALIASES = {"lime": A.Method.LIME, "kshap": A.Method.KSHAP, "shap": A.Method.KSHAP,
                  "exact": A.Method.EXACT_SHAP, "exact_shap": A.Method.EXACT_SHAP, "ig": A.Method.IG}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def derive_seed(root: int, *names: str) -> int:
    """Child seed for a named stage, stable across platforms."""
    h = hashlib.sha256(":".join([str(root), *names]).encode()).digest()
    return int.from_bytes(h[:4], "little")


def task_family(task: str) -> str:
    return "msgs" if task.startswith("msgs") else "pair"


def parse_method(name: str) -> A.Method:
    key = name.strip().lower()
    if key in METHOD_ALIASES:
        return METHOD_ALIASES[key]
    try:
        return A.Method(name.strip().upper())
    except ValueError:
        raise CliError(f"unknown attribution method {name!r}; choose from lime, kshap, exact, ig",
                       EXIT_USAGE) from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _resolved(args: argparse.Namespace, **extra) -> dict:
    values = {k: v for k, v in vars(args).items() if k not in RUNTIME_ARGS}
    values.update(extra)
    return {"command": args.command, "version": __version__, "args": values}


def _guard(paths, overwrite: bool) -> None:
    taken = [str(p) for p in paths if Path(p).exists()]
    if taken and not overwrite:
        raise CliError(f"refusing to overwrite {', '.join(taken)} (pass --overwrite)", EXIT_USAGE)


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"{what} not found: {path}", EXIT_DATA)
    return path


# --------------------------------------------------------------------------
# gen


def cmd_gen(args) -> dict:
    out = Path(args.out_dir) / "data"
    if args.task not in C.TASKS:
        raise CliError(f"unknown task {args.task!r}; choose from {', '.join(C.TASKS)}", EXIT_USAGE)
    defaults = DEFAULT_SIZES[task_family(args.task)]
    for key, val in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, val)
    if args.stage_seed is None:
        args.stage_seed = derive_seed(args.seed, "gen")
    files = {split: out / f"{split}.jsonl" for split in C.SPLITS}
    _guard([*files.values(), out / "provenance.json"], args.overwrite)

    kw = {}
    if task_family(args.task) == "msgs":
        kw["feature_lexicon"] = args.feature_lexicon
    elif args.agree_rate is not None:
        kw["agree_rate"] = args.agree_rate
    train, ood = C.generate(args.task, args.n_train, args.n_ood, args.stage_seed, **kw)
    pool = C.make_inoculation_pool(args.task, args.pool_size, derive_seed(args.stage_seed, "pool"),
                                   exclude=[train, ood])
    pop = E.draw_population(ood, args.population_size, derive_seed(args.stage_seed, "population"))
    datasets = {"train": train, "ood_full": ood, "ood_population": pop, "inoc_pool": pool}
    for split, ds in datasets.items():
        C.persist(ds, files[split])
        log.info("wrote %s (%d examples)", files[split], len(ds))
    provenance = {"task": args.task, "seed": args.seed, "stage_seed": args.stage_seed,
                  "splits": {k: {"n": len(d), "digest": d.digest(), "provenance": d.provenance}
                             for k, d in datasets.items()},
                  "vocab_digest": train.vocabulary.digest(),
                  "note": "synthetic templates and vocabulary"}
    (out / "provenance.json").write_text(_dump(provenance))
    return {"data_dir": str(out), **{k: len(d) for k, d in datasets.items()}}


# --------------------------------------------------------------------------
# train


def _load_recipes(args, task: str) -> list[M.Recipe]:
    if args.recipes_file:
        obj = json.loads(_need(Path(args.recipes_file), "recipes file").read_text())
        return [M.Recipe.from_json(r) for r in obj]
    family = args.recipe_set or task_family(task)
    overrides = {k: getattr(args, k) for k in ("epochs", "lr", "embed_dim") if getattr(args, k) is not None}
    build = M.msgs_recipes if family == "msgs" else M.pair_recipes
    return build(args.stage_seed, **overrides)


def cmd_train(args) -> dict:
    root = Path(args.out_dir)
    data = Path(args.data_dir) if args.data_dir else root / "data"
    paths = {k: _need(data / f"{k}.jsonl", f"{k} split") for k in ("train", "ood_full", "inoc_pool")}
    if args.stage_seed is None:
        args.stage_seed = derive_seed(args.seed, "train")
    out = root / "suite"
    _guard([out / "suite.json"], args.overwrite)
    ds = {k: C.load(p) for k, p in paths.items()}
    task = ds["train"].provenance.get("task", ds["train"].name)
    recipes = _load_recipes(args, task)
    if args.recipe_set is None and not args.recipes_file:
        args.recipe_set = task_family(task)
    try:
        suite = M.build_suite(ds["train"], ds["ood_full"], recipes, ds["inoc_pool"])
    except ValueError as e:
        raise CliError(str(e), EXIT_NUMERIC if "trained successfully" in str(e) else EXIT_USAGE) from None
    entries = []
    for label, mdl, s, prov in zip(suite.labels, suite.models, suite.ood_performance, suite.provenance):
        path = out / "models" / f"{label}.json"
        M.save_checkpoint(mdl, path)
        entries.append({"label": label, "checkpoint": f"models/{label}.json", "digest": M.file_digest(path),
                        "s": s, **prov})
    manifest = {"v": 1, "task": task, "models": entries, "failures": suite.failures,
                "ood_full_digest": ds["ood_full"].digest(), "vocab_digest": ds["train"].vocabulary.digest()}
    (out / "suite.json").write_text(_dump(manifest))
    for label, err in suite.failures.items():
        log.warning("recipe %s excluded: %s", label, err)
    return {"suite": str(out / "suite.json"), "models": len(entries), "failed": len(suite.failures),
            "s": {e["label"]: e["s"] for e in entries}}


def read_manifest(path: Path) -> dict:
    manifest = json.loads(_need(path, "suite manifest").read_text())
    if manifest.get("v") != 1:
        raise CliError(f"{path}: unsupported manifest version", EXIT_DATA)
    return manifest


# --------------------------------------------------------------------------
# attribute


def _method_cfg(method: A.Method, args):
    seed = args.stage_seed
    if method is A.Method.LIME:
        return A.LimeConfig(n_samples=args.n_samples or 2000, kernel_width=args.kernel_width,
                            ridge_lambda=1e-3 if args.ridge is None else args.ridge, seed=seed)
    if method is A.Method.KSHAP:
        return A.KernelShapConfig(n_samples=args.n_samples or "auto",
                                  ridge_lambda=0.0 if args.ridge is None else args.ridge, seed=seed)
    if method is A.Method.IG:
        return A.IGConfig(steps=args.steps)
    return A.ExactConfig()


def _attribute_model(method, model, label, population, cfg, keep):
    rows, skipped = [], []
    for ex in population:
        if (label, ex.id) in keep:
            continue
        if method is A.Method.EXACT_SHAP and len(C.attributable_positions(ex)) > A.EXACT_MAX_PLAYERS:
            skipped.append(ex.id)
            continue
        rows.append(A.attribute(method, model, ex, cfg, model_label=label))
    return rows, skipped


def cmd_attribute(args) -> dict:
    root = Path(args.out_dir)
    suite_dir = Path(args.suite_dir) if args.suite_dir else root / "suite"
    manifest = read_manifest(suite_dir / "suite.json")
    pop_path = Path(args.population) if args.population else root / "data" / "ood_population.jsonl"
    population = C.load(_need(pop_path, "population"))
    if args.stage_seed is None:
        args.stage_seed = derive_seed(args.seed, "attribute")
    methods = [parse_method(m) for m in args.method]
    args.method = [m.value for m in methods]
    labels = [e["label"] for e in manifest["models"]]
    models = {e["label"]: M.load_checkpoint(_need(suite_dir / e["checkpoint"], "checkpoint"),
                                            population.vocabulary) for e in manifest["models"]}
    out = root / "attributions"
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for method in methods:
        cfg = _method_cfg(method, args)
        digest = A.config_digest(method, cfg)
        path = out / f"{method.value.lower()}.jsonl"
        existing = {}
        if path.exists() and not args.overwrite:
            for r in A.read_store(path, strict=False):
                if r.config_digest == digest and r.method is method:
                    existing[(r.model_label, r.example_id)] = r
            log.info("%s: resuming with %d existing rows", path, len(existing))
        ids = {ex.id for ex in population}
        existing = {k: v for k, v in existing.items() if k[0] in models and k[1] in ids}

        def work(label):
            return _attribute_model(method, models[label], label, population, cfg, existing)

        with open(path, "a" if existing else "w", encoding="utf-8") as fh:
            results = {}
            with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
                for label, (rows, skipped) in zip(labels, pool.map(work, labels)):
                    for r in rows:
                        fh.write(json.dumps(r.to_json()) + "\n")
                    fh.flush()
                    results[label] = (rows, skipped)
                    log.info("%s/%s: %d new rows", method.value, label, len(rows))
        merged = dict(existing)
        n_skipped = 0
        for label, (rows, skipped) in results.items():
            merged.update({(r.model_label, r.example_id): r for r in rows})
            n_skipped += len(skipped)
            for ex_id in skipped:
                log.warning("%s/%s/%s skipped: more than %d attributable tokens", method.value, label,
                            ex_id, A.EXACT_MAX_PLAYERS)
        canonical = [merged[(label, ex.id)] for label in labels for ex in population
                     if (label, ex.id) in merged]
        A.write_store(path, canonical)
        expected = len(labels) * len(population)
        log.info("%s: %d/%d rows", path, len(canonical), expected)
        summary[method.value] = {"store": str(path), "rows": len(canonical), "expected": expected,
                                 "skipped": n_skipped, "config_digest": digest}
    return summary


# --------------------------------------------------------------------------
# eval


def _applicable(kind: FactorKind, population: C.Dataset) -> bool:
    for ex in population:
        meta = ex.meta
        if kind is FactorKind.WINDOW:
            ok = meta.feature_index is not None
        elif kind is FactorKind.FIRST_TOK:
            ok = ex.is_pair and meta.separator_index is not None
        else:
            ok = ex.is_pair and all(getattr(meta, f) is not None for f in kind.required_meta)
        if not ok:
            return False
    return True


def default_factors(population: C.Dataset) -> list[str]:
    return [k.value.lower().replace("_", "-") for k in FactorKind if _applicable(k, population)]


def _method_specs(args, population) -> list[E.MethodSpec]:
    factors = args.factor or default_factors(population)
    args.factor = factors
    specs = []
    for f in factors:
        try:
            if "@" in f:
                name, m = f.split("@", 1)
                specs.append(E.MethodSpec(factor=E.parse_factor(name), attribution=parse_method(m)))
            else:
                for m in args.method:
                    specs.append(E.MethodSpec(factor=E.parse_factor(f), attribution=parse_method(m)))
        except ValueError as e:
            raise CliError(str(e), EXIT_USAGE) from None
    try:
        specs += [E.MethodSpec(baseline=E.parse_baseline(b)) for b in args.baselines]
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE) from None
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise CliError("duplicate ranking methods", EXIT_USAGE)
    return specs


def _write_factor_values(path: Path, specs, labels, population, store, cfg) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example_id", "model", "factor", "value"])
        for sp in specs:
            if sp.factor is None:
                continue
            for label in labels:
                for ex in population:
                    row = A.normalize(store.get(label, ex.id, sp.attribution), cfg.normalization)
                    w.writerow([ex.id, label, sp.name, repr(factor_value(sp.factor, ex, row, cfg.half_width,
                                                                         cfg.surface_fallback))])


def cmd_eval(args) -> dict:
    from . import plots

    root = Path(args.out_dir)
    suite_dir = Path(args.suite_dir) if args.suite_dir else root / "suite"
    manifest = read_manifest(suite_dir / "suite.json")
    pop_path = Path(args.population) if args.population else root / "data" / "ood_population.jsonl"
    population = C.load(_need(pop_path, "population"))
    attr_dir = Path(args.attr_dir) if args.attr_dir else root / "attributions"
    if args.stage_seed is None:
        args.stage_seed = derive_seed(args.seed, "eval")
    args.method = [parse_method(m).value for m in args.method]
    specs = _method_specs(args, population)
    out = root / "eval"
    _guard([out / "report.json", out / "summary.csv"], args.overwrite)

    needed = {sp.attribution for sp in specs if sp.factor is not None}
    needed = sorted(needed or {parse_method(m) for m in args.method}, key=lambda m: m.value)
    rows = []
    for m in needed:
        path = attr_dir / f"{m.value.lower()}.jsonl"
        if not path.exists():
            raise CliError(f"attribution store not found: {path} (run attribute --method {m.value.lower()})",
                           EXIT_DATA)
        rows += A.read_store(path)
    store = E.AttributionStore(rows)
    s = {e["label"]: e["s"] for e in manifest["models"]}
    cfg = E.EvalConfig(B=args.B, n=args.n, seed=args.stage_seed, normalization=args.normalization,
                       half_width=args.half_width, alpha=args.alpha, surface_fallback=args.surface_fallback)
    try:
        report = E.bootstrap_eval(s, population, store, specs, cfg)
    except InapplicableFactor as e:
        raise CliError(f"factor not applicable to this population: {e}", EXIT_USAGE) from None
    report.name = manifest.get("task", report.name)

    obj = report.to_json(include_samples=args.dump_samples)
    prior = [float(x) for x in args.guess_prior.split(",")] if args.guess_prior else None
    if len(s) <= 6:
        obj["guess"] = {"few_shot_accuracy": E.guess_baseline(report.s, prior),
                        "prior": prior or "uniform"}
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    (out / "summary.csv").write_text(report.to_csv())
    if args.export_factors:
        _write_factor_values(out / "factor_values.csv", specs, report.models, population, store, cfg)
    figures = [] if args.no_figures else [str(p) for p in plots.render_all(report, out / "figures")]
    return {"report": str(out / "report.json"), "few_shot": {m: report.few_shot(m) for m in report.methods},
            "figures": len(figures), "excluded_pairs": len(report.excluded_pairs)}


# --------------------------------------------------------------------------
# report-pool


def cmd_report_pool(args) -> dict:
    reports = []
    for p in args.reports:
        rep = E.BootstrapReport.from_json(json.loads(_need(Path(p), "report").read_text()))
        reports.append(rep)
    names = [r.name for r in reports]
    if len(set(names)) != len(names):
        raise CliError(f"reports must come from distinct sets, got {names}", EXIT_USAGE)
    choice = {}
    for item in args.set_dependent or []:
        if "=" not in item:
            raise CliError(f"--set-dependent expects SET=METHOD, got {item!r}", EXIT_USAGE)
        k, v = item.split("=", 1)
        choice[k] = v
    try:
        pooled = E.pooled_report(reports, choice)
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE) from None
    out = Path(args.out_dir)
    _guard([out / "pooled.json", out / "pooled.csv"], args.overwrite)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pooled.json").write_text(json.dumps(pooled.to_json(), indent=1, sort_keys=True) + "\n")
    with open(out / "pooled.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "pooled_accuracy"])
        for m, acc in pooled.accuracies.items():
            w.writerow([m, acc])
        if pooled.set_dependent is not None:
            w.writerow(["SET-DEPENDENT", pooled.set_dependent])
    return {"pooled": str(out / "pooled.json"), "accuracies": pooled.accuracies,
            "set_dependent": pooled.set_dependent}


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed; stage seeds derive from it")
    common.add_argument("--stage-seed", type=int, default=None,
                        help="seed for this stage only (overrides the derived one)")
    common.add_argument("--out-dir", default="run", help="run directory (default: ./run)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (output is job-count independent)")
    common.add_argument("--overwrite", action="store_true", help="replace existing outputs")
    common.add_argument("--config", default=None, help="resolved config JSON from an earlier run")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="oodrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate datasets")
    p.add_argument("--task", required=True, help=f"one of: {', '.join(C.TASKS)}")
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-ood", type=int, default=None)
    p.add_argument("--population-size", type=int, default=None)
    p.add_argument("--pool-size", type=int, default=400, help="inoculation pool size")
    p.add_argument("--feature-lexicon", type=int, default=3,
                   help="msgs tasks: number of distinct feature words per slot class")
    p.add_argument("--agree-rate", type=float, default=None,
                   help="pair tasks: heuristic/label agreement rate in training")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train a model suite")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--recipe-set", choices=["msgs", "pair"], default=None)
    p.add_argument("--recipes-file", default=None, help="JSON list of recipe objects")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("attribute", parents=[common], help="precompute attributions on the population")
    p.add_argument("--method", action="append", default=None, help="lime, kshap, exact or ig (repeatable)")
    p.add_argument("--suite-dir", default=None)
    p.add_argument("--population", default=None)
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--kernel-width", type=float, default=None)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--steps", type=int, default=64, help="IG steps")
    p.set_defaults(handler=cmd_attribute)

    p = sub.add_parser("eval", parents=[common], help="bootstrap ranking evaluation")
    p.add_argument("--suite-dir", default=None)
    p.add_argument("--population", default=None)
    p.add_argument("--attr-dir", default=None)
    p.add_argument("--factor", action="append", default=None,
                   help="factor name, optionally NAME@METHOD (repeatable; default: all applicable)")
    p.add_argument("--method", action="append", default=None,
                   help="attribution method for factors given without @ (default: lime)")
    p.add_argument("--baselines", default="ACC,CONF,CONF_GT,RANDOM")
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--normalization", choices=["RAW", "L1"], default="RAW")
    p.add_argument("--half-width", type=int, default=2)
    p.add_argument("--surface-fallback", action="store_true",
                   help="INDEX_DIFF: match shared words by surface form when metadata is absent")
    p.add_argument("--guess-prior", default=None, help="comma-separated prior over models for GUESS")
    p.add_argument("--dump-samples", action="store_true", help="include per-sample success matrices")
    p.add_argument("--export-factors", action="store_true", help="write per-example factor values CSV")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report-pool", parents=[common], help="pool reports across sets")
    p.add_argument("reports", nargs="+")
    p.add_argument("--set-dependent", action="append", default=None, metavar="SET=METHOD")
    p.set_defaults(handler=cmd_report_pool)
    return parser


def _normalize_lists(args) -> None:
    if args.command == "attribute":
        args.method = args.method or ["lime"]
    if args.command == "eval":
        args.method = args.method or ["lime"]
        if isinstance(args.baselines, str):
            args.baselines = [b for b in args.baselines.split(",") if b]


def parse(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in argv if not a.startswith("-")), None)
        try:
            cfg = json.loads(Path(known.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            parser.error(f"cannot read config {known.config}: {e}")
        if cfg.get("command") != command:
            parser.error(f"config is for {cfg.get('command')!r}, not {command!r}")
        subparser = parser._subparsers._group_actions[0].choices[command]
        actions = {a.dest: a for a in subparser._actions}
        unknown = set(cfg.get("args", {})) - set(actions)
        if unknown:
            parser.error(f"config has unknown keys: {', '.join(sorted(unknown))}")
        for dest in cfg["args"]:
            actions[dest].required = False
        subparser.set_defaults(**cfg["args"])
    args = parser.parse_args(argv)
    _normalize_lists(args)
    return args


def main(argv=None) -> int:
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        summary = args.handler(args)
    except CliError as e:
        log.error("%s", e)
        print(json.dumps({"command": args.command, "status": "error", "exit": e.code, "error": str(e)}))
        return e.code
    except E.IncompleteStore as e:
        log.error("%s", e)
        for row in e.missing:
            log.error("missing: model=%s example=%s method=%s", *row)
        by_method: dict[str, int] = {}
        for row in e.missing:
            by_method[row[2]] = by_method.get(row[2], 0) + 1
        print(json.dumps({"command": args.command, "status": "error", "exit": EXIT_DATA,
                          "missing": len(e.missing), "missing_by_method": by_method}))
        return EXIT_DATA
    except (C.DatasetFormatError, FileNotFoundError) as e:
        log.error("%s", e)
        print(json.dumps({"command": args.command, "status": "error", "exit": EXIT_DATA, "error": str(e)}))
        return EXIT_DATA
    except (M.TrainingDivergence, A.AttributionError, FloatingPointError) as e:
        log.error("%s", e)
        print(json.dumps({"command": args.command, "status": "error", "exit": EXIT_NUMERIC, "error": str(e)}))
        return EXIT_NUMERIC
    config_path = Path(args.out_dir) / f"{args.command.replace('-', '_')}_config.json"
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(_dump(_resolved(args)))
    print(json.dumps({"command": args.command, "status": "ok", "config": str(config_path), **summary},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
