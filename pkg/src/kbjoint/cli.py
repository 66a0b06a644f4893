"""Command line: ``kbjoint train|eval|analyze|ablate``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from .ablation import SETTINGS, run_composition, run_settings
from .autoencoder import coding_sparsity_report
from .composition import constraint_eval, extract_constraints
from .config import TrainConfig, parse_number, read_config_file, write_config_file
from .evaluation import evaluate, oov_fraction
from .kb import ParseError, load_splits
from .model import vectorize
from .persist import ModelFormatError, load_model, save_model
from .training import LOG_HEADER, fit

log = logging.getLogger("kbjoint")

PATH_KEYS = ("train", "valid", "test")

# flag name -> TrainConfig field
_NUMERIC_FLAGS = {
    "d": "d", "c": "c", "eta1": "eta1", "eta2": "eta2", "lambda1": "lambda1",
    "lambda2": "lambda2", "k": "k", "k2": "k2", "rho": "rho", "batch-size": "batch_size",
    "poisson-mean": "poisson_mean", "max-epochs": "max_epochs", "patience": "patience",
    "eval-every": "eval_every", "seed": "seed", "l2-sweeps": "l2_sweeps",
}


class CLIError(Exception):
    pass


class ConfigError(Exception):
    pass


def _number(text):
    try:
        return parse_number(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_data_args(p, required_train=True):
    p.add_argument("--train", required=required_train, help="training triples (TSV)")
    p.add_argument("--valid", help="validation triples (TSV)")
    p.add_argument("--test", help="test triples (TSV)")


def _add_train_args(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    for flag in _NUMERIC_FLAGS:
        p.add_argument(f"--{flag}", type=_number, default=None)
    p.add_argument("--joint", action="store_const", const=True, default=None,
                   help="train jointly with the relation autoencoder")
    p.add_argument("--comp", action="store_const", const=True, default=None,
                   help="compositional (path) training")
    p.add_argument("--no-normalize", dest="normalize", action="store_const", const=False, default=None)
    p.add_argument("--gaussian-init", dest="identity_init", action="store_const", const=False, default=None,
                   help="pure Gaussian relation matrices instead of (I+G)/2")
    p.add_argument("--noise", choices=("uniform", "unigram"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbjoint", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write model.bin + train.log.tsv")
    _add_data_args(p, required_train=False)
    _add_train_args(p)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="threads for validation ranking")

    p = sub.add_parser("eval", help="filtered MR/MRR/H10 on valid and test")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--drop-oov", action="store_true", help="skip triples with unseen entities")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--ranks", help="write per-query ranks to this TSV")
    p.add_argument("--out", help="also write eval.tsv into this directory")

    p = sub.add_parser("analyze", help="export codings, constraints or vectorizations")
    p.add_argument("kind", choices=("codings", "constraints", "vectorizations"))
    p.add_argument("--model", required=True)
    p.add_argument("--train", help="training triples; needed for constraints and vectorizations")
    p.add_argument("--out", help="output directory (default: next to the model)")
    p.add_argument("--min-support", type=int, default=50)
    p.add_argument("--min-jaccard", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0, help="first seed for the random_m2 baseline")
    p.add_argument("--seeds", type=int, default=5, help="number of random_m2 draws")

    p = sub.add_parser("ablate", help="ablation of base settings or compositional strength")
    p.add_argument("kind", choices=("settings", "composition"))
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--settings", help=f"comma list out of {','.join(SETTINGS)}")
    p.add_argument("--poisson-means", default="0,0.5,1.0")
    p.add_argument("--out", default=".")
    return parser


def effective_config(args) -> tuple[TrainConfig, dict[str, str | None]]:
    """Defaults, then the config file, then flags."""
    values = {}
    paths = {key: None for key in PATH_KEYS}
    if getattr(args, "config", None):
        for key, text in read_config_file(args.config).items():
            if key in PATH_KEYS:
                paths[key] = text
                continue
            try:
                values[key] = TrainConfig.coerce(key, text)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{args.config}: {exc}") from exc
    for flag, name in _NUMERIC_FLAGS.items():
        value = getattr(args, flag.replace("-", "_"))
        if value is not None:
            try:
                values[name] = TrainConfig.coerce(name, repr(value))
            except ValueError as exc:
                raise ConfigError(f"--{flag}: {exc}") from exc
    if args.joint is not None:
        values["joint"] = True
    if args.comp is not None:
        values["compositional"] = True
    for name in ("normalize", "identity_init", "noise"):
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    for key in PATH_KEYS:
        if getattr(args, key, None):
            paths[key] = getattr(args, key)
    try:
        config = TrainConfig(**values).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config, paths


def _load_data(paths):
    if not paths.get("train"):
        raise CLIError("no training data given (--train or train= in --config)")
    for key in PATH_KEYS:
        if paths.get(key) and not os.path.isfile(paths[key]):
            raise CLIError(f"cannot read {key} file {paths[key]!r}")
    return load_splits(paths["train"], paths.get("valid"), paths.get("test"))


def cmd_train(args) -> int:
    config, paths = effective_config(args)
    splits = _load_data(paths)
    os.makedirs(args.out, exist_ok=True)
    write_config_file(os.path.join(args.out, "config.txt"), {**paths, **asdict(config)})
    log_path = os.path.join(args.out, "train.log.tsv")
    kb = splits.train
    evaluator = None
    if splits.valid and config.max_epochs > 0:
        def evaluator(p):
            rep = evaluate(splits, p, splits.valid, threads=args.threads)
            return rep.mr, rep.mrr, rep.h10

    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(LOG_HEADER + "\n")

        def on_epoch(row):
            fh.write(row.tsv() + "\n")
            fh.flush()

        result = fit(splits, config, evaluator=evaluator, on_epoch=on_epoch)
    save_model(os.path.join(args.out, "model.bin"), result.params, result.ae, result.state,
               kb.entities, kb.relations)
    log.info("best epoch %d, wrote %s", result.best_epoch, args.out)
    return 0


def _load_compatible(model_path, splits):
    if not os.path.isfile(model_path):
        raise CLIError(f"model file {model_path!r} not found")
    saved = load_model(model_path)
    if splits is not None:
        kb = splits.train
        if len(saved.entities) != kb.n_entities:
            raise ModelFormatError("|E|", f"model has {len(saved.entities)} entities, data has {kb.n_entities}")
        if len(saved.relations) != kb.n_relations:
            raise ModelFormatError("|R|", f"model has {len(saved.relations)} relations, data has {kb.n_relations}")
        if saved.entities != kb.entities:
            raise ModelFormatError("entities", "entity vocabulary differs from the training data")
        if saved.relations != kb.relations:
            raise ModelFormatError("relations", "relation vocabulary differs from the training data")
    return saved


def cmd_eval(args) -> int:
    paths = {key: getattr(args, key) for key in PATH_KEYS}
    splits = _load_data(paths)
    saved = _load_compatible(args.model, splits)
    lines = ["split\tMR\tMRR\tH10"]
    rank_rows = []
    for name, triples in (("valid", splits.valid), ("test", splits.test)):
        if not triples:
            continue
        frac = oov_fraction(splits, triples)
        if frac:
            log.info("%s: %.1f%% triples with OOV entities%s", name, 100 * frac,
                     " (dropped)" if args.drop_oov else "")
        rep = evaluate(splits, saved.params, triples, drop_oov=args.drop_oov, threads=args.threads)
        lines.append(f"{name}\t{rep.mr!r}\t{rep.mrr!r}\t{rep.h10!r}")
        rank_rows.extend((name, i, r) for i, r in enumerate(rep.ranks))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.tsv"), "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.ranks:
        with open(args.ranks, "w", encoding="utf-8") as fh:
            fh.write("split\tquery\trank\n")
            fh.writelines(f"{s}\t{i}\t{r}\n" for s, i, r in rank_rows)
    return 0


def cmd_analyze(args) -> int:
    splits = None
    if args.kind in ("constraints", "vectorizations"):
        if not args.train:
            raise CLIError(f"analyze {args.kind} needs --train")
        splits = _load_data({"train": args.train})
    saved = _load_compatible(args.model, splits)
    out_dir = os.path.join(args.out or os.path.dirname(os.path.abspath(args.model)), "analysis")
    os.makedirs(out_dir, exist_ok=True)
    names = saved.relations
    params = saved.params

    if args.kind == "codings":
        report = coding_sparsity_report(saved.ae, params)
        c = saved.ae.c
        with open(os.path.join(out_dir, "codings.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["relation"] + [f"dim_{i}" for i in range(c)])
            for r, coding, _ in report:
                w.writerow([names[r]] + [repr(float(x)) for x in coding])
        with open(os.path.join(out_dir, "sparsity.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["relation", "dims_for_90pct"])
            for r, _, count in report:
                w.writerow([names[r], count])
        concentrated = sum(1 for *_, count in report if count <= c / 2)
        log.info("%d/%d relations hold 90%% of coding mass in <= %d dims", concentrated, len(report), c // 2)

    elif args.kind == "constraints":
        kb = splits.train
        constraints = extract_constraints(kb, args.min_support, args.min_jaccard)
        with open(os.path.join(out_dir, "constraints.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r1", "r2", "r3", "support", "jaccard"])
            for con in constraints:
                w.writerow([names[con.r1], names[con.r2], names[con.r3], con.support, repr(con.jaccard)])
        rows = []
        if constraints:
            mr, mrr = constraint_eval(params, constraints, "model")
            rows.append(("model", "-", mr, mrr))
            for seed in range(args.seed, args.seed + args.seeds):
                mr, mrr = constraint_eval(params, constraints, "random_m2", np.random.default_rng(seed))
                rows.append(("random_m2", seed, mr, mrr))
        else:
            log.warning("no constraints passed the thresholds")
        with open(os.path.join(out_dir, "constraints_eval.tsv"), "w", encoding="utf-8") as fh:
            fh.write("mode\tseed\tMR\tMRR\n")
            fh.writelines(f"{m}\t{s}\t{mr!r}\t{mrr!r}\n" for m, s, mr, mrr in rows)
        sys.stdout.write(f"{len(constraints)} constraints\n")

    else:
        freq = splits.train.relation_frequency
        d = params.d
        with open(os.path.join(out_dir, "vectorizations.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["relation", "frequency"] + [f"m_{i}" for i in range(d * d)])
            for r, M in enumerate(params.M):
                w.writerow([names[r], int(freq[r])] + [repr(float(x)) for x in vectorize(M)])
    return 0


def cmd_ablate(args) -> int:
    config, paths = effective_config(args)
    splits = _load_data(paths)
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "settings":
        names = args.settings.split(",") if args.settings else None
        rows = run_settings(splits, config, names)
        header = "setting\tMR\tMRR\tH10"
        path = os.path.join(args.out, "ablation_settings.tsv")
    else:
        means = [parse_number(x) for x in args.poisson_means.split(",")]
        rows = run_composition(splits, config, means)
        header = "model\tpoisson_mean\tvalidMR\tvalidMRR\tvalidH10\ttestMR\ttestMRR\ttestH10"
        path = os.path.join(args.out, "ablation_composition.tsv")
    text = header + "\n" + "".join("\t".join(str(x) for x in row) + "\n" for row in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"kbjoint: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (CLIError, ModelFormatError, ParseError, OSError, ValueError, KeyError) as exc:
        print(f"kbjoint: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
