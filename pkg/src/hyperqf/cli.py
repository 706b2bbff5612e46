"""Command-line pipeline: ``gen-data``, ``train``, ``eval``, ``gradcheck``, ``analyze`` and ``repro``.

Exit status 0 on success, 1 for invalid configuration or missing inputs,
2 for runtime failures such as training divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from typing import List, Optional, Sequence

from . import evaluate as ev
from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .gradcheck import run_gradcheck
from .model import init_params, load_checkpoint, save_checkpoint
from .synthdata import DatasetFormatError, PairRecord, build_vocab, generate_splits, read_jsonl, stack_patches, write_jsonl
from .textaug import Vocab
from .train import DivergenceError, StepLog, train

log = logging.getLogger("hyperqf")

GRADCHECK_TOL = 1e-4
SUMMARY_FIELDS = ("variant", "TR@1", "TR@5", "TR@10", "IR@1", "IR@5", "IR@10", "selection_entropy",
                  "image_radius_mean", "image_radius_std", "text_radius_mean", "text_radius_std", "final_loss")


class InputError(Exception):
    """Missing or unreadable input file (exit status 1)."""


# ---------------------------------------------------------------------------
# pipeline stages


def dataset_paths(data_dir):
    return os.path.join(data_dir, "train.jsonl"), os.path.join(data_dir, "test.jsonl")


def gen_data(cfg: ExperimentConfig, data_dir) -> List[str]:
    train_recs, test_recs = generate_splits(cfg.data.hierarchy(cfg.seed), cfg.data.n_train, cfg.data.n_test)
    paths = dataset_paths(data_dir)
    write_jsonl(train_recs, paths[0])
    write_jsonl(test_recs, paths[1])
    return list(paths)


def load_split(data_dir, split: str, cfg: ExperimentConfig) -> List[PairRecord]:
    """Read a split, generating the dataset first when the directory has none."""
    path = dataset_paths(data_dir)[0 if split == "train" else 1]
    if not os.path.exists(path):
        gen_data(cfg, data_dir)
    return read_jsonl(path)


def encode_captions(records: Sequence[PairRecord], vocab: Vocab) -> List[List[int]]:
    return [[vocab.id(t) for t in r.tokens] for r in records]


def write_steps(path, logs: Sequence[StepLog]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(StepLog.CSV_FIELDS)
        for entry in logs:
            w.writerow(entry.csv_row())


def run_train(cfg: ExperimentConfig, out_dir, data_dir, variant: Optional[str] = None):
    records = load_split(data_dir, "train", cfg)
    vocab = build_vocab(cfg.data.hierarchy(cfg.seed))
    params = init_params(cfg.model, len(vocab), seed=cfg.seed)
    params, logs = train(stack_patches(records), encode_captions(records, vocab), params,
                         cfg.train_config(), cfg.model)
    os.makedirs(out_dir, exist_ok=True)
    header = {"config": cfg.to_dict(), "variant": variant, "vocab": list(vocab.itos)}
    save_checkpoint(os.path.join(out_dir, "checkpoint.json"), params, header)
    write_steps(os.path.join(out_dir, "steps.csv"), logs)
    return params, logs


def read_checkpoint(path):
    """``(params, experiment config, vocab)`` from a checkpoint written by ``train``."""
    if not os.path.exists(path):
        raise InputError(f"checkpoint file not found: {path}")
    try:
        params, header = load_checkpoint(path)
        cfg = from_dict(header["config"])
        vocab = Vocab.from_list(header["vocab"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a training checkpoint ({exc})") from exc
    return params, cfg, vocab


def _test_inputs(cfg, vocab, data_dir):
    records = load_split(data_dir, "test", cfg)
    return records, stack_patches(records), encode_captions(records, vocab)


def run_eval(params, cfg: ExperimentConfig, vocab, out_dir, data_dir) -> ev.RetrievalReport:
    _, patches, seqs = _test_inputs(cfg, vocab, data_dir)
    report = ev.retrieval_at_k(params, patches, seqs, cfg.model, cfg.loss.similarity, cfg.loss.space, cfg.eval.ks)
    ev.emit_report(out_dir, retrieval=report)
    return report


def run_analyze(params, cfg: ExperimentConfig, vocab, out_dir, data_dir):
    records, patches, seqs = _test_inputs(cfg, vocab, data_dir)
    sel = ev.selection_histogram(params, patches, seqs, cfg.model, cfg.loss.similarity, cfg.loss.space)
    radii = None
    if cfg.loss.space == "hyperbolic":
        radii = ev.radius_report(params, patches, seqs, [r.leaf for r in records], [r.depth for r in records],
                                 cfg.model, cfg.loss.space)
    else:
        log.info("euclidean checkpoint: radius report skipped")
    ev.emit_report(out_dir, selection=sel, radii=radii)
    return sel, radii


def summary_row(name, report: ev.RetrievalReport, sel: ev.SelectionHistogram, radii, logs) -> list:
    row = [name] + [f"{report.tr[k]:.6g}" for k in (1, 5, 10)] + [f"{report.ir[k]:.6g}" for k in (1, 5, 10)]
    row.append(f"{sel.entropy:.6g}")
    if radii is None:
        row += ["", "", "", ""]
    else:
        row += [f"{float(x):.6g}" for x in (radii.image_radius.mean(), radii.image_radius.std(),
                                             radii.text_radius.mean(), radii.text_radius.std())]
    row.append(f"{logs[-1].loss:.6g}")
    return row


def run_repro(cfg: ExperimentConfig, out_dir) -> str:
    data_dir = os.path.join(out_dir, "dataset")
    gen_data(cfg, data_dir)
    rows = []
    for name in cfg.variants:
        vcfg = cfg.variant(name)
        vdir = os.path.join(out_dir, name)
        log.info("variant %s", name)
        params, logs = run_train(vcfg, vdir, data_dir, variant=name)
        vocab = build_vocab(vcfg.data.hierarchy(vcfg.seed))
        report = run_eval(params, vcfg, vocab, vdir, data_dir)
        sel, radii = run_analyze(params, vcfg, vocab, vdir, data_dir)
        rows.append(summary_row(name, report, sel, radii, logs))
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        w.writerows(rows)
    return path


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperqf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config JSON (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    add("gen-data", "write dataset/train.jsonl and dataset/test.jsonl")
    p = add("train", "train one model; writes checkpoint.json and steps.csv")
    p.add_argument("--data", help="dataset directory (default: OUT/dataset)")
    for name, help_text in (("eval", "retrieval metrics; writes retrieval.json"),
                            ("analyze", "query selection and radius reports")):
        p = add(name, help_text)
        p.add_argument("--checkpoint", help="checkpoint path (default: OUT/checkpoint.json)")
        p.add_argument("--data", help="dataset directory (default: OUT/dataset)")
    p = add("gradcheck", "finite-difference check of every differentiable operation")
    p.add_argument("--points", type=int, default=100, help="random points per operation")
    add("repro", "full pipeline over every configured variant; writes summary.csv")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def dispatch(args) -> int:
    cfg = resolve_config(args)
    out = args.out
    data_dir = getattr(args, "data", None) or os.path.join(out, "dataset")
    if args.command == "gen-data":
        for path in gen_data(cfg, data_dir):
            print(path)
    elif args.command == "train":
        _, logs = run_train(cfg, out, data_dir)
        print(f"step {logs[-1].step}: loss {logs[-1].loss:.6g}")
    elif args.command in ("eval", "analyze"):
        ckpt = args.checkpoint or os.path.join(out, "checkpoint.json")
        params, ckpt_cfg, vocab = read_checkpoint(ckpt)
        if args.command == "eval":
            report = run_eval(params, ckpt_cfg, vocab, out, data_dir)
            for key, value in report.as_dict().items():
                print(f"{key}\t{value}")
        else:
            sel, radii = run_analyze(params, ckpt_cfg, vocab, out, data_dir)
            print(f"selection entropy\t{sel.entropy:.6g}")
            if radii is not None:
                print(f"image radius mean\t{radii.image_radius.mean():.6g}")
    elif args.command == "gradcheck":
        if args.points < 1:
            raise ConfigError("--points", "must be >= 1")
        results = run_gradcheck(args.points, cfg.seed, cfg.model.curvature)
        worst = max(results.values())
        for name, err in results.items():
            print(f"{name}\t{err:.6g}\t{'ok' if err < GRADCHECK_TOL else 'FAIL'}")
        if worst >= GRADCHECK_TOL:
            print(f"gradcheck failed: max relative error {worst:.6g}", file=sys.stderr)
            return 2
    elif args.command == "repro":
        print(run_repro(cfg, out))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return dispatch(args)
    except (ConfigError, InputError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (DivergenceError, FloatingPointError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
