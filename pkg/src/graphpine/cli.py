"""Command line interface: prep | synth | train | eval | explain | analyze.

Exit codes: 0 on success, 1 on argument/config validation errors (with
usage), 2 on runtime failures (one diagnostic line on stderr). Every
subcommand takes ``--out``; a lockfile in that directory guards against
concurrent invocations writing to the same place.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import export_explanation, propagation_stats
from .config import RunConfig, load_config
from .dataset import Bundle, assemble_sample, load_bundle, write_bundle
from .exceptions import ConfigError, EmptyRecordSet, GraphPineError
from .graph import build_graph, induced_subgraph, load_edge_tsv, load_node_list
from .model import GraphPineModel, predict
from .preprocess import (
    binarize_ic50,
    compute_dti_score,
    compute_gene_stats,
    assemble_node_features,
    preprocess_expression,
    read_dti_tsv,
    read_omics_tsv,
    read_responses_tsv,
    select_genes,
    zero_shot_split,
)
from .synth import SynthSpec, generate
from .train import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train

LOCKFILE = ".graphpine.lock"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


@contextmanager
def _locked_out_dir(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCKFILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise GraphPineError(
            f"output directory {out} is locked by another run (remove {lock} if stale)"
        ) from None
    try:
        os.close(fd)
        yield out
    finally:
        try:
            lock.unlink()
        except OSError:
            pass


def _build_parser() -> _Parser:
    parser = _Parser(prog="graphpine", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prep", help="build a dataset bundle from TSV inputs")
    prep.add_argument("--nodes-file", required=True)
    prep.add_argument("--edges-file", required=True)
    prep.add_argument("--exp", required=True, help="expression TSV (genes x cells)")
    prep.add_argument("--met", required=True, help="methylation TSV")
    prep.add_argument("--mut", required=True, help="binary mutation TSV")
    prep.add_argument("--cnv", required=True, help="copy number TSV")
    prep.add_argument("--dti", required=True, help="drug-target interaction TSV")
    prep.add_argument("--responses", required=True, help="drug/cell log-IC50 TSV")
    prep.add_argument("--out", required=True)
    prep.add_argument("--config", default=None)
    prep.add_argument("--seed", type=int, default=None, help="override prep.seed")

    synth = sub.add_parser("synth", help="generate a synthetic planted-signal bundle")
    synth.add_argument("--nodes", type=int, default=50)
    synth.add_argument("--samples", type=int, default=200)
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--edges", type=int, default=None)
    synth.add_argument("--drugs", type=int, default=None)
    synth.add_argument("--cells", type=int, default=None)
    synth.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train a model on a bundle")
    tr.add_argument("--data", required=True, help="bundle directory")
    tr.add_argument("--out", required=True)
    tr.add_argument("--config", default=None)
    tr.add_argument("--seed", type=int, default=None, help="override train.seed")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a bundle split")
    ev.add_argument("--data", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.add_argument("--config", default=None)

    ex = sub.add_parser("explain", help="export top-k gene explanations for pairs")
    ex.add_argument("--data", required=True)
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument(
        "--pair",
        nargs=2,
        metavar=("DRUG", "CELL"),
        action="append",
        required=True,
        help="drug and cell id; repeat for several pairs",
    )
    ex.add_argument("--top-k", type=int, default=20)

    an = sub.add_parser("analyze", help="propagation statistics over a bundle split")
    an.add_argument("--data", required=True)
    an.add_argument("--checkpoint", required=True)
    an.add_argument("--out", required=True)
    an.add_argument("--split", choices=("train", "val", "test", "all"), default="test")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"graphpine: error: {err}", file=sys.stderr)
        return 1

    try:
        handler = {
            "prep": _cmd_prep,
            "synth": _cmd_synth,
            "train": _cmd_train,
            "eval": _cmd_eval,
            "explain": _cmd_explain,
            "analyze": _cmd_analyze,
        }[args.command]
        return handler(args)
    except ConfigError as err:
        print(f"graphpine: error: {err}", file=sys.stderr)
        return 1
    except GraphPineError as err:
        print(f"graphpine: error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"graphpine: error: {err}", file=sys.stderr)
        return 2


def _model_from_config(cfg: RunConfig, seed: int) -> GraphPineModel:
    m = cfg.model
    return GraphPineModel.build(
        layers=m["layers"],
        hidden=m["hidden"],
        heads=m["heads"],
        alpha=m["alpha"],
        theta=m["theta"],
        dropout=m["dropout"],
        w_bce=m["w_bce"],
        w_imp=m["w_imp"],
        gate_enabled=m["gate_enabled"],
        seed=seed,
    )


def _check_graph_compat(model: GraphPineModel, bundle: Bundle) -> None:
    if model.node_count is not None and model.node_count != bundle.graph.node_count:
        raise GraphPineError(
            f"checkpoint was trained on {model.node_count} nodes but the bundle "
            f"graph has {bundle.graph.node_count}"
        )


def _cmd_prep(args) -> int:
    cfg = load_config(args.config)
    prep_cfg = dict(cfg.prep)
    if args.seed is not None:
        prep_cfg["seed"] = args.seed

    graph = build_graph(load_node_list(args.nodes_file), load_edge_tsv(args.edges_file))
    omics = {
        "exp": preprocess_expression(read_omics_tsv(args.exp, "exp")),
        "met": read_omics_tsv(args.met, "met"),
        "mut": read_omics_tsv(args.mut, "mut"),
        "cnv": read_omics_tsv(args.cnv, "cnv"),
    }
    dti_records = read_dti_tsv(args.dti)
    responses = read_responses_tsv(args.responses)

    if prep_cfg["select_k"] is not None:
        stats = compute_gene_stats(omics, graph, dti_records)
        keep = select_genes(stats, int(prep_cfg["select_k"]))
        graph = induced_subgraph(graph, [graph.index_of(g) for g in keep])

    by_drug: dict[str, list] = {}
    for record in dti_records:
        by_drug.setdefault(record.drug_id, []).append(record)

    importance: dict[str, np.ndarray] = {}
    skipped_drugs: set[str] = set()
    for drug in sorted({r.drug_id for r in responses}):
        try:
            importance[drug] = compute_dti_score(by_drug.get(drug, []), graph.node_ids)
        except EmptyRecordSet:
            skipped_drugs.add(drug)
    if skipped_drugs:
        print(
            f"graphpine: skipping {len(skipped_drugs)} drug(s) without database targets: "
            f"{', '.join(sorted(skipped_drugs))}",
            file=sys.stderr,
        )
    usable = [r for r in responses if r.drug_id not in skipped_drugs]

    split = zero_shot_split(
        usable,
        cell_frac=prep_cfg["cell_frac"],
        drug_frac=prep_cfg["drug_frac"],
        val_frac=prep_cfg["val_frac"],
        seed=prep_cfg["seed"],
    )
    kept_pairs = set(split.train) | set(split.val) | set(split.test)
    feature_cache: dict[str, np.ndarray] = {}
    samples = []
    for r in usable:
        if (r.drug_id, r.cell_id) not in kept_pairs:
            continue
        if r.cell_id not in feature_cache:
            feature_cache[r.cell_id] = assemble_node_features(omics, graph.node_ids, r.cell_id)
        samples.append(
            assemble_sample(
                r.drug_id,
                r.cell_id,
                feature_cache[r.cell_id],
                importance[r.drug_id],
                binarize_ic50(r.log_ic50, prep_cfg["ic50_threshold"]),
                graph,
            )
        )

    with _locked_out_dir(Path(args.out)) as out:
        manifest_path = write_bundle(
            out,
            graph,
            samples,
            split,
            meta={
                "source": "prep",
                "fractions": {
                    "cell": prep_cfg["cell_frac"],
                    "drug": prep_cfg["drug_frac"],
                    "val": prep_cfg["val_frac"],
                },
                "ic50_threshold": prep_cfg["ic50_threshold"],
                "responses_total": len(responses),
                "responses_discarded": len(responses) - len(samples),
                "skipped_drugs": sorted(skipped_drugs),
            },
        )
    print(f"wrote {manifest_path}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        nodes=args.nodes,
        samples=args.samples,
        seed=args.seed,
        edges=args.edges,
        drugs=args.drugs,
        cells=args.cells,
    )
    graph, samples, split = generate(spec)
    with _locked_out_dir(Path(args.out)) as out:
        manifest_path = write_bundle(
            out,
            graph,
            samples,
            split,
            meta={
                "source": "synth",
                "fractions": {
                    "cell": spec.cell_frac,
                    "drug": spec.drug_frac,
                    "val": spec.val_frac,
                },
                "requested_samples": spec.samples,
            },
        )
    print(f"wrote {manifest_path}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    train_cfg = dict(cfg.train)
    if args.seed is not None:
        train_cfg["seed"] = args.seed
    bundle = load_bundle(args.data)
    model = _model_from_config(cfg, seed=train_cfg["seed"])
    config = TrainConfig(
        epochs=train_cfg["epochs"],
        batch_size=train_cfg["batch_size"],
        lr=train_cfg["lr"],
        patience=train_cfg["patience"],
        min_delta=train_cfg["min_delta"],
        seed=train_cfg["seed"],
    )
    with _locked_out_dir(Path(args.out)) as out:
        model, log = train(model, bundle.subset("train"), bundle.subset("val"), config)
        save_checkpoint(model, out / "checkpoint.gpine")
        (out / "trainlog.jsonl").write_text(log.to_jsonl(), encoding="utf-8")
    print(
        f"stopped after {len(log.records)} epochs ({log.stop_reason}), "
        f"best epoch {log.best_epoch}, val loss {log.best_val_loss:.6f}"
    )
    return 0


def _cmd_eval(args) -> int:
    bundle = load_bundle(args.data)
    model = load_checkpoint(args.checkpoint)
    _check_graph_compat(model, bundle)
    samples = bundle.subset(args.split)
    mean_loss, report = evaluate(model, samples)
    payload = {"split": args.split, "samples": len(samples), "loss": mean_loss}
    payload.update(report.to_dict())
    with _locked_out_dir(Path(args.out)) as out:
        (out / "metrics.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    for key in ("loss", "accuracy", "roc_auc", "pr_auc", "precision", "specificity", "npv"):
        value = payload[key]
        print(f"{key:12s} {'undefined' if value is None else f'{value:.4f}'}")
    return 0


def _cmd_explain(args) -> int:
    bundle = load_bundle(args.data)
    model = load_checkpoint(args.checkpoint)
    _check_graph_compat(model, bundle)
    by_pair = {(s.drug_id, s.cell_id): s for s in bundle.samples}
    with _locked_out_dir(Path(args.out)) as out:
        explain_dir = out / "explain"
        explain_dir.mkdir(exist_ok=True)
        for drug, cell in args.pair:
            sample = by_pair.get((drug, cell))
            if sample is None:
                raise GraphPineError(f"pair ({drug}, {cell}) is not in the bundle")
            pred = predict(sample, model)
            explanation = export_explanation(
                drug_id=drug,
                cell_id=cell,
                prob=pred.prob,
                label=pred.label,
                initial=sample.importance,
                final=pred.final_importance,
                graph=bundle.graph,
                k=args.top_k,
            )
            (explain_dir / f"{drug}_{cell}.json").write_text(
                explanation.to_json(), encoding="utf-8"
            )
            (explain_dir / f"{drug}_{cell}.dot").write_text(
                explanation.to_dot(), encoding="utf-8"
            )
    print(f"wrote {len(args.pair)} explanation(s) under {explain_dir}")
    return 0


def _cmd_analyze(args) -> int:
    bundle = load_bundle(args.data)
    model = load_checkpoint(args.checkpoint)
    _check_graph_compat(model, bundle)
    samples = bundle.samples if args.split == "all" else bundle.subset(args.split)
    if not samples:
        raise GraphPineError(f"split {args.split!r} has no samples")
    pairs = []
    for sample in samples:
        pred = predict(sample, model)
        pairs.append((sample.importance, pred.final_importance))
    stats = propagation_stats(pairs)
    with _locked_out_dir(Path(args.out)) as out:
        payload = {"split": args.split, "samples": len(samples)}
        payload.update(stats.to_dict())
        (out / "stats.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(
        f"cosine {stats.cosine:.4f}, rank changed {stats.pct_rank_changed:.2f}%, "
        f"density {stats.density_before:.4f} -> {stats.density_after:.4f}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
