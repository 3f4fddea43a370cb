"""Command-line entry point: ``structbias <subcommand> ...``.

Every run first writes ``manifest.json`` (next to ``--out`` or in the
working directory) holding the resolved arguments, config, seed and input
file hashes, so a run can be replayed exactly. Data goes to files or stdout;
diagnostics go to stderr. Exit status is 0 on success, 1 on input errors
and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

from structbias import __version__
from structbias._backend import backend_name
from structbias.docmodel import ParseError, classify_relation, parse_document, relation_stats

log = logging.getLogger("structbias")

PLACEMENT_CHOICES = ("none", "enc", "dec", "enc-selected", "dec-selected", "tok-linear", "sec-linear")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# file helpers

def _read_json(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None


def _read_records(path: str) -> list:
    """A JSON list, or JSON lines with one object per line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}") from None
    stripped = text.lstrip()
    if stripped.startswith("["):
        return _read_json(path)
    out = []
    for k, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise CliError(f"{path}:{k}: invalid JSON: {e.msg}") from None
    return out


def _load_doc(path: str):
    try:
        return parse_document(_read_json(path))
    except ParseError as e:
        raise CliError(f"{path}: {e}") from None


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)


def _sha256(path: str) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _write_manifest(args, resolved: dict) -> None:
    inputs = {}
    for name in getattr(args, "_inputs", ()):
        value = getattr(args, name, None)
        if value:
            inputs[name] = {"path": str(value), "sha256": _sha256(value)}
    target = args.manifest
    if target is None:
        out = getattr(args, "out", None)
        if out and out != "-":
            p = Path(out)
            base = p if getattr(args, "_out_is_dir", False) else p.parent
        else:
            base = Path.cwd()
        target = base / "manifest.json"
    manifest = {
        "command": args.command,
        "version": __version__,
        "backend": backend_name(),
        "seed": getattr(args, "seed", None),
        "arguments": {k: v for k, v in sorted(vars(args).items())
                      if not k.startswith("_") and k not in ("func", "manifest")},
        "resolved": resolved,
        "inputs": inputs,
    }
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    Path(target).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    cfg = _read_json(args.config)
    if not isinstance(cfg, dict):
        raise CliError(f"{args.config}: config must be a JSON object")
    return cfg


def _override(cls, base: dict, **kw):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(base) - known
    if unknown:
        raise CliError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    merged = dict(base)
    merged.update({k: v for k, v in kw.items() if v is not None})
    try:
        return cls(**merged)
    except (TypeError, ValueError) as e:
        raise CliError(f"{cls.__name__}: {e}") from None


# ---------------------------------------------------------------------------
# document commands

def cmd_positions(args):
    tree = _load_doc(args.doc)
    ids = list(range(tree.n_nodes)) if args.include_root else list(range(1, tree.n_nodes))
    if args.pairs:
        pairs = []
        with open(args.pairs, newline="") as fh:
            for k, row in enumerate(csv.reader(fh), 1):
                if not row or row[0].startswith("#") or row[0] == "src":
                    continue
                try:
                    pairs.append((int(row[0]), int(row[1])))
                except (ValueError, IndexError):
                    raise CliError(f"{args.pairs}:{k}: expected 'src,dst' section ids") from None
    else:
        pairs = [(a, b) for a in ids for b in ids]
    _write_manifest(args, {"n_sections": tree.n_nodes - 1, "n_pairs": len(pairs)})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src_id", "src", "dst_id", "dst", "path_len", "lvl_diff", "relation"])
    for a, b in pairs:
        try:
            kind = classify_relation(tree, a, b)
        except KeyError as e:
            raise CliError(f"unknown section id in pair ({a}, {b}): {e}") from None
        w.writerow([a, tree.label(a), b, tree.label(b), int(tree.path_matrix[a, b]),
                    int(tree.level_matrix[a, b]), kind.label])
    _emit(buf.getvalue(), args.out)


def cmd_relations(args):
    tree = _load_doc(args.doc)
    stats = relation_stats(tree, include_root=args.include_root)
    _write_manifest(args, {})
    report = {
        "section_counts": {k.label: int(v) for k, v in stats.section_counts.items()},
        "token_counts": {k.label: int(v) for k, v in stats.token_counts.items()},
        "selected_share_sections": stats.selected_share("section"),
        "selected_share_tokens": stats.selected_share("token"),
    }
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)


def cmd_sectok(args):
    tree = _load_doc(args.doc).with_section_markers(args.mode)
    _write_manifest(args, {"n_tokens": tree.n_tokens})
    _emit(" ".join(tree.tokens) + "\n", args.out)


# ---------------------------------------------------------------------------
# hierarchy commands

def _load_hier(path: str, rooted: bool = False):
    from structbias.qshier import QSHierarchy
    try:
        h = QSHierarchy.from_json(_read_json(path), "rooted" if rooted else "full")
        h.validate()
    except ValueError as e:
        raise CliError(f"{path}: {e}") from None
    return h


def cmd_linearize(args):
    from structbias.qshier import linearize, render
    h = _load_hier(args.hierarchy, args.rooted)
    _write_manifest(args, {"mode": h.mode})
    _emit(render(linearize(h), args.style) + "\n", args.out)


def cmd_parse(args):
    from structbias.qshier import LinearizationError, parse_linearized
    try:
        text = Path(args.text).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{args.text}: {e.strerror}") from None
    _write_manifest(args, {"mode": "strict" if args.strict else "lenient"})
    try:
        h = parse_linearized(text.split(), "strict" if args.strict else "lenient",
                             rooted=args.rooted, root_question=args.root_question)
    except LinearizationError as e:
        raise CliError(f"{args.text}: token {e.offset}: {e.reason}") from None
    _emit(h.dumps() + "\n", args.out)


def cmd_encode_task(args):
    from structbias.align import build_task_input
    from structbias.qshier import QSHierarchy, encode_task
    records = _read_records(args.corpus)
    _write_manifest(args, {"task": args.task, "n_records": len(records)})
    rows = []
    for k, rec in enumerate(records):
        where = f"{args.corpus}: record {k}"
        if not isinstance(rec, dict) or "document" not in rec or "hierarchy" not in rec:
            raise CliError(f"{where}: needs 'document' and 'hierarchy'")
        try:
            tree = parse_document(rec["document"])
            h = QSHierarchy.from_json(rec["hierarchy"])
            if rec.get("aligned_paragraphs") is not None:
                tree, _ = build_task_input(tree, rec["aligned_paragraphs"])
            samples = encode_task(tree, h, args.task, strict=args.strict,
                                  sample_id=str(rec.get("id", k)))
        except (ParseError, ValueError, IndexError) as e:
            raise CliError(f"{where}: {e}") from None
        for s in samples:
            rows.append({"id": s.id, "task": args.task.replace("-", "_"),
                         "document": tree.to_document(), "prompt": s.prompt, "target": s.target})
    _emit(_jsonl(rows), args.out)


def _samples(path: str):
    from structbias.attention.model import Sample
    out = []
    for k, rec in enumerate(_read_records(path)):
        try:
            tree = parse_document(rec["document"]).with_prefix(rec.get("prompt", []))
        except (KeyError, TypeError, ParseError) as e:
            raise CliError(f"{path}: record {k}: {e}") from None
        out.append((Sample(tree, tuple(rec.get("target", ())), str(rec.get("id", k))), rec))
    if not out:
        raise CliError(f"{path}: no samples")
    return out


# ---------------------------------------------------------------------------
# model commands

def cmd_train(args):
    from structbias.attention import checkpoint
    from structbias.attention.model import ConfigError, ModelConfig, Seq2Seq, Vocab, make_batch
    from structbias.attention.train import TrainingDiverged, train_toy
    cfg_file = _load_config(args)
    pairs = _samples(args.data)
    samples = [s for s, _ in pairs]
    vocab = Vocab.build(samples)
    model_cfg = dict(cfg_file.get("model", {}))
    model_cfg["vocab_size"] = len(vocab)
    try:
        config = _override(ModelConfig, model_cfg, placement=args.placement, seed=args.seed,
                           d_model=args.d_model)
    except ConfigError as e:
        raise CliError(str(e)) from None
    train_cfg = {"steps": 200, "lr": 0.1, "clip_norm": 1.0, "batch_size": 8}
    train_cfg.update(cfg_file.get("train", {}))
    for k in ("steps", "lr", "batch_size"):
        if getattr(args, k) is not None:
            train_cfg[k] = getattr(args, k)
    _write_manifest(args, {"model": config.to_dict(), "train": train_cfg})
    model = Seq2Seq(config)
    bs = int(train_cfg["batch_size"])
    batches = [make_batch(samples[i:i + bs], vocab, config) for i in range(0, len(samples), bs)]
    try:
        trace = train_toy(model, batches, int(train_cfg["steps"]), float(train_cfg["lr"]),
                          train_cfg["clip_norm"])
    except TrainingDiverged as e:
        raise CliError(str(e)) from None
    checkpoint.save(args.out, model, vocab, {"train": train_cfg,
                                             "loss_trace": [float(x) for x in trace]})
    print(f"trained {len(trace)} steps, loss {trace[0]:.4f} -> {trace[-1]:.4f}", file=sys.stderr)


def cmd_decode(args):
    from structbias.attention import checkpoint
    from structbias.attention.decode import decode_hypothesis
    from structbias.qshier import parse_linearized
    try:
        model, vocab, _ = checkpoint.load(args.checkpoint)
    except checkpoint.CheckpointError as e:
        raise CliError(f"{args.checkpoint}: {e}") from None
    pairs = _samples(args.data)
    _write_manifest(args, {"model": model.config.to_dict()})
    rows = []
    for sample, rec in pairs:
        try:
            hyp = decode_hypothesis(model, sample, vocab, args.beam, args.max_len,
                                    args.no_repeat_ngram, args.length_penalty, args.greedy_floor)
        except ValueError as e:
            raise CliError(f"sample {sample.id}: {e}") from None
        tokens = vocab.decode(hyp.ids)
        row = {"id": sample.id, "tokens": tokens, "text": " ".join(tokens),
               "logprob": hyp.logprob}
        if rec.get("task") == "qsgen_hier":
            h = parse_linearized(tokens, "lenient", rooted=True,
                                 root_question=" ".join(rec.get("prompt", [])))
            row["hierarchy"] = h.to_json()
        rows.append(row)
    _emit(_jsonl(rows), args.out)


def _hier_set(path: str) -> dict:
    """``{id: hierarchy}`` from a JSON object, a JSON list or JSON lines of
    ``{"id", "hierarchy"}`` records."""
    from structbias.qshier import QSHierarchy
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}") from None
    except json.JSONDecodeError:
        data = None
    if not (isinstance(data, dict) and "id" not in data and "roots" not in data):
        try:
            data = {str(r["id"]): r["hierarchy"] for r in _read_records(path)}
        except (KeyError, TypeError):
            raise CliError(f"{path}: records need 'id' and 'hierarchy'") from None
    out = {}
    for sid, h in data.items():
        try:
            out[str(sid)] = QSHierarchy.from_json(h)
        except ValueError as e:
            raise CliError(f"{path}: sample {sid}: {e}") from None
    return out


def cmd_eval(args):
    from structbias.metrics import SampleMismatch, evaluate_run
    gen = _hier_set(args.generated)
    ref = _hier_set(args.reference)
    cor = _hier_set(args.corrected) if args.corrected else None
    _write_manifest(args, {"n_samples": len(ref)})
    try:
        report = evaluate_run(gen, ref, cor)
    except SampleMismatch as e:
        raise CliError(f"sample ids differ: {e}") from None
    except ValueError as e:
        raise CliError(str(e)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps() + "\n")
    (out / "report.txt").write_text(report.table())
    (out / "report.csv").write_text(report.csv())
    sys.stdout.write(report.table())


def cmd_align(args):
    from structbias.align import AlignmentConfig, align_summary
    cfg = _override(AlignmentConfig, _load_config(args).get("alignment", {}))
    records = _read_records(args.corpus)
    _write_manifest(args, {"alignment": {"w_embed": cfg.w_embed, "w_bigram": cfg.w_bigram,
                                         "w_entity": cfg.w_entity, "similarity": "tf_cosine"}})
    rows = []
    for k, rec in enumerate(records):
        try:
            tree = parse_document(rec)
            summary = rec["summary_paragraphs"]
        except (ParseError, KeyError, TypeError) as e:
            raise CliError(f"{args.corpus}: record {k}: {e}") from None
        rows.append({"id": rec.get("id", k),
                     "alignments": [a.to_json() for a in align_summary(tree, summary, cfg)]})
    _emit(json.dumps(rows, indent=2, sort_keys=True) + "\n", args.out)


def cmd_filter(args):
    from structbias.align import SelectionConfig, select_paragraphs
    cfg = _override(SelectionConfig, _load_config(args).get("selection", {}),
                    min_sentences=args.min_sentences, min_words=args.min_words,
                    max_normalized_density=args.max_density)
    records = _read_records(args.corpus)
    _write_manifest(args, {"selection": dataclasses.asdict(cfg)})
    try:
        result = select_paragraphs(records, cfg)
    except ParseError as e:
        raise CliError(f"{args.corpus}: {e}") from None
    if args.histogram:
        _emit(result.histogram_csv(), args.histogram)
    _emit(json.dumps([dataclasses.asdict(v) for v in result.verdicts], indent=2) + "\n", args.out)


def cmd_dump_bias(args):
    from structbias.attention import checkpoint
    from structbias.attention.bias import dump_bias_table, grid_to_csv
    try:
        model, _, _ = checkpoint.load(args.checkpoint)
    except checkpoint.CheckpointError as e:
        raise CliError(f"{args.checkpoint}: {e}") from None
    tree = _load_doc(args.doc)
    c = model.config
    key = "bias.enc" if args.side == "enc" else "bias.dec"
    if key not in model.params:
        raise CliError(f"checkpoint has no {args.side} bias table (placement {c.placement!r})")
    kind = c.enc_kind if args.side == "enc" else c.dec_kind
    if kind == "token_linear":
        raise CliError("token-linear tables have no section grid")
    _write_manifest(args, {"placement": c.placement, "kind": kind})
    grid = dump_bias_table(model.params[key], tree, kind, c.clips)
    _emit(grid_to_csv(grid, tree), args.out)


def cmd_probe(args):
    from structbias.probe import format_table, run_probe
    placements = tuple(p.replace("-", "_") for p in args.placements.split(","))
    _write_manifest(args, {"placements": placements})
    rows = run_probe(placements, seed=args.seed, n_train=args.n_train, n_test=args.n_test,
                     steps=args.steps)
    if args.json:
        _emit(json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n", args.json)
    _emit(format_table(rows), args.out)


# ---------------------------------------------------------------------------
# parser

def _placement(text: str) -> str:
    from structbias.attention.model import ConfigError, parse_placement
    try:
        parse_placement(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return text


def _strictness(p, default_strict=True):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="strict", action="store_true", default=default_strict)
    g.add_argument("--lenient", dest="strict", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="structbias", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, inputs, help_, out_is_dir=False):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func, _inputs=inputs, _out_is_dir=out_is_dir)
        p.add_argument("--manifest", help="manifest path (default: next to --out)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON config with model/train/alignment/selection blocks")
        return p

    p = add("positions", cmd_positions, ("doc", "pairs"), "tree positions for section pairs")
    p.add_argument("doc")
    p.add_argument("--pairs", help="CSV of 'src,dst' section ids (default: all ordered pairs)")
    p.add_argument("--include-root", action="store_true")
    p.add_argument("-o", "--out")

    p = add("relations", cmd_relations, ("doc",), "relation-kind statistics")
    p.add_argument("doc")
    p.add_argument("--include-root", action="store_true")
    p.add_argument("-o", "--out")

    p = add("sectok", cmd_sectok, ("doc",), "token sequence with section markers")
    p.add_argument("doc")
    p.add_argument("--mode", choices=("uniform", "leveled"), default="uniform")
    p.add_argument("-o", "--out")

    p = add("linearize", cmd_linearize, ("hierarchy",), "hierarchy JSON to level-token text")
    p.add_argument("hierarchy")
    p.add_argument("--rooted", action="store_true", help="omit the first root question")
    p.add_argument("--style", choices=("plain", "arrows"), default="plain")
    p.add_argument("-o", "--out")

    p = add("parse", cmd_parse, ("text",), "level-token text to hierarchy JSON")
    p.add_argument("text")
    _strictness(p)
    p.add_argument("--rooted", action="store_true")
    p.add_argument("--root-question")
    p.add_argument("-o", "--out")

    p = add("encode-task", cmd_encode_task, ("corpus",), "frame hierarchies as generation samples")
    p.add_argument("corpus", help="records with document, hierarchy and optional aligned_paragraphs")
    p.add_argument("--task", choices=("qsgen-hier", "qsgen-childq"), default="qsgen-hier")
    _strictness(p)
    p.add_argument("-o", "--out")

    p = add("train", cmd_train, ("data", "config"), "train a toy model", out_is_dir=True)
    p.add_argument("data", help="samples from encode-task")
    p.add_argument("--placement", type=_placement, metavar="PLACEMENT",
                   help=f"one of {', '.join(PLACEMENT_CHOICES)}, or an encoder and a "
                        "decoder placement joined by '+'")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--d-model", type=int)
    p.add_argument("-o", "--out", required=True, help="checkpoint directory")

    p = add("decode", cmd_decode, ("data",), "generate from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--no-repeat-ngram", type=int, default=0)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.add_argument("--no-greedy-floor", dest="greedy_floor", action="store_false",
                   help="plain beam search, without the greedy result in the finished pool")
    p.add_argument("-o", "--out")

    p = add("eval", cmd_eval, ("generated", "reference", "corrected"), "score generated hierarchies",
            out_is_dir=True)
    p.add_argument("generated")
    p.add_argument("reference")
    p.add_argument("--corrected", help="human-corrected hierarchies for edit counts")
    p.add_argument("-o", "--out", required=True, help="report directory")

    p = add("align", cmd_align, ("corpus", "config"), "align summary sentences to paragraphs")
    p.add_argument("corpus")
    p.add_argument("-o", "--out")

    p = add("filter", cmd_filter, ("corpus", "config"), "select summary paragraphs")
    p.add_argument("corpus")
    p.add_argument("--min-sentences", type=int)
    p.add_argument("--min-words", type=int)
    p.add_argument("--max-density", type=float)
    p.add_argument("--histogram", help="write the rejection histogram CSV here")
    p.add_argument("-o", "--out")

    p = add("dump-bias", cmd_dump_bias, ("doc",), "section grid of learned biases (x100)")
    p.add_argument("checkpoint")
    p.add_argument("doc")
    p.add_argument("--side", choices=("enc", "dec"), default="enc")
    p.add_argument("-o", "--out")

    p = add("probe", cmd_probe, (), "structure probe across placements")
    p.add_argument("--placements", default="none,enc,tok-linear")
    p.add_argument("--n-train", type=int, default=48)
    p.add_argument("--n-test", type=int, default=32)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--json", help="also write rows as JSON here")
    p.add_argument("-o", "--out")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except CliError as e:
        print(f"structbias {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
