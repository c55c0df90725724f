"""Command line: ingest, train, retrieve, evaluate.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import file_sha256, load_checkpoint, save_checkpoint
from .config import ConfigError, config_hash, dump_defaults, encoder_configs, load_config, train_config
from .corpus import (
    CorpusError, Segment, filter_line_lengths, filter_rare_vocabulary, load_corpus, segment_song, split_dev,
)
from .dataset import Dataset, read_archive, write_archive
from .melody import featurize_melody, fit_quantizers
from .phonetics import OutOfVocabularyError, Phonetics, encode_sequence
from .training import DivergenceError, train

logger = logging.getLogger("mlmatch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, command: str, cfg: dict, inputs: dict, seed, started: str) -> None:
    """RunManifest next to a command's output."""
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "config_hash": config_hash(cfg),
        "config": cfg,
        "input_hashes": {k: file_sha256(v) for k, v in inputs.items() if v and Path(v).is_file()},
        "seed": seed,
        "tool_version": __version__,
        "started_at": started,
        "finished_at": _now(),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


# ingest


def _segments_of(songs, lines: int, phonetics: Phonetics) -> list[Segment]:
    out = []
    for song in songs:
        if song.language != "en":
            logger.info("skipping %s: language %s", song.song_id, song.language)
            continue
        out.extend(segment_song(song, lines, phonetics))
    return out


def cmd_ingest(args, cfg) -> int:
    started = _now()
    d = cfg["data"]
    phonetics = Phonetics.from_file(args.cmudict)
    lines = d["lines_per_segment"]
    dev = _segments_of(load_corpus(args.corpus), lines, phonetics)
    dev, vocab = filter_rare_vocabulary(dev, d["min_count"])
    dev = filter_line_lengths(dev, tuple(d["melody_line_range"]), tuple(d["lyrics_line_range"]))
    train_segs, val_segs = split_dev(dev, d["split_ratio"], d["seed"])
    splits = {"train": train_segs, "validation": val_segs}
    if args.test:
        test = _segments_of(load_corpus(args.test), lines, phonetics)
        splits["test"] = filter_line_lengths(test, tuple(d["melody_line_range"]), tuple(d["lyrics_line_range"]))
    stats = fit_quantizers(s.notes for s in train_segs)
    ds = Dataset(splits, stats, {"lines_per_segment": lines, "vocabulary": vocab})
    write_archive(ds, args.out)
    write_manifest(f"{args.out}.manifest.json", "ingest", cfg,
                   {"corpus": args.corpus, "cmudict": args.cmudict, "test": args.test}, d["seed"], started)
    print(f"Seg{lines}   " + "  ".join(f"{k}={v}" for k, v in ds.counts().items()))
    return EXIT_OK


# train


def cmd_train(args, cfg) -> int:
    started = _now()
    ds = read_archive(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = train_config(cfg)
    mel_cfg, lyr_cfg = encoder_configs(cfg)
    result = train(ds["train"], ds["validation"], mel_cfg, lyr_cfg, tcfg, log_path=out / "train_log.jsonl")
    result.checkpoint.meta["data_sha256"] = file_sha256(args.data)
    save_checkpoint(result.checkpoint, out / "checkpoint.json")
    write_manifest(out / "manifest.json", "train", cfg, {"data": args.data, "config": args.config},
                   tcfg.seed, started)
    print(f"best epoch {result.best_epoch}  val loss {result.checkpoint.meta['best_val_loss']:.4f}")
    print(f"checkpoint {out / 'checkpoint.json'}  sha256 {file_sha256(out / 'checkpoint.json')}")
    return EXIT_OK


# retrieve


def _read_query(args, ds, ckpt, direction):
    """(query features, notes, sylphones, lyrics line ends) for the requested query."""
    if args.query_segment:
        seg = ds.find(args.query_segment)
        if direction == "melody2lyrics":
            return featurize_melody(seg.notes, ckpt.quantizer), seg.notes, None, None
        return encode_sequence(seg.sylphones), None, seg.sylphones, seg.lyrics_line_ends
    doc = json.loads(Path(args.query).read_text(encoding="utf-8"))
    if direction == "melody2lyrics":
        from .corpus import NoteEvent
        notes = doc.get("notes")
        if notes is None:
            notes = [n for line in doc["lines"] for n in line["notes"]]
        events = [NoteEvent(int(n["pitch"]), float(n["onset"]), float(n["duration"])) for n in notes]
        if not events:
            raise CorpusError("query melody has no notes")
        return featurize_melody(events, ckpt.quantizer), events, None, None
    if not args.cmudict:
        raise UsageError("--cmudict is required for text queries")
    texts = doc.get("lines") or doc.get("text", "").splitlines()
    texts = [t["text"] if isinstance(t, dict) else t for t in texts]
    phon = Phonetics.from_file(args.cmudict)
    syls, ends = [], []
    for t in texts:
        line = phon.text_to_sylphones(t)
        if line:
            syls.extend(line)
            ends.append(len(syls) - 1)
    if not syls:
        raise CorpusError("query lyrics are empty")
    return encode_sequence(syls), None, syls, ends


def cmd_retrieve(args, cfg) -> int:
    from .render import alignment_grid
    from .retrieval import build_index, lyrics_candidate, melody_candidate, plain_candidates, rank, sylphone_pool
    import numpy as np

    r = cfg["retrieval"]
    direction = r["direction"]
    ckpt = load_checkpoint(args.ckpt)
    ds = read_archive(args.db)
    segments = [s for name in (args.split or list(ds.splits)) for s in ds[name]]
    if direction == "melody2lyrics":
        cands = [lyrics_candidate(s) for s in segments]
        if args.with_plain:
            cands += plain_candidates(segments, sylphone_pool(segments), np.random.default_rng(args.seed))
        index = build_index(ckpt, cands, "lyrics")
    else:
        index = build_index(ckpt, [melody_candidate(s, ckpt.quantizer) for s in segments], "melody")
    feats, q_notes, q_syls, q_ends = _read_query(args, ds, ckpt, direction)
    matches = rank(feats, index, ckpt, alpha=r["alpha"], keep_fraction=r["keep_fraction"], direction=direction)
    matches = matches[:r["topk"]]

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for k, mt in enumerate(matches, 1):
            out.write(json.dumps(mt.to_json(k)) + "\n")
    finally:
        if args.out:
            out.close()

    blocks = []
    for k, mt in enumerate(matches, 1):
        c = index.entries[mt.candidate_id].candidate
        if direction == "melody2lyrics":
            grid = alignment_grid(q_notes, c.items, mt.path, c.line_ends)
        else:
            grid = alignment_grid(c.items, q_syls, mt.path, q_ends)
        blocks.append(f"#{k} {mt.candidate_id} ({mt.provenance}) cost {mt.regularized_cost:.4f}\n{grid}")
    text = "\n".join(blocks)
    if args.grid:
        Path(args.grid).write_text(text, encoding="utf-8")
    else:
        sys.stderr.write(text)
    if args.out:
        write_manifest(f"{args.out}.manifest.json", "retrieve", cfg,
                       {"ckpt": args.ckpt, "db": args.db, "query": args.query}, args.seed, _now())
    return EXIT_OK


# evaluate


def cmd_evaluate(args, cfg) -> int:
    from .evaluation import evaluate

    started = _now()
    e = cfg["evaluate"]
    ds = read_archive(args.test)
    segments = ds[args.split]
    if not segments:
        raise CorpusError(f"split {args.split!r} of {args.test} is empty")
    ckpt = load_checkpoint(args.ckpt) if args.ckpt else None
    if e["method"] == "mlm" and ckpt is None:
        raise UsageError("--ckpt is required for --method mlm")
    report = evaluate(segments, e["method"], ckpt, with_plain=e["with_plain"], seed=e["seed"],
                      alpha=cfg["retrieval"]["alpha"], keep_fraction=cfg["retrieval"]["keep_fraction"],
                      top=e["top"])
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        write_manifest(f"{args.out}.manifest.json", "evaluate", cfg,
                       {"ckpt": args.ckpt, "test": args.test}, e["seed"], started)
    summary = {k: report[k] for k in ("method", "candidates", "hit@1%", "hit@3%", "hit@5%")}
    print(json.dumps(summary) if args.out else text)
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    from .corpus import write_corpus
    from .synthetic import make_corpus, write_dictionary

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(make_corpus(args.segments, args.lines, seed=args.seed), out / "dev.jsonl")
    write_corpus(make_corpus(args.test_segments, args.lines, seed=args.seed + 1, prefix="test"), out / "test.jsonl")
    write_dictionary(out / "dict.txt")
    print(f"wrote {out / 'dev.jsonl'}, {out / 'test.jsonl'}, {out / 'dict.txt'}")
    return EXIT_OK


def cmd_defaults(args, cfg) -> int:
    sys.stdout.write(dump_defaults())
    return EXIT_OK


# wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mlmatch", description="Melody-lyrics matching")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="YAML config file; flags override it")

    sp = sub.add_parser("ingest", help="segment, filter and featurize a corpus")
    common(sp)
    sp.add_argument("--corpus", required=True, help="development corpus (JSONL file or directory)")
    sp.add_argument("--test", help="optional evaluation corpus")
    sp.add_argument("--cmudict", required=True, help="CMU-format pronouncing dictionary")
    sp.add_argument("--lines", type=int, choices=(4, 8, 12), help="lines per segment")
    sp.add_argument("--min-count", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help="dataset archive to write")
    sp.set_defaults(func=cmd_ingest, overrides=lambda a: {
        "data": {"lines_per_segment": a.lines, "min_count": a.min_count, "seed": a.seed}})

    sp = sub.add_parser("train", help="train the dual encoder")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset archive from ingest")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--preset", choices=("desk", "reference"))
    sp.set_defaults(func=cmd_train, overrides=lambda a: {
        "train": {"seed": a.seed, "epochs": a.epochs, "alpha": a.alpha, "tau": a.tau,
                  "base_lr": a.lr, "batch_size": a.batch_size},
        "encoder": {"preset": a.preset}})

    sp = sub.add_parser("retrieve", help="rank candidates for one query")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--db", required=True, help="dataset archive holding the candidates")
    q = sp.add_mutually_exclusive_group(required=True)
    q.add_argument("--query", help="JSON query file (notes, or lyrics lines)")
    q.add_argument("--query-segment", help="use this segment of --db as the query")
    sp.add_argument("--split", action="append", help="restrict candidates to these splits")
    sp.add_argument("--direction", choices=("melody2lyrics", "lyrics2melody"))
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--topk", type=int)
    sp.add_argument("--keep-fraction", type=float)
    sp.add_argument("--with-plain", action="store_true", help="add plain-text distractors")
    sp.add_argument("--cmudict", help="needed for text queries")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="ranked JSONL (default stdout)")
    sp.add_argument("--grid", help="write the alignment grids here (default stderr)")
    sp.set_defaults(func=cmd_retrieve, overrides=lambda a: {
        "retrieval": {"direction": a.direction, "alpha": a.alpha, "topk": a.topk,
                      "keep_fraction": a.keep_fraction}})

    sp = sub.add_parser("evaluate", help="metric report over a test split")
    common(sp)
    sp.add_argument("--ckpt")
    sp.add_argument("--test", required=True, help="dataset archive")
    sp.add_argument("--split", default="test")
    sp.add_argument("--method", choices=("mlm", "random", "length"))
    sp.add_argument("--with-plain", dest="with_plain", action="store_true", default=None)
    sp.add_argument("--no-plain", dest="with_plain", action="store_false")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--keep-fraction", type=float)
    sp.add_argument("--top", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="report JSON (default stdout)")
    sp.set_defaults(func=cmd_evaluate, overrides=lambda a: {
        "evaluate": {"method": a.method, "with_plain": a.with_plain, "top": a.top, "seed": a.seed},
        "retrieval": {"alpha": a.alpha, "keep_fraction": a.keep_fraction}})

    sp = sub.add_parser("synth", help="write a small learnable synthetic corpus and dictionary")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--segments", type=int, default=500)
    sp.add_argument("--test-segments", type=int, default=50)
    sp.add_argument("--lines", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth, overrides=lambda a: {}, config=None)

    sp = sub.add_parser("defaults", help="print the default config as YAML")
    sp.set_defaults(func=cmd_defaults, overrides=lambda a: {}, config=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides(args))
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"mlmatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"mlmatch: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CorpusError, OutOfVocabularyError, KeyError, ValueError) as exc:
        print(f"mlmatch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
