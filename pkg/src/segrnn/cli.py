"""``segrnn`` command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage, configuration or data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import autodiff as ad
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, preset
from .dataio import FormatError, load_dataset, read_collapse_map, read_label_tokens, read_manifest
from .decoder import JOINT, MODES
from .lattice import collapse_labels, validate_segmentation
from .model import SegmentalRNN
from .scoring import edit_distance
from .synth import SynthConfig, gen_synthetic

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DATA_ERRORS = (ConfigError, FormatError, CheckpointError, FileNotFoundError, KeyError)

log = logging.getLogger("segrnn")


class UsageError(Exception):
    pass


def _write_lines(path, lines) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _run_config(args) -> RunConfig:
    mode = getattr(args, "subsample_mode", None)
    if args.config:
        cfg = load_config(args.config)
        if mode is not None:
            cfg = replace(cfg, model=replace(cfg.model, encoder=replace(cfg.model.encoder, subsample_mode=mode)))
    else:
        cfg = preset(args.preset, subsample_mode=mode)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "max_epochs", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, max_epochs=args.max_epochs))
    return cfg


# -- commands ---------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(
        vocab_size=args.vocab_size,
        dim=args.dim,
        d_min=args.d_min,
        d_max=args.d_max,
        noise=args.noise,
        j_min=args.j_min,
        j_max=args.j_max,
        num_utterances=args.num,
        num_valid=args.num_valid,
        seed=args.seed,
        allow_repeats=args.allow_repeats,
    )
    paths = gen_synthetic(cfg, args.out)
    for name, p in paths.items():
        print(f"{name}\t{p}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import epoch_line, train

    cfg = _run_config(args)
    train_path = args.train or cfg.train_manifest
    valid_path = args.valid or cfg.valid_manifest
    if not train_path or not valid_path:
        raise UsageError("train needs --train and --valid manifests (or [data] entries in the config)")
    train_set = load_dataset(train_path)
    valid_set = load_dataset(valid_path, vocab=train_set.vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    input_dim = train_set.utterances[0].frames.shape[1]
    model = SegmentalRNN.init(cfg.model_config(), train_set.vocab, input_dim, seed=cfg.train.seed)
    best_path = out / "model.ckpt"
    report_lines = []

    def on_epoch(record):
        line = epoch_line(record)
        report_lines.append(line)
        print(line, flush=True)

    def on_best(m, record):
        save_checkpoint(best_path, m, extra={"epoch": record.epoch, "valid_error": record.valid_error})

    _, report = train(model, cfg.train, train_set.utterances, valid_set.utterances, on_epoch, on_best)
    report.best_checkpoint = str(best_path)
    _write_lines(out / "report.jsonl", report_lines)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"best epoch {report.best_epoch}; checkpoint {best_path}")
    return EXIT_OK


def _decode_one(model: SegmentalRNN, utt, mode: str, factor: int, mapping, target_vocab):
    res = model.decode(utt.frames, mode)
    T = utt.frames.shape[0]
    bounds = [min(b * factor, T) for b in res.segmentation]
    labels = res.labels
    vocab = model.vocab
    if mapping is not None:
        labels, vocab = collapse_labels(labels, mapping), target_vocab
    return utt.utt_id, vocab.decode(labels), res.score, bounds


def cmd_decode(args) -> int:
    model, _ = load_checkpoint(args.model)
    data = load_dataset(args.data, vocab=model.vocab, with_labels=False)
    mapping = target_vocab = None
    collapse = args.collapse or (data.manifest.collapse_path if args.use_manifest_collapse else None)
    if collapse:
        mapping, target_vocab = read_collapse_map(collapse, model.vocab)
    factor = model.config.encoder.factor
    threads = args.threads or os.cpu_count() or 1

    def work(utt):
        return _decode_one(model, utt, args.mode, factor, mapping, target_vocab)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, data.utterances))
    else:
        results = [work(u) for u in data.utterances]
    lines = []
    for (uid, tokens, score, bounds), utt in zip(results, data.utterances):
        if args.mode == JOINT:
            verdict = validate_segmentation(bounds, utt.frames.shape[0])
            if not verdict:
                raise RuntimeError(f"{uid}: decoded segmentation invalid: {verdict.reason}")
        lines.append(f"{uid}\t{' '.join(tokens)}\t{score:.6f}\t{' '.join(map(str, bounds))}")
    _write_lines(args.out, lines)
    return EXIT_OK


def read_hypotheses(path) -> dict[str, list[str]]:
    hyps = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise FormatError(f"{path}:{n}: expected id<TAB>tokens[...]")
        if parts[0] in hyps:
            raise FormatError(f"{path}:{n}: duplicate id {parts[0]!r}")
        hyps[parts[0]] = parts[1].split()
    return hyps


def cmd_eval(args) -> int:
    hyps = read_hypotheses(args.hyp)
    manifest = read_manifest(args.ref)
    refs = {e.utt_id: read_label_tokens(e.labels_path) for e in manifest.entries}
    if set(hyps) != set(refs):
        missing = sorted(set(refs) - set(hyps))
        extra = sorted(set(hyps) - set(refs))
        raise FormatError(f"hypothesis and reference ids differ (missing {missing[:5]}, extra {extra[:5]})")
    if args.collapse:
        from .dataio import read_vocab

        vocab = read_vocab(manifest.vocab_path)
        mapping, target = read_collapse_map(args.collapse, vocab)
        refs = {k: target.decode(collapse_labels(vocab.encode(v), mapping)) for k, v in refs.items()}
    edits = sum(edit_distance(hyps[k], refs[k]) for k in refs)
    length = sum(len(v) for v in refs.values())
    print(f"PER {edits / length:.3f} ({edits} edits / {length} reference labels, {len(refs)} utterances)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, gradcheck

    if args.corrupt:
        with ad.inject_fault(args.corrupt):
            result = gradcheck(args.seed, args.size)
    else:
        result = gradcheck(args.seed, args.size)
    for name, err in result.errors.items():
        print(f"{name:<28}{err:.3e}")
    status = "PASS" if result.passed else "FAIL"
    print(f"gradcheck {args.size} seed={args.seed}: max relative error {result.max_error:.3e} (tolerance {TOLERANCE:g}) {status}")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_selftest(args) -> int:
    from .selftest import format_table, run

    results = run(args.seed)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_speedup(args) -> int:
    from .speedup import format_table, measure

    cfg = load_config(args.config) if args.config else preset("small")
    rows = measure(cfg.model, T=args.T, vocab_size=args.vocab, repeats=args.repeats)
    print(format_table(rows))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="segrnn", description="Segmental RNN training, decoding and verification.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--vocab-size", type=int, default=5)
    g.add_argument("--dim", type=int, default=8)
    g.add_argument("--d-min", type=int, default=2)
    g.add_argument("--d-max", type=int, default=6)
    g.add_argument("--noise", type=float, default=0.3)
    g.add_argument("--j-min", type=int, default=3)
    g.add_argument("--j-max", type=int, default=10)
    g.add_argument("--num", type=int, default=250)
    g.add_argument("--num-valid", type=int, default=50)
    g.add_argument("--allow-repeats", action="store_true", help="let adjacent segments share a label")
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config")
    t.add_argument("--preset", default="small")
    t.add_argument("--subsample-mode", choices=("skip", "concat", "add"))
    t.add_argument("--train")
    t.add_argument("--valid")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--max-epochs", type=int)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", help="decode a manifest with a trained model")
    d.add_argument("--model", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--mode", choices=MODES, default=JOINT)
    d.add_argument("--collapse")
    d.add_argument("--use-manifest-collapse", action="store_true", help=argparse.SUPPRESS)
    d.add_argument("--out", required=True)
    d.add_argument("--threads", type=int, default=1)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="corpus label error rate of a hypothesis file")
    e.add_argument("--hyp", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--collapse")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="compare backward() with finite differences")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--size", choices=("small", "medium"), default="small")
    c.add_argument("--corrupt", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("selftest", help="oracle-equivalence sweep")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)

    r = sub.add_parser("speedup-report", help="time lattice+DP at 0/1/2 subsampling layers")
    r.add_argument("--config")
    r.add_argument("--T", type=int, default=512)
    r.add_argument("--vocab", type=int, default=48)
    r.add_argument("--repeats", type=int, default=3)
    r.set_defaults(func=cmd_speedup)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
