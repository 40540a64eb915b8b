"""Command line: mine patterns, generate datasets, train, predict,
evaluate, and model-check circuits against specifications.

Configuration layering for values not pinned on the command line:
defaults < --config file < flags < environment (LTL2AIG_SEED,
LTL2AIG_WORKERS, LTL2AIG_ORACLE_CMD)."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import (aiger, datagen, evalharness, ltl, mine, model as model_mod,
               specs, synth, tokenizer, verify)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ORACLE = 3

ENV_SEED = "LTL2AIG_SEED"
ENV_WORKERS = "LTL2AIG_WORKERS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class CliDataError(Exception):
    pass


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CliDataError(f"cannot read config file {path}: {e}") from None
    if not isinstance(doc, dict):
        raise CliDataError(f"config file {path} must hold a JSON object")
    return doc


def _layer(defaults: dict, config: dict, flags: dict, env: dict) -> dict:
    merged = dict(defaults)
    for layer in (config, flags, env):
        merged.update({k: v for k, v in layer.items() if v is not None})
    return merged


def _env_overrides() -> dict:
    out = {}
    if os.environ.get(ENV_SEED):
        out["seed"] = int(os.environ[ENV_SEED])
    if os.environ.get(ENV_WORKERS):
        out["workers"] = int(os.environ[ENV_WORKERS])
    return out


def _read_spec_file(path: str) -> specs.Specification:
    try:
        return specs.read_spec(Path(path).read_text())
    except OSError as e:
        raise CliDataError(f"cannot read {path}: {e}") from None
    except specs.SpecError as e:
        raise CliDataError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# Subcommands

def cmd_mine(args) -> int:
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise CliDataError(f"corpus directory {corpus_dir} does not exist")
    corpus = []
    for path in sorted(corpus_dir.glob("*.json")):
        try:
            corpus.append((path.stem, specs.read_spec(path.read_text())))
        except (OSError, specs.SpecError) as e:
            raise CliDataError(f"{path}: {e}") from None
    pool = mine.mine_patterns(corpus)
    Path(args.out).write_text(mine.pool_to_json(pool))
    print(f"mined {len(pool.assumptions)} assumption patterns and "
          f"{len(pool.guarantees)} guarantee patterns "
          f"from {len(corpus)} benchmarks -> {args.out}")
    return EXIT_OK


def _gen_config(args) -> tuple[datagen.GenConfig, synth.OracleConfig, int]:
    config = _load_config_file(args.config)
    env = _env_overrides()
    gen_fields = {f.name for f in dataclasses.fields(datagen.GenConfig)}
    flags = {
        "target_count": args.target,
        "seed": args.seed,
        "oracle_timeout": args.oracle_timeout,
    }
    merged = _layer({}, {k: v for k, v in config.items()
                         if k in gen_fields},
                    flags, {k: v for k, v in env.items() if k in gen_fields})
    for key in ("split_fractions", "inputs", "outputs",
                "instantiation_inputs", "instantiation_outputs"):
        if key in merged and isinstance(merged[key], list):
            merged[key] = tuple(merged[key])
    try:
        gen_cfg = datagen.GenConfig(**merged)
    except (TypeError, datagen.DatagenError) as e:
        raise CliDataError(f"bad generation config: {e}") from None

    oracle_fields = {f.name for f in dataclasses.fields(synth.OracleConfig)}
    oracle_merged = _layer(
        {"mode": "bounded"},
        {k: v for k, v in config.get("oracle", {}).items()
         if k in oracle_fields},
        {"mode": args.oracle, "command": args.oracle_cmd},
        {})
    try:
        oracle_cfg = synth.OracleConfig(**oracle_merged)
    except (TypeError, synth.OracleError) as e:
        raise CliDataError(f"bad oracle config: {e}") from None

    workers = args.workers if args.workers is not None else \
        env.get("workers", os.cpu_count() or 1)
    return gen_cfg, oracle_cfg, workers


def cmd_gen(args) -> int:
    try:
        pool = mine.pool_from_json(Path(args.pool).read_text())
    except (OSError, mine.MineError) as e:
        raise CliDataError(f"cannot load pattern pool: {e}") from None
    gen_cfg, oracle_cfg, workers = _gen_config(args)
    try:
        report = datagen.build_dataset(pool, gen_cfg, oracle_cfg, args.out,
                                       workers=workers)
    except synth.OracleError as e:
        print(f"oracle error: {e}", file=sys.stderr)
        return EXIT_ORACLE
    print(f"dataset -> {args.out}: {report['final']} samples "
          f"({report['unrealizable_count_final']} unrealizable), "
          f"splits {report['split_sizes']}, "
          f"prebalance unrealizable fraction "
          f"{report['unrealizable_fraction_prebalance']:.3f}")
    if not report["target_reached"]:
        print("warning: attempt budget exhausted before the target count",
              file=sys.stderr)
    return EXIT_OK


def _encode_dataset(samples, vocab, model_cfg):
    pairs = []
    for s in samples:
        enc = tokenizer.encode_spec(s.spec, vocab, model_cfg.tree_depth,
                                    model_cfg.prop_length)
        target = tokenizer.encode_circuit(s.circuit, s.status, vocab)
        pairs.append((enc, target))
    return model_mod.encode_batch(pairs, model_cfg, vocab)


def cmd_train(args) -> int:
    config = _load_config_file(args.config)
    env = _env_overrides()
    splits = datagen.load_dataset(args.data)
    if not splits["train"]:
        raise CliDataError(f"no training samples under {args.data}")

    model_fields = {f.name for f in dataclasses.fields(model_mod.ModelConfig)}
    vocab = tokenizer.build_vocabulary()
    merged = _layer(
        {"vocab_size": len(vocab), "d_model": 64, "d_ff": 128,
         "local_layers": 2, "global_layers": 2, "decoder_layers": 2,
         "heads": 2, "max_props": 10, "prop_length": 24,
         "max_target_length": 96, "dropout": 0.1, "tree_depth": 12},
        {k: v for k, v in config.get("model", {}).items()
         if k in model_fields},
        {}, {})
    merged["vocab_size"] = len(vocab)
    opt_fields = {f.name for f in dataclasses.fields(
        model_mod.OptimizerConfig)}
    opt_merged = _layer(
        {"batch_size": 32, "train_steps": 2000, "warmup_steps": 400,
         "eval_every": 100},
        {k: v for k, v in config.get("optimizer", {}).items()
         if k in opt_fields},
        {"train_steps": args.steps, "batch_size": args.batch_size,
         "seed": args.seed},
        {k: v for k, v in env.items() if k in opt_fields})
    try:
        model_cfg = model_mod.ModelConfig(**merged)
        opt_cfg = model_mod.OptimizerConfig(**opt_merged)
    except (TypeError, model_mod.ModelError) as e:
        raise CliDataError(f"bad model config: {e}") from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        train_batch = _encode_dataset(splits["train"], vocab, model_cfg)
        val_batch = (_encode_dataset(splits["val"], vocab, model_cfg)
                     if splits["val"] else None)
    except (tokenizer.TokenizeError, model_mod.ModelError) as e:
        raise CliDataError(f"cannot encode dataset: {e}") from None
    checkpoint = out / "model.npz"
    metrics = out / "metrics.csv"
    model_mod.train(train_batch, val_batch, model_cfg, opt_cfg, vocab,
                    checkpoint, metrics,
                    log=(print if not args.quiet else None))
    (out / "train_config.json").write_text(json.dumps(
        {"model": merged, "optimizer": opt_merged}, indent=2, sort_keys=True))
    print(f"checkpoint -> {checkpoint}, metrics -> {metrics}")
    return EXIT_OK


def _load_model(path: str):
    try:
        return model_mod.load_checkpoint(path)
    except (OSError, ValueError, KeyError) as e:
        raise CliDataError(f"cannot load checkpoint {path}: {e}") from None


def cmd_predict(args) -> int:
    model, vocab = _load_model(args.checkpoint)
    spec = _read_spec_file(args.spec)
    beam = 1 if args.greedy else args.beam
    try:
        enc = tokenizer.encode_spec(spec, vocab, model.cfg.tree_depth,
                                    model.cfg.prop_length)
        batch = model_mod.encode_batch(
            [(enc, [vocab.id(tokenizer.EOS)])], model.cfg, vocab)
    except (tokenizer.TokenizeError, model_mod.ModelError) as e:
        raise CliDataError(f"specification does not fit the model: {e}") \
            from None
    for rank, hyp in enumerate(
            model_mod.beam_search(model, batch, vocab, beam)):
        print(f"# candidate {rank} score {hyp.score:.4f}")
        try:
            status, circuit = tokenizer.decode_circuit(
                list(hyp.token_ids), vocab, n_inputs=len(spec.inputs),
                n_outputs=len(spec.outputs))
        except tokenizer.TokenizeError as e:
            print(f"# unparseable prediction: {e}")
            continue
        print(f"# predicted status: {status.value}")
        sys.stdout.write(aiger.serialize(circuit))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, vocab = _load_model(args.checkpoint)
    splits = datagen.load_dataset(args.data)
    beams = tuple(int(b) for b in args.beams.split(","))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in args.splits.split(","):
        samples = splits.get(name)
        if not samples:
            continue
        reports.append(evalharness.evaluate(
            model, vocab, samples, beams, dataset_name=name,
            verifier_timeout=args.verifier_timeout,
            log=(print if not args.quiet else None)))
    evalharness.write_metrics_csv(reports, out / "metrics.csv")
    evalharness.write_bins_csv(reports, out / "bins.csv")
    evalharness.write_report_json(reports, out / "report.json")
    for report in reports:
        top = report.beam_sizes[-1]
        print(f"{report.dataset}: semantic@{top} "
              f"{report.semantic[top]:.3f}, syntactic@{top} "
              f"{report.syntactic[top]:.3f}, "
              f"token-acc {report.realizability_token_accuracy:.3f}")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        circuit = aiger.parse_aiger(Path(args.circuit).read_text())
    except (OSError, aiger.AigerError) as e:
        raise CliDataError(f"{args.circuit}: {e}") from None
    spec = _read_spec_file(args.spec)
    try:
        if args.roles == "system":
            verdict = verify.check_circuit(
                circuit, specs.to_formula(spec), spec.inputs, spec.outputs,
                timeout=args.timeout)
        else:
            verdict = verify.check_counter_strategy(
                circuit, spec, timeout=args.timeout)
    except verify.VerifyTimeout:
        print("UNKNOWN (verification budget exhausted)")
        return EXIT_OK
    except verify.VerifyError as e:
        raise CliDataError(str(e)) from None
    if verdict.holds:
        print("HOLDS")
    else:
        print("FAILS")
        w = verdict.counterexample
        fmt = lambda letters: " ".join(
            "{" + ",".join(sorted(a)) + "}" for a in letters)
        print(f"counterexample prefix: {fmt(w.prefix)}")
        print(f"counterexample period: {fmt(w.period)}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="ltl2aig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="mine patterns from a corpus of "
                                    "specification JSON files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("gen", help="generate a verified dataset")
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with GenConfig fields and an "
                                    "optional 'oracle' section")
    p.add_argument("--target", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", choices=["bounded", "external"])
    p.add_argument("--oracle-cmd")
    p.add_argument("--oracle-timeout", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the hierarchical model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="emit beam candidates for one spec")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--greedy", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run the evaluation harness")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", default="test")
    p.add_argument("--beams", default="1,4,8,16")
    p.add_argument("--verifier-timeout", type=float, default=10.0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("check", help="model-check an AIGER circuit against "
                                     "a specification")
    p.add_argument("--circuit", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--roles", choices=["system", "env"], default="system")
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except CliDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except synth.OracleError as e:
        print(f"oracle error: {e}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
