import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import sentry_sdk
from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from src.crf.train import TrainOpts, load_crf, save_crf, train_crf
from src.dataset.io import read_corpus, write_corpus
from src.dataset.schema import LabelSchema, default_schema, load_schema
from src.dataset.tokenize import tokenize
from src.embeddings.io import load_vectors, save_vectors
from src.embeddings.skipgram import EmbeddingModel, train_skipgram
from src.embeddings.subword import SubwordConfig
from src.evaluation.base import (
    CnnIntentPredictor,
    CrfSlotPredictor,
    IntentPredictor,
    NeuralSlotPredictor,
    SlotPredictor,
)
from src.evaluation.folds import repeated_kfold
from src.evaluation.report import evaluate, render_report, save_report
from src.evaluation.stats import corpus_stats
from src.generator.generate import generate, split_pack
from src.generator.pack import pack_summary, parse_pack, save_pack
from src.neural.intents import dev_intent_f1, train_intents
from src.neural.search import SearchResult, random_search
from src.neural.serialize import binary_path, load_model, save_model
from src.neural.tagger import dev_span_f1, train_tagger
from src.paraphraser.backends import build_backend
from src.paraphraser.pivot import PivotConfig, paraphrase_pack
from src.utils.config import DEFAULT_CONFIG, ProjectConfig, load_config
from src.utils.errors import BackendError, ConfigError, DataError, NluForgeError
from src.utils.files import atomic_write_text, canonical_json, sha256_file, write_manifest
from src.utils.log import setup_logging

PROG = "nlu-forge"
SLOT_MODELS = ("crf", "bilstm", "bilstm-crf")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError instead of exiting"""

    def error(self, message: str):
        raise ConfigError(message)


def _require(path: Optional[Path], what: str) -> Path:
    if path is None or not Path(path).exists():
        raise DataError(f"missing {what}: {path}")
    return Path(path)


def _schema(config: ProjectConfig) -> LabelSchema:
    if config.paths.schema_file is None:
        return default_schema()
    return load_schema(_require(config.paths.schema_file, "label schema"))


def _manifest(config: ProjectConfig, command: str, seed: Optional[int], inputs, outputs, extra=None):
    outputs = [Path(p) for p in outputs]
    write_manifest(outputs[0], command, config.config_hash(), seed, inputs, outputs, extra)


def _embedding_ref(path: Path) -> dict:
    return {"path": str(path), "sha256": sha256_file(path)}


def _best(results: List[SearchResult]):
    """Model, seed and manifest notes of the top search result"""
    best = results[0]
    return best.model, best.seed, {"search_point": best.point.model_dump(), "dev_score": best.score}


def _maybe_embeddings(config: ProjectConfig, wanted: bool) -> Optional[EmbeddingModel]:
    if not wanted:
        return None
    return load_vectors(_require(config.paths.vectors, "vectors (run embed first)"))


# Commands


def cmd_paraphrase(args, config: ProjectConfig):
    """Augment the template pack with pivot-translation paraphrases"""
    schema = _schema(config)
    pack = parse_pack(_require(config.paths.pack, "template pack"), schema)
    backend = build_backend(
        config.translation.backend,
        synonyms_path=config.paths.synonyms,
        timeout=config.translation.timeout,
        source_lang=config.translation.source_lang,
    )
    pivot = PivotConfig(
        seed=config.pivot.seed,
        n_languages=config.pivot.n_languages,
        language_pool=config.pivot.language_pool,
        source_lang=config.translation.source_lang,
        max_in_flight=config.pivot.max_in_flight,
    )
    result = paraphrase_pack(pack, pivot, backend, schema)
    output = save_pack(result, config.paths.paraphrased_pack)
    _manifest(config, "paraphrase", config.pivot.seed, [config.paths.pack], [output], {"summary": pack_summary(result)})


def cmd_generate(args, config: ProjectConfig):
    """Split the pack into train/dev halves and generate both corpora"""
    gen = config.generation
    schema = _schema(config)
    source = config.paths.paraphrased_pack if gen.use_paraphrases else config.paths.pack
    what = "paraphrased pack (run paraphrase first)" if gen.use_paraphrases else "template pack"
    pack = parse_pack(_require(source, what), schema)

    train_pack, dev_pack = split_pack(pack, gen.template_ratio, gen.mention_ratio, gen.seed)
    outputs = [save_pack(train_pack, config.paths.train_pack), save_pack(dev_pack, config.paths.dev_pack)]

    train = generate(train_pack, gen.train_count, gen.seed + 1, gen.modifier_prob, schema, id_prefix="train")
    dev = generate(dev_pack, gen.dev_count, gen.seed + 2, gen.modifier_prob, schema, id_prefix="dev")
    outputs.insert(0, write_corpus(dev, config.paths.dev))
    outputs.insert(0, write_corpus(train, config.paths.train))
    _manifest(config, "generate", gen.seed, [source], outputs)


def cmd_embed(args, config: ProjectConfig):
    """Train skip-gram vectors on raw text or on the training utterances"""
    emb = config.embedding
    if emb.source == "corpus":
        corpus_path = _require(config.paths.embedding_corpus, "embedding corpus")
        with open(corpus_path, "r", encoding="utf-8") as f:
            lines: List = [line for line in f.read().splitlines() if line.strip()]
    else:
        corpus_path = _require(config.paths.train, "training corpus (run generate first)")
        lines = [u.tokens for u in read_corpus(corpus_path, _schema(config)).utterances]

    cfg = SubwordConfig(
        n_min=emb.n_min,
        n_max=emb.n_max,
        bucket_count=emb.bucket_count,
        enabled=emb.subwords and emb.source == "corpus",
    )
    model = train_skipgram(
        lines,
        dim=emb.dim,
        window=emb.window,
        negatives=emb.negatives,
        epochs=emb.epochs,
        lr=emb.lr,
        cfg=cfg,
        seed=emb.seed,
        min_count=emb.min_count,
        threads=config.threads,
    )
    outputs = save_vectors(model, config.paths.vectors)
    _manifest(config, "embed", emb.seed, [corpus_path], outputs, {"epoch_losses": model.epoch_losses})


def cmd_train_slots(args, config: ProjectConfig):
    """Train the slot tagger selected with --model"""
    schema = _schema(config)
    train = read_corpus(_require(config.paths.train, "training corpus (run generate first)"), schema)
    dev = read_corpus(_require(config.paths.dev, "dev corpus (run generate first)"), schema)
    output = config.paths.slot_model
    inputs = [config.paths.train, config.paths.dev]
    extra = None

    if args.model == "crf":
        embeddings = _maybe_embeddings(config, config.crf.use_embeddings)
        opts = TrainOpts(**config.crf.model_dump(exclude={"use_embeddings", "threads"}), threads=config.threads)
        model = train_crf(train, dev, opts, embeddings, config.paths.vectors if embeddings is not None else None)
        save_crf(model, output)
        seed, outputs = opts.seed, [output]
    else:
        tagger = config.tagger
        output_mode = "crf" if args.model == "bilstm-crf" else "softmax"
        embeddings = _maybe_embeddings(config, tagger.use_embeddings)

        def _train(point, seed):
            return train_tagger(train, dev, point, seed, output_mode, embeddings, tagger.freeze_embeddings)

        if config.search.n_points:
            results = random_search(
                _train, lambda m: dev_span_f1(m, dev), config.search.n_points, config.search.seed,
                base=tagger.point, threads=config.threads,
            )
            model, seed, extra = _best(results)
        else:
            model, seed = _train(tagger.point, tagger.seed), tagger.seed
        if embeddings is not None:
            model.embedding_ref = _embedding_ref(config.paths.vectors)
        save_model(model, output, schema)
        outputs = [output, binary_path(output)]

    if embeddings is not None:
        inputs.append(config.paths.vectors)
    _manifest(config, f"train-slots --model {args.model}", seed, inputs, outputs, extra)


def cmd_train_intents(args, config: ProjectConfig):
    """Train the convolutional intent classifier"""
    schema = _schema(config)
    settings = config.intents
    train = read_corpus(_require(config.paths.train, "training corpus (run generate first)"), schema)
    dev = read_corpus(_require(config.paths.dev, "dev corpus (run generate first)"), schema)
    embeddings = _maybe_embeddings(config, settings.use_embeddings)

    def _train(point, seed):
        return train_intents(
            train, dev, point, seed, pretrained=embeddings,
            shared=settings.shared, freeze_embeddings=settings.freeze_embeddings,
        )

    if config.search.n_points:
        results = random_search(
            _train, lambda m: dev_intent_f1(m, dev), config.search.n_points, config.search.seed,
            base=settings.point, threads=config.threads,
        )
        model, seed, extra = _best(results)
    else:
        model, seed, extra = _train(settings.point, settings.seed), settings.seed, None
    if embeddings is not None:
        model.embedding_ref = _embedding_ref(config.paths.vectors)

    output = config.paths.intent_model
    save_model(model, output, schema)
    inputs = [config.paths.train, config.paths.dev]
    _manifest(config, "train-intents", seed, inputs, [output, binary_path(output)], extra)


def load_slot_predictor(path: Path, schema: Optional[LabelSchema] = None) -> SlotPredictor:
    """Open a CRF or neural slot model, whichever the file holds"""
    path = _require(path, "model")
    try:
        with open(path, "r", encoding="utf-8") as f:
            kind = json.load(f).get("format", "")
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed model file ({e.msg})")
    if kind.startswith("nlu-forge-crf"):
        return CrfSlotPredictor(load_crf(path))
    return NeuralSlotPredictor(load_model(path, schema))


def load_intent_predictor(path: Path, schema: Optional[LabelSchema] = None) -> Optional[IntentPredictor]:
    if not Path(path).exists():
        logger.warning(f"No intent model at {path}; intents are not scored")
        return None
    return CnnIntentPredictor(load_model(path, schema))


def cmd_evaluate(args, config: ProjectConfig):
    """Score the trained models on the test corpus with repeated k-fold intervals"""
    schema = _schema(config)
    slots = load_slot_predictor(config.paths.slot_model, schema)
    intents = load_intent_predictor(config.paths.intent_model, schema)
    test_path = _require(config.paths.test or config.paths.dev, "test corpus")
    test = read_corpus(test_path, schema)

    ev = config.evaluation
    plan = repeated_kfold(len(test), ev.k, ev.repetitions, ev.seed)
    report = evaluate(test, plan, slots, intents, name=Path(config.paths.slot_model).stem, threads=config.threads)
    output = save_report(report, config.paths.report)
    sys.stdout.write(render_report(report))
    inputs = [test_path, config.paths.slot_model, config.paths.intent_model]
    _manifest(config, "evaluate", ev.seed, inputs, [output])


def cmd_stats(args, config: ProjectConfig):
    """Describe the generated corpora: vocabulary, OOV, mentions and perplexity"""
    schema = _schema(config)
    train = read_corpus(_require(config.paths.train, "training corpus (run generate first)"), schema)
    dev = read_corpus(_require(config.paths.dev, "dev corpus (run generate first)"), schema)
    stats: Dict[str, dict] = {
        "train": corpus_stats(train).model_dump(),
        "dev": corpus_stats(dev, reference_corpus=train).model_dump(),
    }
    inputs = [config.paths.train, config.paths.dev]
    if config.paths.test is not None and config.paths.test.exists():
        stats["test"] = corpus_stats(read_corpus(config.paths.test, schema), reference_corpus=train).model_dump()
        inputs.append(config.paths.test)

    output = atomic_write_text(config.paths.stats, canonical_json(stats))
    for name, values in stats.items():
        line = f"{name}: {values['n_utterances']} utterances, {values['n_tokens']} tokens, vocab {values['vocab_size']}"
        if values.get("overlap") is not None:
            perplexity = "n/a" if values["perplexity"] is None else f"{values['perplexity']:.2f}"
            line += f", overlap with train {values['overlap']:.3f}, perplexity {perplexity}"
        sys.stdout.write(line + "\n")
    _manifest(config, "stats", None, inputs, [output])


def cmd_predict(args, config: ProjectConfig):
    """Tag and classify raw utterances, one per line, as JSON lines"""
    schema = _schema(config)
    slots = load_slot_predictor(config.paths.slot_model, schema)
    intents = load_intent_predictor(config.paths.intent_model, schema)

    if args.input:
        with open(_require(Path(args.input), "input file"), "r", encoding="utf-8") as f:
            texts = f.read().splitlines()
    else:
        texts = sys.stdin.read().splitlines()

    lines = []
    for text in texts:
        if not text.strip():
            continue
        tokens = tokenize(text)
        tags, spans = slots.predict_slots(tokens)
        record = {
            "text": text,
            "tokens": tokens,
            "tags": tags,
            "spans": [
                {"start": s.start, "end": s.end, "kind": s.kind, "text": " ".join(tokens[s.start:s.end])}
                for s in spans
            ],
            "intents": intents.predict_intents(tokens) if intents is not None else None,
        }
        lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    if args.output:
        output = atomic_write_text(args.output, "".join(lines))
        inputs = [config.paths.slot_model, config.paths.intent_model] + ([args.input] if args.input else [])
        _manifest(config, "predict", None, inputs, [output])
    else:
        sys.stdout.write("".join(lines))


COMMANDS: Dict[str, Callable] = {
    "paraphrase": cmd_paraphrase,
    "generate": cmd_generate,
    "embed": cmd_embed,
    "train-slots": cmd_train_slots,
    "train-intents": cmd_train_intents,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=DEFAULT_CONFIG, help="Project configuration (YAML)")
    common.add_argument("--seed", type=int, help="Seed for every stage, overrides the config")
    common.add_argument("--threads", type=int, help="Worker threads (1 = fully deterministic)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="Override a config value",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging on the console")

    parser = _Parser(prog=PROG, description="Bootstrap slot-filling and intent models from templates")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, handler in COMMANDS.items():
        command = sub.add_parser(name, parents=[common], help=handler.__doc__)
        command.set_defaults(handler=handler)
        if name == "train-slots":
            command.add_argument("--model", choices=SLOT_MODELS, default="crf")
        if name == "predict":
            command.add_argument("--input", help="Utterances, one per line (default: stdin)")
            command.add_argument("--output", help="JSON-lines output (default: stdout)")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes"""
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config, args.overrides, args.seed, args.threads)
        setup_logging(config.logging.level, config.logging.log_file, args.verbose)
        logger.debug(f"Running {args.command} with config {args.config} (hash {config.config_hash()[:12]})")
        args.handler(args, config)
        return 0
    except NluForgeError as e:
        logger.error(f"{e.kind} error: {e}")
        sys.stderr.write(f"{PROG}: error[{e.kind}]: {e}\n")
        return e.exit_code
    except ValidationError as e:
        first = e.errors()[0]
        error = ConfigError(f"{first['loc'][0] if first['loc'] else 'value'}: {first['msg']}")
        logger.error(f"config error: {error}")
        sys.stderr.write(f"{PROG}: error[{error.kind}]: {error}\n")
        return error.exit_code
    except OSError as e:
        error = BackendError(str(e))
        logger.error(f"I/O error: {e}")
        sys.stderr.write(f"{PROG}: error[{error.kind}]: {e}\n")
        return error.exit_code


def main():
    load_dotenv()
    if sentry_dsn := os.getenv("SENTRY_DSN"):
        sentry_sdk.init(sentry_dsn)
    sys.exit(run())


if __name__ == "__main__":
    main()
