import sys
import tempfile
from pathlib import Path

from loguru import logger

from src.main import run

CONFIG = Path(__file__).resolve().parent / "config" / "default.yaml"

# Small enough to finish in a minute or two on a laptop
QUICK = [
    "generation.train_count=400",
    "generation.dev_count=100",
    "pivot.n_languages=3",
    "embedding.dim=20",
    "embedding.epochs=1",
    "crf.epochs=3",
    "tagger.use_embeddings=false",
    "tagger.point.epochs=1",
    "intents.point.embedding_dim=20",
    "intents.point.epochs=2",
    "evaluation.repetitions=2",
]

STEPS = [
    ["paraphrase"],
    ["generate"],
    ["stats"],
    ["embed"],
    ["train-slots", "--model", "crf"],
    ["train-intents"],
    ["evaluate"],
]


def test_pipeline(workdir: Path) -> int:
    """Run every stage with the mock translator, writing under workdir"""
    overrides = [
        f"paths.{key}={workdir / name}"
        for key, name in {
            "paraphrased_pack": "paraphrased.json",
            "train_pack": "train_pack.json",
            "dev_pack": "dev_pack.json",
            "train": "train.jsonl",
            "dev": "dev.jsonl",
            "vectors": "notes.vec",
            "slot_model": "slots.json",
            "intent_model": "intents.json",
            "report": "evaluation.json",
            "stats": "stats.json",
        }.items()
    ]
    overrides.append("logging.log_file=null")

    for step in STEPS:
        logger.info(f"Running {' '.join(step)}")
        argv = [*step, "--config", str(CONFIG)]
        for item in QUICK + overrides:
            argv += ["--set", item]
        code = run(argv)
        if code != 0:
            logger.error(f"Step {step[0]} failed with exit code {code}")
            return code
    return 0


if __name__ == "__main__":
    logger.info("Starting pipeline smoke run...")
    with tempfile.TemporaryDirectory() as tmp:
        status = test_pipeline(Path(tmp))
    logger.info("Pipeline smoke run completed" if status == 0 else "Pipeline smoke run failed")
    sys.exit(status)
