import json

import numpy as np
import pytest

from src.main import build_parser, run


def _run(config, command, *extra):
    return run([command, "--config", str(config), *extra])


def test_parser_knows_every_command():
    parser = build_parser()
    args = parser.parse_args(["train-slots", "--model", "bilstm-crf", "--seed", "4", "--set", "crf.epochs=1"])

    assert args.command == "train-slots"
    assert args.model == "bilstm-crf"
    assert args.seed == 4
    assert args.overrides == ["crf.epochs=1"]


def test_usage_errors_exit_with_config_code(project_config, capsys):
    config = project_config()

    assert run([]) == 1
    assert run(["train-slots", "--config", str(config), "--model", "svm"]) == 1
    assert "error[config]" in capsys.readouterr().err


def test_bad_configuration_exits_with_config_code(project_config, tmp_path, capsys):
    config = project_config()

    assert _run(tmp_path / "absent.yaml", "stats") == 1
    assert _run(config, "stats", "--set", "no-equals-sign") == 1
    assert _run(config, "stats", "--set", "generation.bogus=1") == 1
    assert _run(config, "stats", "--set", "evaluation.k=0") == 1
    assert "error[config]" in capsys.readouterr().err


def test_missing_inputs_exit_with_data_code(project_config, capsys):
    config = project_config()

    # Nothing has been generated yet
    assert _run(config, "generate") == 2
    assert "missing paraphrased pack" in capsys.readouterr().err
    assert _run(config, "train-slots") == 2
    assert _run(config, "evaluate") == 2

    broken = project_config(paths={"pack": "nowhere.json"})
    assert _run(broken, "paraphrase") == 2
    assert "error[data]: missing template pack" in capsys.readouterr().err


def test_generate_is_reproducible(project_config, tmp_path):
    config = project_config(generation={"use_paraphrases": False})

    assert _run(config, "generate") == 0
    first = (tmp_path / "work" / "train.jsonl").read_bytes()
    manifest = json.loads((tmp_path / "work" / "train.jsonl.manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "generate"
    assert set(manifest["outputs"]) == {"train.jsonl", "dev.jsonl", "train_pack.json", "dev_pack.json"}

    assert _run(config, "generate") == 0
    assert (tmp_path / "work" / "train.jsonl").read_bytes() == first

    assert _run(config, "generate", "--seed", "99") == 0
    assert (tmp_path / "work" / "train.jsonl").read_bytes() != first


def test_full_pipeline(project_config, tmp_path, capsys):
    """Every command in order on a tiny configuration"""
    config = project_config()
    work = tmp_path / "work"

    assert _run(config, "paraphrase") == 0
    assert (work / "paraphrased.json.manifest.json").exists()

    assert _run(config, "generate") == 0
    assert len((work / "train.jsonl").read_text(encoding="utf-8").splitlines()) == 120
    assert len((work / "dev.jsonl").read_text(encoding="utf-8").splitlines()) == 40

    assert _run(config, "stats") == 0
    stats = json.loads((work / "stats.json").read_text(encoding="utf-8"))
    assert stats["train"]["n_utterances"] == 120
    assert stats["dev"]["perplexity"] > 1.0
    assert "dev: 40 utterances" in capsys.readouterr().out

    assert _run(config, "embed") == 0
    assert (work / "notes.vec").exists()

    assert _run(config, "train-slots", "--model", "crf") == 0
    assert _run(config, "train-intents") == 0
    assert (work / "slots.json.manifest.json").exists()
    assert (work / "intents.json.manifest.json").exists()

    capsys.readouterr()
    assert _run(config, "evaluate") == 0
    assert "Evaluation: slots" in capsys.readouterr().out
    report = json.loads((work / "report.json").read_text(encoding="utf-8"))
    assert report["n_items"] == 40
    assert len(report["slots"]["span_folds"]["fold_scores"]) == 10
    assert set(report["intents"]["axis_folds"]) == {"result_type", "interpretation", "time", "time_constraint"}

    utterances = tmp_path / "utterances.txt"
    utterances.write_text("quel est le dernier crp ?\n\nla glycémie depuis 3 jours\n", encoding="utf-8")
    output = tmp_path / "predictions.jsonl"
    assert _run(config, "predict", "--input", str(utterances), "--output", str(output)) == 0

    records = [json.loads(line) for line in output.read_text(encoding="utf-8").splitlines()]
    assert [r["text"] for r in records] == ["quel est le dernier crp ?", "la glycémie depuis 3 jours"]
    for record in records:
        assert len(record["tags"]) == len(record["tokens"])
        assert set(record["intents"]) == {"result_type", "interpretation", "time", "time_constraint"}
    assert records[0]["tokens"] == ["quel", "est", "le", "dernier", "crp", "?"]


@pytest.mark.parametrize("model", ["bilstm", "bilstm-crf"])
def test_neural_slot_models_from_the_command_line(project_config, tmp_path, capsys, model):
    config = project_config(generation={"use_paraphrases": False})
    work = tmp_path / "work"

    assert _run(config, "generate") == 0
    assert _run(config, "train-slots", "--model", model) == 0
    assert (work / "slots.json").exists()
    assert (work / "slots.bin").exists()

    # No intent model yet: slots are still scored
    assert _run(config, "evaluate") == 0
    report = json.loads((work / "report.json").read_text(encoding="utf-8"))
    assert report["intents"] is None
    assert 0.0 <= report["slots"]["span_folds"]["mean"] <= 1.0


def test_stats_with_an_empty_test_corpus(project_config, tmp_path, capsys):
    """An empty test split has no perplexity; it is reported as n/a"""
    test_path = tmp_path / "test.jsonl"
    test_path.write_text("", encoding="utf-8")
    config = project_config(generation={"use_paraphrases": False}, paths={"test": str(test_path)})

    assert _run(config, "generate") == 0
    capsys.readouterr()
    assert _run(config, "stats") == 0

    out = capsys.readouterr().out
    assert "test: 0 utterances, 0 tokens, vocab 0, overlap with train 0.000, perplexity n/a" in out
    stats = json.loads((tmp_path / "work" / "stats.json").read_text(encoding="utf-8"))
    assert stats["test"]["perplexity"] is None


@pytest.mark.parametrize("command", [["train-intents"], ["train-slots", "--model", "bilstm"]])
def test_search_manifest_records_the_chosen_point(project_config, tmp_path, command):
    """With a random search the manifest holds the seed the best model was trained with"""
    config = project_config(
        generation={"use_paraphrases": False, "train_count": 40, "dev_count": 20},
        search={"n_points": 2},
    )
    assert _run(config, "generate") == 0
    assert _run(config, *command) == 0

    name = "intents.json" if command[0] == "train-intents" else "slots.json"
    manifest = json.loads((tmp_path / "work" / f"{name}.manifest.json").read_text(encoding="utf-8"))
    point_seeds = {int(s) for s in np.random.default_rng([3, 1]).integers(0, 2 ** 31, size=2)}
    assert manifest["seed"] in point_seeds
    assert set(manifest["extra"]) == {"search_point", "dev_score"}
    assert manifest["extra"]["search_point"]["epochs"] == 1
