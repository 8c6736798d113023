import json

import numpy as np
import pytest

from semshift.aggregate import load_store_files, read_stores
from semshift.cli import main
from semshift.corpus import GLOBAL_SCOPE
from semshift.tokenizer import SPECIAL_TOKENS


@pytest.fixture
def vocab_file(tmp_path):
    path = tmp_path / "vocab.txt"
    pieces = [
        *SPECIAL_TOKENS,
        "the", "deal", "vote", "a", "b", "##a", "##b", ",", ".", "brexit",
    ]
    path.write_text("\n".join(pieces) + "\n")
    return path


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    docs = [
        {"id": "d1", "date": "2016-06-23", "title": "The deal", "body": "a b ab deal."},
        {"id": "d2", "date": "2016-06-24", "title": "Vote", "body": "the vote, b a"},
        {"id": "d3", "date": "2017-01-02", "title": "Deal vote", "body": "see www.x.y now"},
        {"id": "d4", "date": "1999-01-01", "title": "Old", "body": "outside periods"},
    ]
    with open(path, "w") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    return path


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse rejects bad flags with status 2
        return exc.code


class TestPrepare:
    def test_brexit_preset_counts(self, tmp_path, corpus_file, vocab_file, capsys):
        out = tmp_path / "out"
        code = run(
            "prepare", "--corpus", corpus_file, "--vocab", vocab_file,
            "--preset", "brexit", "--lowercase", "--out-dir", out,
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "pre-referendum" in printed
        assert "Entire corpus" in printed
        assert "1 document(s) outside all periods" in printed
        stats = json.loads((out / "prepare_stats.json").read_text())
        by_period = {row["period"]: row for row in stats["periods"]}
        assert by_period["pre-referendum"]["documents"] == 1
        assert by_period["year1"]["documents"] == 2
        assert stats["skipped_documents"] == 1
        manifest_lines = (out / "manifest.jsonl").read_text().splitlines()
        assert len(manifest_lines) == stats["sequences"] >= 3
        first = json.loads(manifest_lines[0])
        assert set(first) == {
            "doc_id", "period_label", "token_ids", "word_instances", "word_surfaces",
        }
        assert len(first["token_ids"]) == len(first["word_surfaces"])

    def test_unknown_preset_is_config_error(self, corpus_file, vocab_file, capsys):
        code = run("prepare", "--corpus", corpus_file, "--vocab", vocab_file, "--preset", "brexit2")
        assert code == 2

    def test_missing_corpus_is_config_error(self, tmp_path, vocab_file):
        code = run(
            "prepare", "--corpus", tmp_path / "nope.jsonl", "--vocab", vocab_file,
            "--preset", "brexit", "--out-dir", tmp_path / "o",
        )
        assert code == 2

    def test_empty_corpus(self, tmp_path, vocab_file, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        out = tmp_path / "out"
        code = run(
            "prepare", "--corpus", empty, "--vocab", vocab_file,
            "--preset", "immigration", "--out-dir", out,
        )
        assert code == 0
        stats = json.loads((out / "prepare_stats.json").read_text())
        assert stats["sequences"] == 0
        assert stats["total"]["tokens"] == 0

    def test_url_stripping_applied(self, tmp_path, corpus_file, vocab_file):
        out = tmp_path / "out"
        run(
            "prepare", "--corpus", corpus_file, "--vocab", vocab_file,
            "--preset", "brexit", "--lowercase", "--out-dir", out,
        )
        manifest = (out / "manifest.jsonl").read_text()
        assert "www" not in manifest


def synth_pipeline(tmp_path, seed=42, planted=1, min_count=1, threads=None, shards=False):
    """synth -> aggregate helper returning (out_dir, store files)."""
    out = tmp_path / f"run{seed}"
    code = run("synth", "--out-dir", out, "--seed", seed, "--planted", planted)
    assert code == 0
    agg_args = [
        "aggregate", "--out-dir", out, "--stream", out / "synthetic.cte1",
        "--min-count", min_count,
    ]
    if threads:
        agg_args += ["--threads", threads]
    code = run(*agg_args)
    assert code == 0
    index = json.loads((out / "aggregate_index.json").read_text())
    return out, list(index["stores"].values())


class TestAggregate:
    def test_min_count_one_keeps_whole_vocabulary(self, tmp_path):
        out, stores = synth_pipeline(tmp_path, min_count=1)
        loaded = load_store_files(stores)
        assert set(loaded) == {"early", "late", GLOBAL_SCOPE}
        assert len(loaded[GLOBAL_SCOPE]) == 20

    def test_min_count_above_usage_drops_everything(self, tmp_path):
        out = tmp_path / "r"
        run("synth", "--out-dir", out, "--usages", "5", "--words", "4")
        code = run(
            "aggregate", "--out-dir", out, "--stream", out / "synthetic.cte1",
            "--min-count", "11",
        )
        assert code == 0
        loaded = load_store_files(
            json.loads((out / "aggregate_index.json").read_text())["stores"].values()
        )
        assert all(len(store) == 0 for store in loaded.values())

    def test_missing_stream_is_config_error(self, tmp_path):
        code = run("aggregate", "--out-dir", tmp_path, "--stream", tmp_path / "no.cte1")
        assert code == 2

    def test_csv_export(self, tmp_path):
        out = tmp_path / "r"
        run("synth", "--out-dir", out, "--words", "4", "--usages", "5")
        run(
            "aggregate", "--out-dir", out, "--stream", out / "synthetic.cte1",
            "--min-count", "1", "--export-csv",
        )
        lines = (out / "representations.csv").read_text().splitlines()
        assert lines[0].startswith("word,scope,count,v0")
        assert len(lines) == 1 + 4 * 3  # 4 words x (2 periods + GLOBAL)

    def test_jsonl_stream_accepted(self, tmp_path):
        out = tmp_path / "r"
        run("synth", "--out-dir", out, "--words", "4", "--usages", "5", "--format", "jsonl")
        code = run(
            "aggregate", "--out-dir", out, "--stream", out / "synthetic.cte1",
            "--min-count", "1",
        )
        assert code == 0

    def test_sharded_threads_match_single_stream(self, tmp_path):
        out_a = tmp_path / "single"
        run("synth", "--out-dir", out_a, "--seed", "7")
        run(
            "aggregate", "--out-dir", out_a, "--stream", out_a / "synthetic.cte1",
            "--min-count", "1",
        )
        # identical synth stream given twice = two shards of a doubled corpus
        out_b = tmp_path / "matching"
        run("synth", "--out-dir", out_b, "--seed", "7")
        run(
            "aggregate", "--out-dir", out_b,
            "--stream", out_b / "synthetic.cte1",
            "--stream", out_b / "synthetic.cte1",
            "--min-count", "1", "--threads", "4",
        )
        single = load_store_files(
            json.loads((out_a / "aggregate_index.json").read_text())["stores"].values()
        )
        doubled = load_store_files(
            json.loads((out_b / "aggregate_index.json").read_text())["stores"].values()
        )
        for scope, store in single.items():
            for word, (vec, count) in store.words.items():
                dvec, dcount = doubled[scope].words[word]
                assert dcount == 2 * count
                np.testing.assert_allclose(dvec, vec, rtol=1e-6)


class TestReports:
    def test_shift_ranks_planted_word_first(self, tmp_path, capsys):
        out, stores = synth_pipeline(tmp_path)
        args = ["shift", "--out-dir", out, "--period-a", "early", "--period-b", "late"]
        for s in stores:
            args += ["--store", s]
        code = run(*args, "--no-plot")
        assert code == 0
        rows = (out / "shift_scores.csv").read_text().splitlines()
        assert rows[0] == "word,period_a,period_b,distance,count_a,count_b"
        top_word = rows[1].split(",")[0]
        assert top_word == "w000"

    def test_shift_json_mirror(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        args = ["shift", "--out-dir", out, "--period-a", "early", "--period-b", "late",
                "--format", "json", "--no-plot"]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        data = json.loads((out / "shift_scores.json").read_text())
        assert data[0]["word"] == "w000"
        assert set(data[0]) == {"word", "period_a", "period_b", "distance", "count_a", "count_b"}

    def test_shift_renders_figure_by_default(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        args = ["shift", "--out-dir", out, "--period-a", "early", "--period-b", "late"]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        assert (out / "shift_scores.png").stat().st_size > 0

    def test_neighbors_report(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        args = ["neighbors", "--out-dir", out, "--target", "w003", "-k", "5", "--no-plot"]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        rows = (out / "neighbors_w003.csv").read_text().splitlines()
        assert rows[0] == "target,word,similarity,normld,rank"
        assert len(rows) == 6
        ranks = [int(r.split(",")[-1]) for r in rows[1:]]
        assert ranks == [1, 2, 3, 4, 5]
        # similarity-derivative filter: w003 itself and no w00x spelling issues
        words = [r.split(",")[1] for r in rows[1:]]
        assert "w003" not in words

    def test_trajectory_target_equals_seed(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        args = [
            "trajectory", "--out-dir", out, "--target", "w001",
            "--seed-words", "w001", "--no-plot",
        ]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        rows = (out / "trajectory_w001.csv").read_text().splitlines()
        assert rows[0] == "target,seed,period,similarity"
        sims = [float(r.split(",")[-1]) for r in rows[1:]]
        assert sims == [1.0, 1.0]

    def test_trajectory_figure_and_multiple_seeds(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        args = [
            "trajectory", "--out-dir", out, "--target", "w001",
            "--seed-words", "w002,w003",
        ]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        assert (out / "trajectory_w001.png").stat().st_size > 0
        rows = (out / "trajectory_w001.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 2

    def test_trajectory_strict_fails_on_missing_seed(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        args = [
            "trajectory", "--out-dir", out, "--target", "w001",
            "--seed-words", "ghost", "--strict", "--no-plot",
        ]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 1

    def test_eval_report(self, tmp_path):
        out, stores = synth_pipeline(tmp_path, planted=3)
        args = [
            "eval", "--out-dir", out, "--gold", out / "synthetic_gold.tsv",
            "--period-a", "early", "--period-b", "late", "--no-plot",
        ]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert report["n_evaluated"] == 20
        assert report["pearson_r"] > 0.9
        assert report["p_value"] < 0.001
        assert report["method"] == "t-dist"
        pairs = (out / "eval_pairs.csv").read_text().splitlines()
        assert pairs[0] == "word,gold,distance"
        assert len(pairs) == 21

    def test_eval_strict_missing_gold_word(self, tmp_path):
        out, stores = synth_pipeline(tmp_path)
        gold = out / "gold_plus.tsv"
        gold.write_text((out / "synthetic_gold.tsv").read_text() + "ghost\t0.5\n")
        args = [
            "eval", "--out-dir", out, "--gold", gold,
            "--period-a", "early", "--period-b", "late", "--strict", "--no-plot",
        ]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 1

    def test_eval_permutation_method(self, tmp_path):
        out, stores = synth_pipeline(tmp_path, planted=3)
        args = [
            "eval", "--out-dir", out, "--gold", out / "synthetic_gold.tsv",
            "--period-a", "early", "--period-b", "late",
            "--method", "permutation", "--seed", "1", "--no-plot",
        ]
        for s in stores:
            args += ["--store", s]
        assert run(*args) == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert report["method"] == "permutation"
        assert report["p_value"] < 0.01


class TestConfigFile:
    def test_config_supplies_values_flags_override(self, tmp_path):
        out = tmp_path / "o"
        run("synth", "--out-dir", out)
        config = tmp_path / "run.json"
        config.write_text(
            json.dumps(
                {
                    "streams": [str(out / "synthetic.cte1")],
                    "min_count": 999,
                    "out_dir": str(out),
                }
            )
        )
        # config alone: min_count 999 drops everything (empty stores
        # serialize to zero entries, so no scopes come back)
        assert run("aggregate", "--config", config) == 0
        stores = load_store_files(
            json.loads((out / "aggregate_index.json").read_text())["stores"].values()
        )
        assert all(len(s) == 0 for s in stores.values())
        # flag overrides config
        assert run("aggregate", "--config", config, "--min-count", "1") == 0
        stores = load_store_files(
            json.loads((out / "aggregate_index.json").read_text())["stores"].values()
        )
        assert len(stores[GLOBAL_SCOPE]) == 20

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"nonsense": 1}))
        assert run("aggregate", "--config", config) == 2

    def test_invalid_json_config(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text("{")
        assert run("aggregate", "--config", config) == 2


class TestDeterminism:
    def test_two_runs_byte_identical(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run("synth", "--out-dir", out, "--seed", "5")
            run(
                "aggregate", "--out-dir", out, "--stream", out / "synthetic.cte1",
                "--min-count", "1",
            )
            stores = json.loads((out / "aggregate_index.json").read_text())["stores"]
            args = ["shift", "--out-dir", out, "--period-a", "early", "--period-b", "late",
                    "--no-plot"]
            for s in stores.values():
                args += ["--store", s]
            run(*args)
            outputs.append(
                (
                    (out / "synthetic.cte1").read_bytes(),
                    (out / "store_global.tsr1").read_bytes(),
                    (out / "shift_scores.csv").read_bytes(),
                )
            )
        assert outputs[0] == outputs[1]
