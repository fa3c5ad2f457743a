import json

from nrp_eval.answers import GeneratedAnswer, save_answers
from nrp_eval.cli import main
from nrp_eval.pipeline import load_rankings_jsonl, read_records_csv


def write_answers(path, queries=("q1", "q2", "q3"), models=("ma", "mb"),
                  prompts=("none",), samples=2):
    texts = {"q1": "flu shot", "q2": "tinnitus ringing", "q3": "vitamin d"}
    answers = [
        GeneratedAnswer(q, m, p, s, f"{texts[q]} sample {s}")
        for q in queries for m in models for p in prompts for s in range(samples)
    ]
    save_answers(answers, path)
    return answers


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["rank", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_rank_missing_answers(self, tiny_corpus_files, tmp_path, capsys):
        code = main([
            "rank",
            "--queries", tiny_corpus_files["queries"],
            "--docs", tiny_corpus_files["docs"],
            "--qrels-dir", tiny_corpus_files["qrels_dir"],
            "--scorer", "tfidf",
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err and "--answers" in err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0


class TestValidateCommand:
    def test_validate_writes_csv_and_prints_winner(self, tiny_corpus_files, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "validate",
            "--queries", tiny_corpus_files["queries"],
            "--docs", tiny_corpus_files["docs"],
            "--qrels-dir", tiny_corpus_files["qrels_dir"],
            "--scorers", "tfidf,dph",
            "--k", "10",
            "--min-chars", "0",
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        captured = capsys.readouterr()
        assert "winner: " in captured.out
        lines = (out_dir / "validation.csv").read_text().strip().splitlines()
        assert lines[0] == "scorer,dimension,ndcg"
        assert len(lines) == 1 + 2 * 3  # two scorers x three dimensions
        config = json.loads((out_dir / "run_config.json").read_text())
        assert config["command"] == "validate"
        assert config["k"] == 10


class TestRankCommand:
    def run_rank(self, corpus, answers_path, out_dir, extra=()):
        return main([
            "rank",
            "--queries", corpus["queries"],
            "--docs", corpus["docs"],
            "--qrels-dir", corpus["qrels_dir"],
            "--scorer", "tfidf",
            "--answers", str(answers_path),
            "--min-chars", "0",
            "--out-dir", str(out_dir),
            *extra,
        ])

    def test_rank_produces_records_and_summary(self, tiny_corpus_files, tmp_path):
        answers_path = tmp_path / "answers.jsonl"
        answers = write_answers(answers_path)
        out_dir = tmp_path / "out"
        assert self.run_rank(tiny_corpus_files, answers_path, out_dir) == 0
        records = read_records_csv(out_dir / "records.csv")
        assert len(records) == len(answers)
        summary_lines = (out_dir / "summary.csv").read_text().strip().splitlines()
        assert len(summary_lines) == 1 + 2  # two (model, prompt) groups

    def test_identical_inputs_give_byte_identical_outputs(self, tiny_corpus_files, tmp_path):
        answers_path = tmp_path / "answers.jsonl"
        write_answers(answers_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        self.run_rank(tiny_corpus_files, answers_path, out_a, ["--workers", "1"])
        self.run_rank(tiny_corpus_files, answers_path, out_b, ["--workers", "4"])
        for name in ("records.csv", "summary.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_external_scorer_spec(self, tiny_corpus_files, tmp_path):
        import sys

        answers_path = tmp_path / "answers.jsonl"
        write_answers(answers_path, samples=1)
        out_dir = tmp_path / "out"
        code = main([
            "rank",
            "--queries", tiny_corpus_files["queries"],
            "--docs", tiny_corpus_files["docs"],
            "--qrels-dir", tiny_corpus_files["qrels_dir"],
            "--scorer", f"cmd:{sys.executable} -m nrp_eval.echo_adapter",
            "--answers", str(answers_path),
            "--min-chars", "0",
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        assert len(read_records_csv(out_dir / "records.csv")) == 6

    def test_data_error_exits_two(self, tiny_corpus_files, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        code = self.run_rank(tiny_corpus_files, bad, tmp_path / "out")
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, tiny_corpus_files, tmp_path, capsys):
        answers_path = tmp_path / "answers.jsonl"
        write_answers(answers_path)
        config = tmp_path / "run.ini"
        config.write_text(
            "[nrp]\n"
            f"queries = {tiny_corpus_files['queries']}\n"
            f"docs = {tiny_corpus_files['docs']}\n"
            f"qrels_dir = {tiny_corpus_files['qrels_dir']}\n"
            f"answers = {answers_path}\n"
            "scorer = tfidf\n"
            "min_chars = 0\n"
            f"out_dir = {tmp_path / 'from_config'}\n"
        )
        assert main(["rank", "--config", str(config)]) == 0
        assert (tmp_path / "from_config" / "records.csv").exists()

        override = tmp_path / "override"
        assert main(["rank", "--config", str(config), "--out-dir", str(override)]) == 0
        assert (override / "records.csv").exists()
        run_config = json.loads((override / "run_config.json").read_text())
        assert run_config["out_dir"] == str(override)

    def test_missing_config_file_exits_two(self, capsys):
        assert main(["rank", "--config", "/nonexistent.ini"]) == 2


class TestAgreeCommand:
    def test_agree_with_precomputed_system(self, tmp_path, capsys):
        system = {"t1": ["a", "b", "c"], "t2": ["x", "y", "z"]}
        expert = {"t1": ["a", "b", "c"], "t2": ["y", "x", "z"]}
        system_path = tmp_path / "system.jsonl"
        expert_path = tmp_path / "expert.jsonl"
        for path, rankings in ((system_path, system), (expert_path, expert)):
            with open(path, "w") as fh:
                for qid, ranking in rankings.items():
                    fh.write(json.dumps({"query_id": qid, "ranking": ranking}) + "\n")
        out_dir = tmp_path / "out"
        code = main([
            "agree",
            "--system", str(system_path),
            "--expert", str(expert_path),
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "mean_rbo=" in out and "mean_tau=" in out
        agreement_lines = (out_dir / "agreement.csv").read_text().strip().splitlines()
        assert agreement_lines[0] == "query_id,rbo,tau"
        assert len(agreement_lines) == 3
        flow_lines = (out_dir / "rank_flow.csv").read_text().strip().splitlines()
        assert len(flow_lines) == 1 + 2 * 6  # 2 sources x 2 topics x 3 positions

    def test_agree_selection_mode_is_seeded(self, tiny_corpus_files, tmp_path):
        answers_path = tmp_path / "answers.jsonl"
        write_answers(answers_path, models=("ma", "mb"), samples=2)
        records_dir = tmp_path / "records"
        TestRankCommand().run_rank(tiny_corpus_files, answers_path, records_dir)

        # expert rankings over the study items require knowing the selection;
        # run selection once to discover them, then feed a shuffled expert
        args = [
            "agree",
            "--queries", tiny_corpus_files["queries"],
            "--docs", tiny_corpus_files["docs"],
            "--qrels-dir", tiny_corpus_files["qrels_dir"],
            "--min-chars", "0",
            "--records", str(records_dir / "records.csv"),
            "--answers", str(answers_path),
            "--scorer", "tfidf",
            "--models", "ma,mb",
            "--n-topics", "2",
            "--seed", "7",
        ]
        probe_dir = tmp_path / "probe"
        expert_path = tmp_path / "expert.jsonl"
        expert_path.write_text("")  # placeholder; selection runs before agreement
        code = main(args + ["--expert", str(expert_path), "--out-dir", str(probe_dir)])
        assert code == 2  # empty expert file cannot match the selected topics
        system = load_rankings_jsonl(probe_dir / "system_rankings.jsonl")
        with open(expert_path, "w") as fh:
            for qid, ranking in system.items():
                fh.write(json.dumps({"query_id": qid, "ranking": ranking[::-1]}) + "\n")

        out_dir = tmp_path / "agree_out"
        assert main(args + ["--expert", str(expert_path), "--out-dir", str(out_dir)]) == 0
        assert (out_dir / "study_sample.jsonl").exists()
        repeat_dir = tmp_path / "agree_repeat"
        assert main(args + ["--expert", str(expert_path), "--out-dir", str(repeat_dir)]) == 0
        assert (
            (out_dir / "system_rankings.jsonl").read_bytes()
            == (repeat_dir / "system_rankings.jsonl").read_bytes()
        )


class TestReportCommand:
    def test_bundle_from_artifacts(self, tiny_corpus_files, tmp_path):
        answers_path = tmp_path / "answers.jsonl"
        write_answers(answers_path)
        rank_dir = tmp_path / "rank"
        TestRankCommand().run_rank(tiny_corpus_files, answers_path, rank_dir)
        out_dir = tmp_path / "report"
        code = main([
            "report",
            "--records", str(rank_dir / "records.csv"),
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        bundle = json.loads((out_dir / "report.json").read_text())
        assert len(bundle["records"]) == 12
        assert bundle["validation"] is None
        assert (out_dir / "rank_flow.csv").exists()

    def test_model_size_table(self, tiny_corpus_files, tmp_path):
        answers_path = tmp_path / "answers.jsonl"
        write_answers(answers_path)
        rank_dir = tmp_path / "rank"
        TestRankCommand().run_rank(tiny_corpus_files, answers_path, rank_dir)
        params = tmp_path / "params.json"
        params.write_text(json.dumps({"ma": 124_000_000, "mb": 7_000_000_000}))
        out_dir = tmp_path / "report"
        code = main([
            "report",
            "--records", str(rank_dir / "records.csv"),
            "--model-params", str(params),
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        lines = (out_dir / "model_size.csv").read_text().strip().splitlines()
        assert lines[0] == "model,parameters,mean_nrp,count"
        assert len(lines) == 3
        assert lines[1].startswith("ma,124000000,")
