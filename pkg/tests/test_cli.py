import json
import subprocess
import sys

import numpy as np
import pytest

from embstat import __version__
from embstat.cli import EXIT_EVAL, EXIT_INGEST, EXIT_OK, EXIT_USAGE, main
from embstat.embeddings import EmbeddingTable, write_text_embeddings, write_word2vec_binary


@pytest.fixture
def suite(tmp_path):
    """Toy embeddings plus a word-sim file and an STS directory."""
    rng = np.random.default_rng(0)
    words = ["king", "queen", "man", "woman", "cat", "dog", "car", "bus", "sun", "moon",
             "tree", "rock"]
    vecs = rng.normal(size=(len(words), 30))
    table = EmbeddingTable(tuple(words), vecs)
    with open(tmp_path / "emb.txt", "wb") as fh:
        write_text_embeddings(table, fh, header=True)
    with open(tmp_path / "emb.bin", "wb") as fh:
        write_word2vec_binary(table, fh)
    lines = ["word1\tword2\tscore"]
    for i in range(len(words) - 1):
        lines.append(f"{words[i]}\t{words[i + 1]}\t{float(rng.uniform(0, 10)):.2f}")
    lines.append("king\tunicorn\t5.0")
    (tmp_path / "ws.txt").write_text("\n".join(lines) + "\n")
    sts = tmp_path / "STS99"
    sts.mkdir()
    for sub in ("news", "forum"):
        sents, gold = [], []
        for _ in range(15):
            a = " ".join(rng.choice(words, size=3))
            c = " ".join(rng.choice(words, size=4))
            sents.append(f"{a.capitalize()}.\t{c}!")
            gold.append(f"{rng.uniform(0, 5):.3f}")
        (sts / f"STS.input.{sub}.txt").write_text("\n".join(sents) + "\n")
        (sts / f"STS.gs.{sub}.txt").write_text("\n".join(gold) + "\n")
    return tmp_path


def emb(suite, fmt="text"):
    name = "emb.txt" if fmt == "text" else "emb.bin"
    return ["--embedding", str(suite / name), "--format", fmt]


class TestSim:
    def test_prints_one_real(self, suite, capsys):
        code = main(["sim", *emb(suite), "--measure", "spr", "--word-a", "king",
                     "--word-b", "queen"])
        assert code == EXIT_OK
        value = float(capsys.readouterr().out.strip())
        assert -1.0 <= value <= 1.0

    def test_binary_format(self, suite, capsys):
        main(["sim", *emb(suite, "word2vec-bin"), "--measure", "cos", "--word-a", "cat",
              "--word-b", "cat"])
        assert float(capsys.readouterr().out) == pytest.approx(1.0, abs=1e-12)

    def test_sentences(self, suite, capsys):
        code = main(["sim", *emb(suite), "--measure", "aps", "--sentence-a", "The king.",
                     "--sentence-b", "A queen!", "--aps-top-n", "10"])
        assert code == EXIT_OK
        assert float(capsys.readouterr().out) >= 0.0

    def test_oov_word_is_evaluation_error(self, suite):
        assert main(["sim", *emb(suite), "--measure", "cos", "--word-a", "king",
                     "--word-b", "unicorn"]) == EXIT_EVAL

    def test_missing_words_is_usage_error(self, suite):
        assert main(["sim", *emb(suite), "--measure", "cos", "--word-a", "king"]) == EXIT_USAGE


class TestProfile:
    def test_toy_table(self, tmp_path):
        (tmp_path / "t.txt").write_text(
            "a 0.1 0.5 -0.3 0.9\nb 1.0 2.0 3.5 4.0\nc -1.0 0.0 0.2 0.1\n")
        out = tmp_path / "profile.json"
        code = main(["profile", "--embedding", str(tmp_path / "t.txt"), "--format", "text",
                     "-o", str(out)])
        assert code == EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["version"] == __version__ and rep["seed"] == 0
        assert rep["config"]["command"] == "profile"
        res = rep["result"]
        assert res["vocabulary"] == 3 and res["dimension"] == 4
        assert 0.0 <= res["normality"]["proportion"] <= 1.0
        assert res["mean_census"]["total"] == 3

    def test_env_directory(self, suite, monkeypatch, capsys):
        monkeypatch.setenv("EMBSTAT_EMBEDDINGS_DIR", str(suite))
        assert main(["profile", "--embedding", "emb.txt", "--format", "text"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["result"]["vocabulary"] == 12

    def test_csv_has_provenance(self, suite, capsys):
        main(["profile", *emb(suite), "--output-format", "csv", "--seed", "4"])
        first, *rest = capsys.readouterr().out.splitlines()
        assert json.loads(first[2:])["seed"] == 4
        assert rest[0] == "metric,value"


class TestEvaluationCommands:
    def test_wordsim(self, suite):
        out = suite / "ws.json"
        code = main(["wordsim", *emb(suite), "--task", str(suite / "ws.txt"),
                     "--compare", "spr:cos", "--resamples", "300", "-o", str(out)])
        assert code == EXIT_OK
        rep = json.loads(out.read_text())["result"]["reports"][0]
        assert rep["coverage"]["COS"] == pytest.approx(11 / 12)
        assert rep["comparisons"][0]["interval"]["resamples"] == 300

    def test_sts(self, suite):
        out = suite / "sts.csv"
        code = main(["sts", *emb(suite), "--task", str(suite / "STS99"), "--measures",
                     "cos,spr", "--output-format", "csv", "-o", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# ")
        assert lines[1] == "embedding,task,N,V,COS,SPR"

    def test_sweep_byte_identical(self, suite):
        args = ["sweep", *emb(suite), *emb(suite, "word2vec-bin"), "--wordsim",
                str(suite / "ws.txt"), "--sts", str(suite / "STS99"), "--compare", "spr:cos",
                "--top", "--resamples", "400", "--seed", "11", "-o", str(suite / "sweep.json")]
        assert main(args) == EXIT_OK
        first = (suite / "sweep.json").read_bytes()
        assert main(args) == EXIT_OK
        assert (suite / "sweep.json").read_bytes() == first
        doc = json.loads(first)
        assert doc["seed"] == 11 and doc["config"]["resamples"] == 400
        assert len(doc["result"]["reports"]) == 4

    def test_sweep_needs_tasks(self, suite):
        assert main(["sweep", *emb(suite)]) == EXIT_USAGE


class TestExports:
    def test_qq(self, suite):
        out = suite / "qq.csv"
        assert main(["export-qq", *emb(suite), "--word", "king", "-o", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[1] == "x,y" and len(lines) == 32

    def test_hist_means(self, suite, capsys):
        assert main(["export-hist", *emb(suite), "--means", "--bins", "5"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[1] == "bin_left,bin_right,count"
        assert sum(int(l.rsplit(",", 1)[1]) for l in lines[2:]) == 12


class TestExitCodes:
    def test_unknown_flag(self, suite):
        out = suite / "never.json"
        with pytest.raises(SystemExit) as err:
            main(["profile", *emb(suite), "--bogus", "-o", str(out)])
        assert err.value.code == EXIT_USAGE
        assert not out.exists()
        assert not [p for p in suite.iterdir() if p.name.startswith(".never")]

    def test_missing_file_is_ingestion(self, suite):
        assert main(["profile", "--embedding", str(suite / "nope.txt"),
                     "--format", "text"]) == EXIT_INGEST

    def test_corrupt_binary_is_ingestion(self, suite, capsys):
        data = (suite / "emb.bin").read_bytes()
        (suite / "cut.bin").write_bytes(data[:len(data) // 2])
        code = main(["profile", "--embedding", str(suite / "cut.bin"),
                     "--format", "word2vec-bin"])
        assert code == EXIT_INGEST
        assert "offset" in capsys.readouterr().err

    def test_bad_task_is_ingestion(self, suite):
        (suite / "bad.txt").write_text("only a header line\n")
        assert main(["wordsim", *emb(suite), "--task", str(suite / "bad.txt")]) == EXIT_INGEST

    def test_unscorable_is_evaluation(self, suite):
        (suite / "oov.txt").write_text("a\tb\t1\nc\td\t2\nking\tqueen\t3\n")
        assert main(["wordsim", *emb(suite), "--task", str(suite / "oov.txt")]) == EXIT_EVAL

    def test_format_required_per_embedding(self, suite):
        args = ["profile", "--embedding", str(suite / "emb.txt")]
        assert main(args + ["--format", "text", "--format", "text"]) == EXIT_USAGE

    def test_console_entry_point(self, suite):
        proc = subprocess.run([sys.executable, "-m", "embstat.cli", "sim", *emb(suite),
                               "--measure", "ken", "--word-a", "sun", "--word-b", "moon"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert -1.0 <= float(proc.stdout) <= 1.0
