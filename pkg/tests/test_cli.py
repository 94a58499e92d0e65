"""End-to-end coverage for the command-line pipeline.

Uses a tiny planted corpus and 1-epoch trainings so the whole module
stays fast; numerical quality is covered elsewhere.
"""

import io
import sys

import pytest

from sourcelm import cli
from sourcelm.cli import BadConfig, RunConfig, build_run_config, main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared pipeline artifacts: corpus, vocab, one checkpoint per arch."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    vocab = root / "vocab.tsv"
    assert main(["synth-corpus", "--out", str(corpus), "--files", "8"]) == 0
    assert main(["build-vocab", "--corpus", str(corpus), "--out", str(vocab),
                 "--min-count", "1"]) == 0
    common = ["--corpus", str(corpus), "--vocab", str(vocab),
              "--k", "8", "--epochs", "1", "--batch-size", "2",
              "--unroll", "10", "--dropout", "0.0"]
    for arch in ("pointer", "lstm"):
        ckpt = root / f"{arch}.ckpt"
        assert main(["train-neural", *common, "--arch", arch,
                     "--out", str(ckpt)]) == 0
    return root


class TestRunConfig:
    def test_defaults(self):
        run = RunConfig()
        assert run.k == 200 and run.lr == 0.7 and run.decay == 0.9
        assert run.clip == 5.0 and run.dropout == 0.1

    def test_per_arch_window_and_batch(self):
        assert RunConfig(arch="pointer").resolved_window() == 20
        assert RunConfig(arch="attention").resolved_window() == 50
        assert RunConfig(arch="pointer").resolved_batch_size() == 30
        assert RunConfig(arch="attention").resolved_batch_size() == 75
        assert RunConfig(arch="lstm", window=7).resolved_window() == 7

    @pytest.mark.parametrize("bad", [
        dict(arch="rnn"), dict(k=0), dict(lr=-1.0), dict(dropout=1.0),
        dict(epochs=0), dict(window=0), dict(seed=-1), dict(batch_size=-3),
    ])
    def test_invalid_values_rejected(self, bad):
        with pytest.raises(BadConfig):
            RunConfig(**bad)


class TestConfigFile:
    def run_with(self, tmp_path, text, flags=()):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(text)
        parser = cli.build_parser()
        args = parser.parse_args(
            ["train-neural", "--corpus", "c", "--vocab", "v", "--out", "o",
             "--config", str(cfg), *flags])
        return build_run_config(args)

    def test_file_values_and_comments(self, tmp_path):
        run = self.run_with(tmp_path, "# comment\n\nk = 64\nlr=1.5\narch=pointer\n")
        assert run.k == 64 and run.lr == 1.5 and run.arch == "pointer"
        assert run.decay == 0.9  # untouched default

    def test_flags_override_file(self, tmp_path):
        run = self.run_with(tmp_path, "k=64\nlr=1.5\n", flags=["--k", "32"])
        assert run.k == 32 and run.lr == 1.5

    def test_dashed_keys_accepted(self, tmp_path):
        run = self.run_with(tmp_path, "sample-size=100\nbatch-size=4\n")
        assert run.sample_size == 100 and run.batch_size == 4

    def test_unknown_key(self, tmp_path):
        with pytest.raises(BadConfig, match="unknown config key"):
            self.run_with(tmp_path, "momentum=0.9\n")

    def test_bad_value(self, tmp_path):
        with pytest.raises(BadConfig, match="not int"):
            self.run_with(tmp_path, "k=sixty\n")

    def test_missing_separator(self, tmp_path):
        with pytest.raises(BadConfig, match="key=value"):
            self.run_with(tmp_path, "just words\n")

    def test_end_to_end_exit_code(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("momentum=0.9\n")
        code = main(["train-neural", "--corpus", "c", "--vocab", "v",
                     "--out", "o", "--config", str(cfg)])
        assert code == 1


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self):
        assert main([]) == 1

    def test_unknown_flag(self):
        assert main(["synth-corpus", "--out", "x", "--bogus"]) == 1

    def test_missing_corpus_dir(self, tmp_path):
        assert main(["build-vocab", "--corpus", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "v.tsv")]) == 2

    def test_empty_corpus_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["build-vocab", "--corpus", str(empty),
                     "--out", str(tmp_path / "v.tsv")]) == 2

    def test_corrupt_checkpoint(self, workdir, tmp_path):
        junk = tmp_path / "junk.ckpt"
        junk.write_bytes(b"not a checkpoint")
        assert main(["suggest", "--checkpoint", str(junk),
                     "--vocab", str(workdir / "vocab.tsv"),
                     "--context",
                     str(workdir / "corpus" / "synth_000.tokens")]) == 2

    def test_vocab_mismatch(self, workdir, tmp_path):
        other = tmp_path / "other.tsv"
        other.write_text("$OOV$\t0\t5\n$NUM$\t1\t5\nvar1\t2\t5\n")
        assert main(["evaluate", "--corpus", str(workdir / "corpus"),
                     "--vocab", str(other),
                     "--checkpoint", str(workdir / "pointer.ckpt")]) == 2

    def test_trace_requires_pointer(self, workdir):
        code = main(["trace", "--checkpoint", str(workdir / "lstm.ckpt"),
                     "--vocab", str(workdir / "vocab.tsv"),
                     "--context",
                     str(workdir / "corpus" / "synth_000.tokens")])
        assert code == 1

    def test_evaluate_needs_exactly_one_model(self, workdir):
        base = ["evaluate", "--corpus", str(workdir / "corpus"),
                "--vocab", str(workdir / "vocab.tsv")]
        assert main(base) == 1
        assert main(base + ["--checkpoint", str(workdir / "pointer.ckpt"),
                            "--ngram", "x"]) == 1

    def test_synth_corpus_rejects_bad_distances(self, tmp_path):
        assert main(["synth-corpus", "--out", str(tmp_path / "s"),
                     "--d-min", "10"]) == 1
        assert main(["synth-corpus", "--out", str(tmp_path / "s"),
                     "--d-max", "300"]) == 1


class TestNormalize:
    def test_directory_tree(self, tmp_path, capsys):
        src = tmp_path / "proj" / "inner"
        src.mkdir(parents=True)
        (tmp_path / "proj" / "top.py").write_text("x = 1\n")
        src.joinpath("mod.py").write_text("def f(a):\n    return a\n")
        out = tmp_path / "norm"
        assert main(["normalize", str(tmp_path / "proj"),
                     "--out", str(out)]) == 0
        assert (out / "top.tokens").exists()
        assert (out / "inner" / "mod.tokens").exists()
        assert (out / "inner" / "mod.symbols").exists()

    def test_single_file_and_missing_input(self, tmp_path):
        f = tmp_path / "one.py"
        f.write_text("y = 2\n")
        assert main(["normalize", str(f), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "one.tokens").exists()
        assert main(["normalize", str(tmp_path / "ghost.py"),
                     "--out", str(tmp_path / "o2")]) == 2

    def test_syntax_error_reports_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.py"
        bad.write_text('x = "unterminated\n')
        assert main(["normalize", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "bad.py" in capsys.readouterr().err


class TestVocabCap:
    def test_cap_keeps_specials_and_frequent_terms(self, tmp_path):
        corpus = tmp_path / "c"
        assert main(["synth-corpus", "--out", str(corpus), "--files", "4"]) == 0
        full = tmp_path / "full.tsv"
        capped = tmp_path / "cap.tsv"
        assert main(["build-vocab", "--corpus", str(corpus), "--out",
                     str(full), "--min-count", "1"]) == 0
        assert main(["build-vocab", "--corpus", str(corpus), "--out",
                     str(capped), "--min-count", "1",
                     "--vocab-cap", "10"]) == 0
        from sourcelm.corpus import read_vocab
        big, small = read_vocab(full), read_vocab(capped)
        assert len(big) > 10 and len(small) == 10
        assert "$OOV$" in small.term_to_id and "$NUM$" in small.term_to_id
        kept = [t for t in small.id_to_term if t not in ("$OOV$", "$NUM$")]
        floor = min(big.counts[big.term_to_id[t]] for t in kept)
        dropped = [t for t in big.id_to_term if t not in small.term_to_id]
        assert all(big.counts[big.term_to_id[t]] <= floor for t in dropped)


class TestPipelineRoundtrips:
    def test_ngram_train_and_evaluate(self, workdir, tmp_path, capsys):
        model = tmp_path / "m3.ngram"
        assert main(["train-ngram", "--corpus", str(workdir / "corpus"),
                     "--vocab", str(workdir / "vocab.tsv"),
                     "--order", "3", "--out", str(model)]) == 0
        report = tmp_path / "report.txt"
        assert main(["evaluate", "--corpus", str(workdir / "corpus"),
                     "--vocab", str(workdir / "vocab.tsv"),
                     "--ngram", str(model), "--report", str(report)]) == 0
        stdout = capsys.readouterr().out
        assert "PP" in stdout and "3-gram" in stdout
        assert report.exists() and "perplexity" in report.read_text()

    def test_neural_evaluate_segments_match_onepass(self, workdir, capsys):
        base = ["evaluate", "--corpus", str(workdir / "corpus"),
                "--vocab", str(workdir / "vocab.tsv"),
                "--checkpoint", str(workdir / "pointer.ckpt")]
        assert main(base) == 0
        one = capsys.readouterr().out
        assert main(base + ["--segment-len", "13"]) == 0
        seg = capsys.readouterr().out
        assert one == seg

    def test_suggest_prints_m_tokens(self, workdir, capsys):
        assert main(["suggest", "--checkpoint", str(workdir / "pointer.ckpt"),
                     "--vocab", str(workdir / "vocab.tsv"),
                     "--context", str(workdir / "corpus" / "synth_001.tokens"),
                     "--m", "3", "--beam", "2"]) == 0
        line = capsys.readouterr().out.strip()
        assert len(line.split()) == 3

    def test_trace_outputs(self, workdir, tmp_path):
        import json
        records = tmp_path / "trace.jsonl"
        heat = tmp_path / "heat.txt"
        assert main(["trace", "--checkpoint", str(workdir / "pointer.ckpt"),
                     "--vocab", str(workdir / "vocab.tsv"),
                     "--context", str(workdir / "corpus" / "synth_000.tokens"),
                     "--out", str(records), "--heatmap", str(heat)]) == 0
        lines = records.read_text().splitlines()
        rows = heat.read_text().splitlines()
        assert len(lines) == len(rows) > 0
        first = json.loads(lines[0])
        assert set(first) == {"position", "term", "lam", "slots", "top5"}
        widths = {len(r.split()) for r in rows}
        assert widths == {20}  # pointer default window

    def test_same_seed_checkpoints_are_byte_identical(self, workdir, tmp_path):
        outs = []
        for name in ("a.ckpt", "b.ckpt"):
            out = tmp_path / name
            assert main(["train-neural", "--corpus", str(workdir / "corpus"),
                         "--vocab", str(workdir / "vocab.tsv"),
                         "--arch", "lstm", "--k", "8", "--epochs", "1",
                         "--batch-size", "2", "--unroll", "10",
                         "--seed", "5", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestRepl:
    def run_repl(self, workdir, monkeypatch, text):
        monkeypatch.setattr(sys, "stdin", io.StringIO(text))
        return main(["suggest", "--checkpoint", str(workdir / "pointer.ckpt"),
                     "--vocab", str(workdir / "vocab.tsv"), "--interactive"])

    def test_quit_and_suggestions(self, workdir, monkeypatch, capsys):
        assert self.run_repl(workdir, monkeypatch, "let k01 var1 use\n:quit\n") == 0
        out = capsys.readouterr().out
        assert "enter tokens" in out
        assert "lambda:" in out  # memory occupied after the intro

    def test_unknown_token_warning(self, workdir, monkeypatch, capsys):
        assert self.run_repl(workdir, monkeypatch, "zzz\n:q\n") == 0
        err = capsys.readouterr().err
        assert "unknown token" in err and "$OOV$" in err

    def test_reset_restores_fresh_state(self, workdir, monkeypatch, capsys):
        assert self.run_repl(
            workdir, monkeypatch,
            "use\n:reset\nuse\n:quit\n") == 0
        out = capsys.readouterr().out
        assert "state cleared" in out
        blocks = [b for b in out.split("> ") if b.strip().startswith("0.") or
                  "0." in b.split("\n")[0]]
        first = out.split("> ")[1]
        third = out.split("> ")[3]
        assert first == third  # same state, same suggestions

    def test_eof_exits_cleanly(self, workdir, monkeypatch):
        assert self.run_repl(workdir, monkeypatch, "use var1\n") == 0
