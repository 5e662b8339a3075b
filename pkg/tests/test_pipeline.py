import json

import pytest
from click.testing import CliRunner

from minisum import pipeline
from minisum import text_core as tc
from minisum.cli import main
from minisum.estimators import BpeTokenizer
from minisum.synthetic import SyntheticSpec, gen_synthetic
from minisum.trainer import make_pretrain_data, tokenize_document


class TestIngest:
    def test_jsonl_passthrough(self, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text('{"id": "a", "text": "One. Two."}\n'
                       '{"id": "b", "text": "Three."}\n'
                       '{"id": "c", "text": "Four. Five. Six."}\n')
        out = tmp_path / "out.jsonl"
        stats = pipeline.ingest([src], out)
        assert stats["n_docs"] == 3
        assert stats["sentence_histogram"] == {"1": 1, "2": 1, "3": 1}
        assert len(pipeline.read_jsonl(out)) == 3

    def test_missing_text_field(self, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text('{"id": "a"}\n')
        with pytest.raises(pipeline.MalformedRecord, match="in.jsonl:1"):
            pipeline.ingest([src], tmp_path / "out.jsonl")

    def test_invalid_json_line_number(self, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text('{"id": "a", "text": "ok"}\nnot json\n')
        with pytest.raises(pipeline.MalformedRecord, match=":2"):
            pipeline.ingest([src], tmp_path / "out.jsonl")

    def test_empty_file(self, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text("")
        stats = pipeline.ingest([src], tmp_path / "out.jsonl")
        assert stats["n_docs"] == 0

    def test_raw_text_file(self, tmp_path):
        src = tmp_path / "story.txt"
        src.write_text("A tale. It ends.")
        stats = pipeline.ingest([src], tmp_path / "out.jsonl")
        records = pipeline.read_jsonl(tmp_path / "out.jsonl")
        assert records[0]["id"] == "story"
        assert stats["n_docs"] == 1


class TestSynthetic:
    def test_same_seed_byte_identical(self, tmp_path):
        spec = SyntheticSpec(n_docs=20, reorder_fraction=0.3)
        a = gen_synthetic(spec, 5)
        b = gen_synthetic(spec, 5)
        assert a == b

    def test_different_seed_differs(self):
        spec = SyntheticSpec(n_docs=20)
        assert gen_synthetic(spec, 1) != gen_synthetic(spec, 2)

    def test_planted_count(self):
        _, pairs = gen_synthetic(SyntheticSpec(n_docs=4, reorder_fraction=0.5), 0)
        assert sum(p["reordered"] for p in pairs) == 2

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(reorder_fraction=1.5)


class TestTokenizeDocument:
    def test_sentence_seqs_concat_to_full_encoding(self):
        docs, _ = gen_synthetic(SyntheticSpec(n_docs=5), 3)
        vocab = tc.train_bpe((d["text"] for d in docs), 320)
        for doc in docs:
            seqs = tokenize_document(vocab, doc["text"])
            flat = [t for s in seqs for t in s]
            assert flat == tc.encode(vocab, tc.normalize_whitespace(doc["text"]))


class TestMakePretrainData:
    def test_order_independent(self):
        docs, _ = gen_synthetic(SyntheticSpec(n_docs=6), 3)
        vocab = tc.train_bpe((d["text"] for d in docs), 300)
        import minisum.objectives as obj
        span = obj.SpanParams(a=5, b=10)
        fwd = dict(make_pretrain_data(vocab, docs, "all", 7, span=span))
        rev = dict(make_pretrain_data(vocab, list(reversed(docs)), "all", 7, span=span))
        assert fwd == rev

    def test_infeasible_docs_skipped(self):
        vocab = tc.Vocabulary()
        data = make_pretrain_data(vocab, [{"id": "x", "text": ""}], "sr", 0)
        assert data == []


class TestEstimators:
    def test_tokenizer_fit_transform_roundtrip(self):
        tok = BpeTokenizer(vocab_size=300).fit(["hello world. hello again."])
        ids = tok.transform(["hello world"])
        assert tok.inverse_transform(ids) == ["hello world"]

    def test_tokenizer_get_params(self):
        tok = BpeTokenizer(vocab_size=400)
        assert tok.get_params() == {"vocab_size": 400}
        tok.set_params(vocab_size=300)
        assert tok.vocab_size == 300

    def test_tokenizer_save_load(self, tmp_path):
        tok = BpeTokenizer(vocab_size=280).fit(["some text for merges " * 4])
        tok.save(tmp_path / "v.txt")
        again = BpeTokenizer.from_file(tmp_path / "v.txt")
        assert again.transform(["some text"]) == tok.transform(["some text"])


class TestCli:
    def test_end_to_end_stages(self, tmp_path):
        runner = CliRunner()
        corpus = tmp_path / "corpus.jsonl"
        pairs = tmp_path / "pairs.jsonl"
        r = runner.invoke(main, ["gen-synthetic", "--n-docs", "30", "--seed", "1",
                                 "--out", str(corpus), "--pairs-out", str(pairs)])
        assert r.exit_code == 0, r.output

        vocab = tmp_path / "vocab.txt"
        r = runner.invoke(main, ["train-bpe", "--corpus", str(corpus),
                                 "--size", "320", "--out", str(vocab)])
        assert r.exit_code == 0, r.output

        data = tmp_path / "pretrain.jsonl"
        r = runner.invoke(main, ["make-pretrain-data", "--corpus", str(corpus),
                                 "--vocab", str(vocab), "--objective", "all",
                                 "--seed", "2", "--span-min", "5", "--span-max", "10",
                                 "--target-len", "32", "--out", str(data)])
        assert r.exit_code == 0, r.output
        record = json.loads(data.read_text().splitlines()[0])
        assert set(record) == {"id", "objective", "input_ids", "target_ids", "meta"}

        mcfg = tmp_path / "model.json"
        mcfg.write_text(json.dumps({"d_model": 32, "n_heads": 2, "enc_layers": 1,
                                    "dec_layers": 1, "enc_ffn": 32, "dec_ffn": 32,
                                    "max_positions": 128}))
        ckpt = tmp_path / "pre.ckpt"
        r = runner.invoke(main, ["pretrain", "--data", str(data), "--vocab", str(vocab),
                                 "--config", str(mcfg), "--steps", "5",
                                 "--seed", "3", "--out", str(ckpt)])
        assert r.exit_code == 0, r.output

        ft = tmp_path / "ft.ckpt"
        r = runner.invoke(main, ["finetune", "--ckpt", str(ckpt), "--pairs", str(pairs),
                                 "--vocab", str(vocab), "--steps", "5",
                                 "--seed", "4", "--out", str(ft)])
        assert r.exit_code == 0, r.output

        decoded = tmp_path / "decoded.jsonl"
        r = runner.invoke(main, ["decode", "--ckpt", str(ft), "--vocab", str(vocab),
                                 "--input", str(corpus), "--beam", "2",
                                 "--max-len", "8", "--out", str(decoded)])
        assert r.exit_code == 0, r.output
        outs = pipeline.read_jsonl(decoded)
        assert len(outs) == 30
        assert {"id", "summary", "log_prob"} <= set(outs[0])

    def test_rouge_command(self, tmp_path):
        runner = CliRunner()
        pairs = tmp_path / "p.jsonl"
        pairs.write_text('{"candidate": "a b c", "reference": "a b c"}\n')
        r = runner.invoke(main, ["rouge", "--variant", "rl", "--pairs", str(pairs)])
        assert r.exit_code == 0
        assert json.loads(r.output)["f1"] == 1.0

    def test_analyze_reorder_command(self, tmp_path):
        runner = CliRunner()
        _, pairs = gen_synthetic(SyntheticSpec(n_docs=8, reorder_fraction=0.25), 9)
        path = tmp_path / "pairs.jsonl"
        pipeline.write_jsonl(path, pairs)
        r = runner.invoke(main, ["analyze-reorder", "--pairs", str(path)])
        assert r.exit_code == 0
        assert json.loads(r.output)["fraction"] == 0.25

    def test_lead3_command(self, tmp_path):
        runner = CliRunner()
        docs = tmp_path / "docs.jsonl"
        docs.write_text('{"id": "d", "text": "One. Two. Three. Four."}\n')
        out = tmp_path / "lead.jsonl"
        r = runner.invoke(main, ["lead3", "--docs", str(docs), "--out", str(out)])
        assert r.exit_code == 0
        assert pipeline.read_jsonl(out)[0]["summary"] == "One. Two. Three."


class TestRunExperiment:
    def test_small_run_manifest(self, tmp_path):
        cfg = {
            "seed": 5,
            "vocab_size": 300,
            "model": {"d_model": 32, "n_heads": 2, "enc_layers": 1, "dec_layers": 1,
                      "enc_ffn": 32, "dec_ffn": 32, "max_positions": 128},
            "synthetic": {"n_docs": 40},
            "pretrain": {"steps": 10, "batch_size": 8},
            "finetune": {"steps": 10, "batch_size": 8},
            "decode": {"beam_size": 2, "max_len": 16},
            "n_val": 5,
        }
        manifest = pipeline.run_experiment(cfg, tmp_path / "run")
        assert manifest["seed"] == 5
        assert "rouge" in manifest and "rl" in manifest["rouge"]
        assert (tmp_path / "run" / "manifest.json").exists()
        assert (tmp_path / "run" / "decoded.jsonl").exists()
        # rerun reproduces metrics exactly
        again = pipeline.run_experiment(cfg, tmp_path / "run2")
        assert again["rouge"] == manifest["rouge"]
        assert again["config_hash"] == manifest["config_hash"]
