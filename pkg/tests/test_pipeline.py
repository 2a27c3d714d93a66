import fcntl
import logging

import numpy as np
import pytest

from dgaembed import modelio, pipeline
from dgaembed.datagen import BENIGN
from dgaembed.embed import EmbedConfig
from dgaembed.evaluate import confusion, is_test_token, metrics
from dgaembed.modelio import dumps
from dgaembed.pipeline import RunConfig, apply_settings, load_config, parse_config_text
from dgaembed.preprocess import Verdict as Label


def cfg_for(files, tmp_path, name="model.bin", **kw):
    base = dict(logs=[str(files["logs"])], blacklist=str(files["blacklist"]),
                whitelist=str(files["whitelist"]), model=str(tmp_path / name),
                output_dir=str(tmp_path / "out"), embed=EmbedConfig(dim=16), clf_epochs=20, seed=4)
    base.update(kw)
    return RunConfig(**base)


# -- configuration ----------------------------------------------------------------

def test_config_text_and_overrides(tmp_path):
    p = tmp_path / "run.conf"
    p.write_text("# comment\nthreshold = 0.7\nembed.dim = 8  # inline\nqtypes = A, AAAA\n"
                 "nxdomain_only = yes\nseed = 3\ntruth = none\n")
    cfg = load_config(p, {"embed.sampler": "alias", "clf-epochs": "4"})
    assert cfg.threshold == 0.7 and cfg.embed.dim == 8 and cfg.embed.sampler == "alias"
    assert cfg.qtypes == ["A", "AAAA"] and cfg.nxdomain_only is True and cfg.clf_epochs == 4
    assert cfg.seed == 3 and cfg.embed.seed == 3 and cfg.truth is None


@pytest.mark.parametrize("settings", [{"nope": "1"}, {"embed.nope": "1"}, {"seed": "x"},
                                      {"nxdomain_only": "maybe"}, {"threshold": "2"},
                                      {"embed.dim": "0"}, {"feedback_low": "0.99"}])
def test_bad_settings(settings):
    with pytest.raises(ValueError):
        apply_settings(RunConfig(), settings)


def test_config_syntax_error():
    with pytest.raises(ValueError):
        parse_config_text("threshold 0.5")


def test_missing_inputs(tmp_path):
    with pytest.raises(FileNotFoundError):
        pipeline.train_all(RunConfig(logs=[str(tmp_path / "nope.tsv")]))
    with pytest.raises(ValueError):
        RunConfig().check_inputs()
    with pytest.raises(FileNotFoundError):
        pipeline.score(RunConfig(model=str(tmp_path / "none.bin")), ["a.com"]).__next__()


# -- train / update ---------------------------------------------------------------

def test_train_deterministic(small_files, tmp_path):
    a = pipeline.train_all(cfg_for(small_files, tmp_path, "a.bin"))
    pipeline.train_all(cfg_for(small_files, tmp_path, "b.bin"))
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert a.n_labeled > 0 and a.stats["accepted"] > 0
    model, clf = modelio.load(tmp_path / "a.bin")
    assert clf is not None and model.batches_seen == 1


def test_zero_labels_warns_and_skips_classifier(small_files, tmp_path, caplog):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    cfg = cfg_for(small_files, tmp_path, blacklist=str(empty), whitelist=str(empty))
    with caplog.at_level(logging.WARNING):
        res = pipeline.train_all(cfg)
    assert res.n_labeled == 0 and "no labeled tokens" in caplog.text
    model, clf = modelio.load(cfg.model)
    assert clf is None and len(model) > 0
    with pytest.raises(ValueError):
        list(pipeline.score(cfg, ["x.com"]))


def test_more_labels_change_classifier_only(small_files, tmp_path):
    few = tmp_path / "few.txt"
    few.write_text("".join(t + "\n" for t in small_files["blacklist"].read_text().split()[:5]))
    pipeline.train_all(cfg_for(small_files, tmp_path, "few.bin", blacklist=str(few)))
    pipeline.train_all(cfg_for(small_files, tmp_path, "all.bin"))
    m1, c1 = modelio.load(tmp_path / "few.bin")
    m2, c2 = modelio.load(tmp_path / "all.bin")
    assert dumps(m1) == dumps(m2)
    assert not np.array_equal(c1.weights, c2.weights)


def test_update_with_empty_log(small_files, tmp_path):
    cfg = cfg_for(small_files, tmp_path)
    pipeline.train_all(cfg)
    before, clf_before = modelio.load(cfg.model)
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    res = pipeline.update(cfg, [str(empty)])
    after, clf_after = modelio.load(cfg.model)
    assert res.n_documents == 0 and after.batches_seen == 2
    after.batches_seen = 1
    assert dumps(after, clf_after) == dumps(before, clf_before)


def split_logs(files, tmp_path, frac=0.5):
    lines = files["logs"].read_text().splitlines(keepends=True)
    ts = sorted({int(ln.split("\t", 1)[0]) // 600 for ln in lines})
    cut = ts[int(len(ts) * frac)]
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    a.write_text("".join(ln for ln in lines if int(ln.split("\t", 1)[0]) // 600 < cut))
    b.write_text("".join(ln for ln in lines if int(ln.split("\t", 1)[0]) // 600 >= cut))
    return a, b


def test_update_extends_counts(small_files, tmp_path):
    a, b = split_logs(small_files, tmp_path)
    cfg = cfg_for(small_files, tmp_path, logs=[str(a)])
    pipeline.train_all(cfg)
    pipeline.update(cfg, [str(b)])
    inc, _ = modelio.load(cfg.model)
    full = cfg_for(small_files, tmp_path, "full.bin")
    pipeline.train_all(full)
    whole, _ = modelio.load(full.model)
    assert inc.batches_seen == 2
    assert sorted(zip(inc.vocab.tokens, inc.vocab.freq)) == sorted(zip(whole.vocab.tokens, whole.vocab.freq))
    with pytest.raises(FileNotFoundError):
        pipeline.update(cfg, [str(tmp_path / "missing.tsv")])


# -- scoring and feedback ------------------------------------------------------------

@pytest.fixture(scope="module")
def small_model(small_files, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("scored")
    cfg = cfg_for(small_files, tmp, truth=None)
    pipeline.train_all(cfg)
    return cfg


def test_score_normalizes_like_training(small_model, small_corpus):
    tok = small_corpus.whitelist[0]
    raw = "WWW." + tok.upper() + ".cn."
    a, b = pipeline.score(small_model, [tok, raw])
    assert (a.score, a.label) == (b.score, b.label) and a.token == b.token == tok


def test_score_unknowns(small_model):
    vs = list(pipeline.score(small_model, ["never-seen-before.org", "bad name", "", "# c"]))
    assert [v.label for v in vs] == [Label.UNKNOWN, Label.UNKNOWN]


def test_score_logs_unique_tokens(small_model, small_files):
    vs = list(pipeline.score_logs(small_model, [str(small_files["logs"])]))
    toks = [v.token for v in vs]
    assert len(toks) == len(set(toks)) and all(v.label is not Label.UNKNOWN for v in vs)


def test_verdict_files_deterministic(small_model, small_files, tmp_path):
    out = []
    for name in ("v1.tsv", "v2.tsv"):
        pipeline.write_verdicts(pipeline.score_logs(small_model, [str(small_files["logs"])]),
                                tmp_path / name)
        out.append((tmp_path / name).read_bytes())
    assert out[0] == out[1] and out[0]


def fake(tok, score):
    return pipeline.Verdict(tok, score, Label.UNKNOWN if score is None else
                            (Label.MALICIOUS if score >= 0.5 else Label.BENIGN), 0.5)


def test_feedback_thresholds(tmp_path):
    black = tmp_path / "b.txt"
    black.write_text("known.com\n")
    cfg = RunConfig(blacklist=str(black), output_dir=str(tmp_path / "out"))
    vs = [fake("hi.com", 0.95), fake("mid.com", 0.5), fake("lo.com", 0.05), fake("oov.com", None),
          fake("known.com", 0.99)]
    b, w = pipeline.feedback_lists(cfg, vs, high=0.9, low=0.1)
    assert b == ["hi.com"] and w == ["lo.com"]
    assert (tmp_path / "out" / "blacklist.additions.txt").read_text() == "hi.com\n"
    assert (tmp_path / "out" / "whitelist.additions.txt").read_text() == "lo.com\n"
    assert black.read_text() == "known.com\n"
    with pytest.raises(ValueError):
        pipeline.feedback_lists(cfg, vs, high=0.1, low=0.2)


def test_model_lock_is_exclusive(tmp_path):
    target = tmp_path / "m.bin"
    with pipeline.model_lock(target):
        with open(str(target) + ".lock", "w") as fh:
            with pytest.raises(BlockingIOError):
                fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)


# -- default profile ------------------------------------------------------------------

@pytest.mark.slow
def test_head_domain_scores_benign(default_files, default_corpus, tmp_path):
    cfg = cfg_for(default_files, tmp_path, embed=EmbedConfig(), clf_epochs=50)
    pipeline.train_all(cfg)
    benign = [t for t, lab in default_corpus.truth.items() if lab == BENIGN]
    model, _ = modelio.load(cfg.model)
    head = max(benign, key=lambda t: model.vocab.freq[model.vocab.get_id(t)])
    (v,) = pipeline.score(cfg, [head])
    assert v.score < cfg.threshold


@pytest.mark.slow
def test_update_matches_full_training(default_files, default_corpus, tmp_path):
    a, b = split_logs(default_files, tmp_path)
    truth = default_corpus.truth
    test = [t for t in sorted(truth) if is_test_token(t)]

    def f1(cfg):
        vs = list(pipeline.score(cfg, test))
        return metrics(confusion(vs, truth)).f1

    common = dict(embed=EmbedConfig(), clf_epochs=50, label_holdout=0.2)
    inc = cfg_for(default_files, tmp_path, "inc.bin", logs=[str(a)], **common)
    pipeline.train_all(inc)
    pipeline.update(inc, [str(b)])
    full = cfg_for(default_files, tmp_path, "full.bin", **common)
    pipeline.train_all(full)
    f_inc, f_full = f1(inc), f1(full)
    assert f_full > 0.5
    assert abs(f_inc - f_full) <= 0.05
