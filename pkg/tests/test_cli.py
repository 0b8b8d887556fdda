import json
import os

import numpy as np
import pytest

from skullmatch import cli, pipeline
from skullmatch.errors import NumericalError
from skullmatch.serialize import load_coupled, load_dictionary, load_feature_matrix


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    rc = cli.main(["synth", "--out", str(out), "--subjects", "8",
                   "--noise", "0.05", "--seed", "5"])
    assert rc == 0
    return out


def manifest(corpus_dir):
    return str(corpus_dir / "manifest.json")


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_manifest_and_images(corpus_dir):
    recs = json.load(open(manifest(corpus_dir)))
    assert len(recs) == 8 * 2 + 16
    for r in recs[:4]:
        assert os.path.exists(os.path.join(corpus_dir, r["path"]))


def test_synth_requires_seed(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["synth", "--out", str(tmp_path / "x"), "--subjects", "8"])
    assert err.value.code == 2


def test_synth_too_few_subjects_is_argument_error(tmp_path):
    rc = cli.main(["synth", "--out", str(tmp_path / "x"), "--subjects", "3",
                   "--seed", "0"])
    assert rc == 2


# ---------------------------------------------------------------------------
# folds


def test_folds_stdout_and_file_agree(corpus_dir, tmp_path, capsys):
    rc = cli.main(["folds", "--manifest", manifest(corpus_dir),
                   "--protocol", "P1", "--seed", "2"])
    assert rc == 0
    text = capsys.readouterr().out.strip()
    out = tmp_path / "plan.json"
    rc = cli.main(["folds", "--manifest", manifest(corpus_dir),
                   "--protocol", "P1", "--seed", "2", "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    assert out.read_text().strip() == text
    plan = json.loads(text)
    assert len(plan["folds"]) == 5


def test_folds_missing_manifest_is_data_error(tmp_path):
    rc = cli.main(["folds", "--manifest", str(tmp_path / "nope.json"),
                   "--seed", "0"])
    assert rc == 3


# ---------------------------------------------------------------------------
# extract


def test_extract_binary_round_trip(corpus_dir, tmp_path, capsys):
    out = tmp_path / "feats.xfml"
    rc = cli.main(["extract", "--manifest", manifest(corpus_dir),
                   "--kind", "pixels", "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    F = load_feature_matrix(str(out))
    assert F.shape == (64 * 64, 32)


def test_extract_csv(corpus_dir, tmp_path, capsys):
    out = tmp_path / "feats.csv"
    rc = cli.main(["extract", "--manifest", manifest(corpus_dir),
                   "--kind", "lbp", "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    header = open(out).readline().strip()
    assert len(header.split(",")) == 32


# ---------------------------------------------------------------------------
# train


def test_train_dl_saves_dictionary(corpus_dir, tmp_path, capsys):
    out = tmp_path / "dico.xfml"
    rc = cli.main(["train", "--manifest", manifest(corpus_dir),
                   "--method", "dl", "--out", str(out), "--seed", "1"])
    assert rc == 0
    capsys.readouterr()
    dico = load_dictionary(str(out))
    assert dico.D.shape[1] <= 24


def test_train_ustl_saves_model_and_projection(corpus_dir, tmp_path, capsys):
    out = tmp_path / "model.xfml"
    rc = cli.main(["train", "--manifest", manifest(corpus_dir),
                   "--method", "ustl", "--out", str(out), "--seed", "1",
                   "--tl-dim", "8", "--tl-iters", "5"])
    assert rc == 0
    capsys.readouterr()
    model = load_coupled(str(out))
    assert model.T_f.shape == model.T_s.shape
    proj = json.load(open(str(out) + ".projection.json"))
    assert proj["kind"] == "hog"
    assert len(proj["components"]) == model.T_f.shape[0]
    assert np.isfinite(proj["scale"])


# ---------------------------------------------------------------------------
# eval / report


def test_eval_emits_reports_deterministically(corpus_dir, tmp_path, capsys):
    args = ["eval", "--manifest", manifest(corpus_dir), "--protocol", "P1",
            "--method", "hog"]
    rc = cli.main(args + ["--out", str(tmp_path / "a")])
    assert rc == 0
    rc = cli.main(args + ["--out", str(tmp_path / "b")])
    assert rc == 0
    capsys.readouterr()
    for name in ("results.json", "cmc.csv", "scores.csv", "runconfig.json"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, name
    results = json.load(open(tmp_path / "a" / "results.json"))
    assert set(results) >= {"mean_rank1", "mean_rank5", "per_fold", "config"}


def test_report_prints_summary(corpus_dir, tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(["eval", "--manifest", manifest(corpus_dir), "--method", "pixels",
              "--out", str(out)])
    capsys.readouterr()
    rc = cli.main(["report", "--results", str(out / "results.json")])
    assert rc == 0
    text = capsys.readouterr().out
    assert "mean rank-1" in text
    assert "fold 5" in text


def test_eval_p2_without_distractors_is_protocol_error(corpus_dir, tmp_path):
    rc = cli.main(["eval", "--manifest", manifest(corpus_dir),
                   "--protocol", "P2", "--method", "hog",
                   "--out", str(tmp_path / "p2")])
    assert rc == 3


def test_eval_unknown_method_exits_2(corpus_dir, tmp_path):
    with pytest.raises(SystemExit) as err:
        cli.main(["eval", "--manifest", manifest(corpus_dir),
                  "--method", "resnet", "--out", str(tmp_path / "x")])
    assert err.value.code == 2


def test_numerical_failure_exits_4(corpus_dir, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("transform update diverged")

    monkeypatch.setattr(pipeline, "run_protocol", boom)
    rc = cli.main(["eval", "--manifest", manifest(corpus_dir),
                   "--method", "hog", "--out", str(tmp_path / "x")])
    assert rc == 4


def test_entry_raises_system_exit(corpus_dir, capsys):
    with pytest.raises(SystemExit) as err:
        import sys
        argv = sys.argv
        sys.argv = ["skullmatch", "report", "--results", "missing.json"]
        try:
            cli.entry()
        finally:
            sys.argv = argv
    assert err.value.code == 3
