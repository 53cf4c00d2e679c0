import numpy as np
import pytest
import torch

from cupdisc.data import FundusSample
from cupdisc.engine import (
    CHECKPOINT_FORMAT_VERSION,
    CompatibilityError,
    EvalReport,
    HistoryRow,
    ImageResult,
    TrainConfig,
    decode_labels,
    evaluate,
    history_from_text,
    history_to_text,
    load_checkpoint,
    overfit_single,
    predict,
    save_checkpoint,
    train,
)
from cupdisc.metrics import evaluate_pair
from cupdisc.model import build_network
from cupdisc.netspec import TensorShape, default_network_spec
from cupdisc.synthetic import phantom_sample


def quick_config(**kw):
    base = dict(epochs=1, batch_size=2, learning_rate=1e-3, seed=0)
    base.update(kw)
    return TrainConfig(**base)


# -- configuration ------------------------------------------------------------

def test_train_config_validation():
    for bad in (
        dict(epochs=0),
        dict(batch_size=0),
        dict(learning_rate=0.0),
        dict(learning_rate=-1e-3),
        dict(lr_decay=0.0),
        dict(lr_decay=1.5),
        dict(early_stop_patience=0),
    ):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig(lr_decay=1.0).lr_decay == 1.0


# -- training loop ------------------------------------------------------------

def test_single_epoch_run(tiny_spec, tiny_samples):
    ckpt, history = train(tiny_spec, tiny_samples[:2], tiny_samples[2:], quick_config())
    assert len(history) == 1
    assert history[0].epoch == 1
    assert np.isfinite(history[0].train_loss)
    assert set(ckpt) == {
        "format_version",
        "fingerprint",
        "spec_text",
        "state_dict",
        "epoch",
        "metrics",
        "seed",
        "config",
        "diverged",
    }
    assert ckpt["format_version"] == CHECKPOINT_FORMAT_VERSION
    assert ckpt["fingerprint"] == tiny_spec.fingerprint()
    assert ckpt["epoch"] == 1
    assert ckpt["diverged"] is False
    assert TrainConfig(**ckpt["config"]) == quick_config()


def test_training_is_deterministic(tiny_spec, tiny_samples):
    cfg = quick_config(epochs=2)
    ckpt_a, hist_a = train(tiny_spec, tiny_samples, [], cfg)
    ckpt_b, hist_b = train(tiny_spec, tiny_samples, [], cfg)
    assert history_to_text(hist_a) == history_to_text(hist_b)
    for key in ckpt_a["state_dict"]:
        assert torch.equal(ckpt_a["state_dict"][key], ckpt_b["state_dict"][key])


def test_empty_val_set_validates_on_train(tiny_spec, tiny_samples):
    ckpt, history = train(tiny_spec, tiny_samples[:1], [], quick_config(batch_size=1))
    assert len(history) == 1
    assert 0.0 <= ckpt["metrics"]["val_dice_od"] <= 1.0


def test_augmented_epoch_runs(tiny_spec, tiny_samples):
    cfg = quick_config(augmentation=True)
    ckpt, history = train(tiny_spec, tiny_samples, [], cfg)
    assert len(history) == 1 and ckpt["diverged"] is False


def test_divergence_guard(tiny_spec, tiny_samples):
    cfg = quick_config(epochs=5, learning_rate=1e3)
    messages = []
    ckpt, history = train(tiny_spec, tiny_samples, [], cfg, log=messages.append)
    assert ckpt["diverged"] is True
    assert len(history) < cfg.epochs
    assert any("non-finite" in m for m in messages)


def test_early_stopping(tiny_spec, tiny_samples, rng):
    # validating against an all-background image pins the score at zero
    # (any non-empty prediction counts as pure false positives), so no
    # epoch can improve on the first and patience 1 stops after epoch 2
    image = rng.integers(0, 255, size=(64, 64, 3), dtype=np.uint8)
    flat = FundusSample(id="flat", image=image, labels=np.zeros((64, 64), dtype=np.uint8))
    cfg = quick_config(epochs=10, learning_rate=1e-12, early_stop_patience=1)
    ckpt, history = train(tiny_spec, tiny_samples, [flat], cfg)
    assert [r.val_dice_od for r in history] == [0.0, 0.0]
    assert len(history) == 2
    assert ckpt["epoch"] == 1


def test_train_rejects_empty_or_mismatched_samples(tiny_spec, tiny_samples):
    with pytest.raises(ValueError):
        train(tiny_spec, [], [], quick_config())
    wrong = phantom_sample(96, sample_id="big", seed=0)
    with pytest.raises(ValueError):
        train(tiny_spec, [wrong], [], quick_config())


# -- single-sample overfit ------------------------------------------------------

def test_overfit_trace_bookkeeping(tiny_spec, tiny_samples):
    trace = overfit_single(tiny_spec, tiny_samples[0], iterations=1)
    assert len(trace) == 1
    assert len(trace.dice_od) == len(trace.dice_oc) == 1
    assert np.isfinite(trace.losses[0])
    with pytest.raises(ValueError):
        overfit_single(tiny_spec, tiny_samples[0], iterations=0)


def test_overfit_loss_decreases(tiny_spec, tiny_samples):
    trace = overfit_single(tiny_spec, tiny_samples[1], iterations=40, seed=1)
    smoothed = trace.smoothed_losses()
    assert len(smoothed) == 40
    assert smoothed[-1] < smoothed[0]


def test_overfit_all_background_sample(tiny_spec, rng):
    image = rng.integers(0, 255, size=(64, 64, 3), dtype=np.uint8)
    sample = FundusSample(id="bg", image=image, labels=np.zeros((64, 64), dtype=np.uint8))
    trace = overfit_single(tiny_spec, sample, iterations=2)
    assert all(np.isfinite(v) for v in trace.losses)


# -- checkpoints ----------------------------------------------------------------

def test_checkpoint_round_trip_bit_identical_eval(tiny_spec, tiny_samples, tmp_path):
    ckpt, _ = train(tiny_spec, tiny_samples, [], quick_config())
    path = tmp_path / "model.pt"
    save_checkpoint(ckpt, path)

    net_a, meta_a = load_checkpoint(path)
    net_b, meta_b = load_checkpoint(path, spec=tiny_spec)
    assert meta_a == meta_b
    assert meta_a.epoch == ckpt["epoch"]
    assert meta_a.fingerprint == tiny_spec.fingerprint()
    csv_a = evaluate(net_a, tiny_samples).to_csv_text()
    csv_b = evaluate(net_b, tiny_samples).to_csv_text()
    assert csv_a == csv_b


def test_checkpoint_architecture_mismatch(tiny_spec, tiny_samples, tmp_path):
    ckpt, _ = train(tiny_spec, tiny_samples[:1], [], quick_config(batch_size=1))
    path = tmp_path / "model.pt"
    save_checkpoint(ckpt, path)
    other = default_network_spec(TensorShape(64, 64, 3), skip_mode="add")
    with pytest.raises(CompatibilityError, match="different architecture"):
        load_checkpoint(path, spec=other)


def test_checkpoint_rejects_garbage_file(tmp_path):
    path = tmp_path / "broken.pt"
    path.write_bytes(b"this is not a checkpoint")
    with pytest.raises(CompatibilityError, match="cannot read"):
        load_checkpoint(path)


def test_checkpoint_rejects_unknown_version(tiny_spec, tiny_samples, tmp_path):
    ckpt, _ = train(tiny_spec, tiny_samples[:1], [], quick_config(batch_size=1))
    ckpt["format_version"] = 999
    path = tmp_path / "future.pt"
    save_checkpoint(ckpt, path)
    with pytest.raises(CompatibilityError, match="format"):
        load_checkpoint(path)


def test_checkpoint_rejects_tampered_fingerprint(tiny_spec, tiny_samples, tmp_path):
    ckpt, _ = train(tiny_spec, tiny_samples[:1], [], quick_config(batch_size=1))
    ckpt["fingerprint"] = "0" * 64
    path = tmp_path / "tampered.pt"
    save_checkpoint(ckpt, path)
    with pytest.raises(CompatibilityError, match="spec text"):
        load_checkpoint(path)


# -- evaluation ------------------------------------------------------------------

class OracleNet:
    """Duck-typed stand-in that answers with the ground truth itself."""

    def __init__(self, spec, samples):
        self.spec = spec
        self._probs = [np.eye(3, dtype=np.float32)[s.labels].transpose(2, 0, 1) for s in samples]
        self._next = 0

    def predict_probs(self, x):
        probs = torch.from_numpy(self._probs[self._next])
        self._next += 1
        return probs.unsqueeze(0)


def test_evaluate_perfect_predictions(tiny_spec, tiny_samples):
    report = evaluate(OracleNet(tiny_spec, tiny_samples), tiny_samples)
    report.verify()
    for s in ("disc", "cup"):
        assert report.aggregates[s]["dice"] == 1.0
        assert report.aggregates[s]["overlap_error"] == 0.0
        assert report.aggregates[s]["balanced_accuracy"] == 1.0
    assert all(r.cdr is not None for r in report.rows)


def test_evaluate_requires_samples(tiny_spec):
    net = build_network(tiny_spec, seed=0, mode="infer")
    with pytest.raises(ValueError):
        evaluate(net, [])


def test_eval_report_csv_round_trip(tiny_spec, tiny_samples):
    net = build_network(tiny_spec, seed=5, mode="infer")
    report = evaluate(net, tiny_samples)
    report.verify()
    back = EvalReport.from_csv_text(report.to_csv_text())
    assert back.rows == report.rows
    assert back.aggregates == report.aggregates
    back.verify()
    with pytest.raises(ValueError):
        EvalReport.from_csv_text("id,bogus\nx,1\n")


def test_eval_report_verify_catches_tampering(tiny_spec, tiny_samples):
    net = build_network(tiny_spec, seed=5, mode="infer")

    report = evaluate(net, tiny_samples)
    report.rows[0].scores["disc"]["dice"] = 0.5
    with pytest.raises(ValueError):
        report.verify()

    report = evaluate(net, tiny_samples)
    report.aggregates["cup"]["jaccard"] += 1e-3
    with pytest.raises(ValueError, match="aggregate"):
        report.verify()

    report = evaluate(net, tiny_samples)
    report.rows[0].scores["cup"]["balanced_accuracy"] += 1e-6
    with pytest.raises(ValueError, match="balanced"):
        report.verify()


def test_screen_counts():
    scores = evaluate_pair(np.zeros((4, 4), np.uint8), np.zeros((4, 4), np.uint8))
    rows = [
        ImageResult("a", scores, 0.7, True),
        ImageResult("b", scores, 0.5, False),
        ImageResult("c", scores, None, None),
    ]
    report = EvalReport(rows)
    assert report.screen_counts == (1, 2)
    table = report.to_table_text()
    assert "1/2" in table


# -- history text -----------------------------------------------------------------

def test_history_text_round_trip():
    rows = [
        HistoryRow(1, 0.6873920154571533, 0.1, 0.2),
        HistoryRow(2, 0.5012345678901234, 0.93, 0.87),
    ]
    text = history_to_text(rows)
    assert text.startswith("#")
    assert history_from_text(text) == rows


# -- whole-image prediction --------------------------------------------------------

def test_predict_deterministic_and_decoded(tiny_spec):
    net = build_network(tiny_spec, seed=7, mode="infer")
    image = phantom_sample(64, seed=3).image
    a = predict(net, image)
    b = predict(net, image)
    assert np.array_equal(a.labels, b.labels)
    assert a.labels.shape == (64, 64)
    assert set(np.unique(a.labels)) <= {0, 1, 2}
    assert a.source_labels is None  # already at network resolution


def test_predict_resizes_non_square_source(tiny_spec):
    net = build_network(tiny_spec, seed=7, mode="infer")
    image = phantom_sample(96, seed=4).image[:, :64]
    out = predict(net, image)
    assert out.labels.shape == (64, 64)
    assert out.source_labels is not None
    assert out.source_labels.shape == (96, 64)
    assert set(np.unique(out.source_labels)) <= {0, 1, 2}
    with pytest.raises(ValueError):
        predict(net, image[:, :, 0])


def test_decode_labels_tie_breaks_low():
    probs = np.full((3, 2, 2), 1 / 3)
    assert (decode_labels(probs) == 0).all()
