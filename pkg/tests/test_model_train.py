import numpy as np
import pytest

import synth
from mater.features import FeatureBundle
from mater.neural import (
    PRESETS,
    CheckpointError,
    ModelConfig,
    TrainConfig,
    TrainingError,
    build_model,
    forward,
    load_model,
    predict,
    save_model,
    train,
)
from mater.neural import checkpoint
from mater.neural.model import ple_encode
from mater.neural.train import _batches, prepare_targets

DESK = PRESETS["desk"]


@pytest.fixture(scope="module")
def data():
    return synth.class_bundles(n=24, seed=3)


def _zeroed(model):
    m = model.copy()
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    return m


# --- model structure -----------------------------------------------------------------


def test_slot_widths(data):
    bundles, _ = data
    m = build_model(bundles, DESK)
    assert m.sources == {"a": 16, "b": 8} and not m.pooled
    assert m.head_width == 32 + 16 + 16
    one = build_model(bundles, ModelConfig(hidden_word=4, hidden_utt=4, pool_dim=4, embeddings=("a",)))
    assert one.pooled and one.embed_width == 32 and "pool.v" in one.params
    direct = build_model(bundles, ModelConfig(hidden_word=4, hidden_utt=4, embeddings=("b",)))
    assert not direct.pooled and direct.embed_width == 8 and "pool.W" not in direct.params
    with pytest.raises(ValueError, match="not present"):
        build_model(bundles, ModelConfig(embeddings=("zz",)))
    with pytest.raises(ValueError, match="no feature level"):
        build_model([FeatureBundle(np.zeros((1, 42)), np.zeros(3))], ModelConfig(use_word=False, use_utterance=False))


def test_zero_params_give_uniform_output(data):
    bundles, _ = data
    m = _zeroed(build_model(bundles, DESK))
    out, _ = forward(m, bundles[0])
    assert np.all(out == 0)
    probs = predict(m, bundles[:5])
    assert np.all(probs == 0.125)


def test_utterance_only_bundle_uses_zero_slots(data):
    bundles, _ = data
    m = build_model(bundles, DESK, seed=5)
    bare = FeatureBundle(np.zeros((0, 42)), bundles[0].utterance, {})
    out, _ = forward(m, bare)
    # reference: head applied to [0 (fusion) | PLE(utterance) | 0 (words)]
    h_u, _ = ple_encode(bare.utterance, m.buffers["ple.edges"], m.params["ple.W"], m.params["ple.b"])
    z = np.concatenate([np.zeros(32), h_u, np.zeros(16)])
    np.testing.assert_allclose(out, z @ m.params["head.W"] + m.params["head.b"], rtol=1e-12, atol=1e-14)


def test_forward_dimension_errors(data):
    bundles, _ = data
    m = build_model(bundles, DESK)
    b = bundles[0]
    with pytest.raises(ValueError, match="word rows"):
        forward(m, FeatureBundle(np.zeros((3, 40)), b.utterance, b.embeddings))
    with pytest.raises(ValueError, match="utterance"):
        forward(m, FeatureBundle(b.word_seq, np.zeros(30), b.embeddings))
    with pytest.raises(ValueError, match="embedding 'a'"):
        forward(m, FeatureBundle(b.word_seq, b.utterance, {"a": np.zeros((2, 5))}))


def test_build_rejects_empty():
    with pytest.raises(ValueError):
        build_model([], DESK)


# --- training ------------------------------------------------------------------------------


def test_history_length_and_determinism(data):
    bundles, labels = data
    cfg = TrainConfig(epochs=3, learning_rate=1e-3, batch_size=8, seed=7)
    m1, h1 = train(bundles, labels, cfg, DESK)
    m2, h2 = train(bundles, labels, cfg, DESK)
    assert len(h1) == 3 and all(np.isfinite(h1.loss))
    assert h1.loss == h2.loss and h1.metric == h2.metric
    assert all(m1.params[k].tobytes() == m2.params[k].tobytes() for k in m1.params)
    m3, _ = train(bundles, labels, TrainConfig(epochs=3, learning_rate=1e-3, batch_size=8, seed=8), DESK)
    assert any(m1.params[k].tobytes() != m3.params[k].tobytes() for k in m1.params)


def test_zero_learning_rate_changes_nothing(data):
    bundles, labels = data
    start = build_model(bundles, DESK, seed=2)
    m, h = train(bundles, labels, TrainConfig(epochs=4, learning_rate=0.0, batch_size=5, seed=2), DESK, model=start)
    assert all(m.params[k].tobytes() == start.params[k].tobytes() for k in start.params)
    assert len(set(h.loss)) == 1 and len(set(h.metric)) == 1


def test_given_model_is_not_mutated(data):
    bundles, labels = data
    start = build_model(bundles, DESK)
    before = {k: v.copy() for k, v in start.params.items()}
    train(bundles, labels, TrainConfig(epochs=1, learning_rate=1e-2, batch_size=8), DESK, model=start)
    assert all(np.array_equal(before[k], start.params[k]) for k in before)


def test_soft_labels_train(data):
    bundles, labels = data
    rng = np.random.default_rng(0)
    soft = [0.7 * np.eye(8)[y] + 0.3 * rng.dirichlet(np.ones(8)) for y in labels]
    _, h = train(bundles, soft, TrainConfig(epochs=2, learning_rate=1e-3, batch_size=8, loss="soft_ce"), DESK)
    assert len(h) == 2 and np.all(np.isfinite(h.loss))
    Y = prepare_targets(soft, "categorical", "weighted_ce")
    assert np.array_equal(Y, np.eye(8)[labels])
    assert np.array_equal(prepare_targets(["A", "U", 5], "categorical", "weighted_ce"), np.eye(8)[[0, 7, 5]])


def test_attribute_task_with_ccc(data):
    bundles, labels = data
    targets = [(1 + (y % 7), 7 - (y % 7), 4.0) for y in labels]
    cfg = ModelConfig(task="attributes", hidden_word=8, hidden_utt=8, latent_len=4, latent_dim=16)
    m, h = train(bundles, targets, TrainConfig(epochs=3, learning_rate=1e-3, batch_size=7, loss="ccc"), cfg)
    assert len(h) == 3 and all(-1 <= v <= 1 for v in h.metric)
    pred = predict(m, bundles)
    assert pred.shape == (24, 3) and pred.min() >= 1 and pred.max() <= 7
    with pytest.raises(TrainingError, match="does not fit"):
        train(bundles, targets, TrainConfig(epochs=1), cfg)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_input_aborts(data):
    bundles, labels = data
    bad = list(bundles)
    bad[3] = FeatureBundle(bad[3].word_seq * np.inf, bad[3].utterance, bad[3].embeddings)
    with pytest.raises(TrainingError, match="epoch 1"):
        train(bad, labels, TrainConfig(epochs=2, learning_rate=1e-3, batch_size=8), DESK)


def test_training_input_errors(data):
    bundles, labels = data
    with pytest.raises(TrainingError, match="empty"):
        train([], [], TrainConfig(epochs=1), DESK)
    with pytest.raises(TrainingError, match="targets"):
        train(bundles, labels[:-1], TrainConfig(epochs=1), DESK)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(loss="mse")


def test_learning_rate_schedule():
    assert TrainConfig(epochs=5).lr_at(4) == 1e-5
    cfg = TrainConfig(epochs=5, learning_rate=1e-5, lr_final=5e-7)
    assert cfg.lr_at(0) == 1e-5 and cfg.lr_at(4) == pytest.approx(5e-7, rel=1e-12)


def test_batches_cover_order_once():
    order = np.arange(17)
    for size in (1, 4, 8, 16, 17, 40):
        parts = _batches(order, size)
        assert np.array_equal(np.concatenate(parts), order)
        if size > 1:
            assert all(len(p) >= 2 for p in parts)
        assert len(parts[-1]) >= 2


def test_history_csv(tmp_path):
    from mater.neural import History

    h = History([1.5, 0.25], [0.1, 1 / 3])
    h.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,metric" and lines[1] == "1,1.5,0.10000000000000001"
    assert float(lines[2].split(",")[2]) == 1 / 3


# --- prediction and checkpoints -----------------------------------------------------------------


def test_predict_shapes_and_simplex(data):
    bundles, _ = data
    m = build_model(bundles, DESK, seed=9)
    for k in m.params:
        m.params[k] = m.params[k] + np.random.default_rng(1).normal(size=m.params[k].shape)
    p = predict(m, bundles)
    assert p.shape == (24, 8) and np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)
    assert predict(m, bundles[:1]).shape == (1, 8)
    assert predict(m, []).shape == (0, 8)


def test_checkpoint_round_trip(tmp_path, data):
    bundles, labels = data
    m, _ = train(bundles, labels, TrainConfig(epochs=1, learning_rate=1e-3, batch_size=8), DESK)
    save_model(tmp_path / "a.ckpt", m)
    back = load_model(tmp_path / "a.ckpt")
    assert back.sources == m.sources and back.config.latent_dim == 32 and back.config.task == "categorical"
    assert np.array_equal(predict(back, bundles), predict(m, bundles))
    save_model(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_layout(tmp_path):
    checkpoint.write_tensors(tmp_path / "t.ckpt", {"b": np.array([[1.0, 2.0]]), "a": np.array(3.0)})
    raw = (tmp_path / "t.ckpt").read_bytes()
    expect = (
        b"MTRP" + (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
        + (1).to_bytes(4, "little") + b"a" + (0).to_bytes(4, "little") + np.float64(3).tobytes()
        + (1).to_bytes(4, "little") + b"b" + (2).to_bytes(4, "little")
        + (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + np.array([1.0, 2.0], "<f8").tobytes()
    )
    assert raw == expect


def test_checkpoint_errors(tmp_path, data):
    m = build_model(data[0], DESK)
    save_model(tmp_path / "m.ckpt", m)
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[:-3])
    with pytest.raises(CheckpointError, match="truncated"):
        load_model(tmp_path / "t.ckpt")
    (tmp_path / "x.ckpt").write_bytes(raw + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        load_model(tmp_path / "x.ckpt")
    (tmp_path / "g.ckpt").write_bytes(b"GGUF" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_model(tmp_path / "g.ckpt")
    checkpoint.write_tensors(tmp_path / "n.ckpt", {"param.head.W": np.zeros((2, 2))})
    with pytest.raises(CheckpointError, match="metadata"):
        load_model(tmp_path / "n.ckpt")
