import logging
import math

import numpy as np
import pytest

from maskflow.dataset import generate_synthetic_video, parse_scene_text
from maskflow.errors import MigrationError, ValidationError
from maskflow.training import (
    DEFAULT_PARTITION,
    PARAM_GROUPS,
    ParamPartition,
    PointPromptNet,
    TrainingConfig,
    accumulate_and_step,
    apply_warmup_policy,
    init_state,
    load_checkpoint,
    lr_at,
    partition_parameters,
    rasterize_prompts,
    save_checkpoint,
    segmentation_loss,
    train_reference,
    training_iou,
)
from maskflow.training.loop import CHECKPOINT_VERSION

TRAIN_SCENES = [
    """
    video_id: trainA
    frames: 10
    width: 32
    height: 24
    background: 15,15,15
    shape: ellipse class=2 color=230,60,60 center=9,12 axes=5,4 velocity=1,0
    shape: rect class=9 color=60,220,90 origin=20,4 size=7,6 velocity=0,1
    """,
    """
    video_id: trainB
    frames: 10
    width: 32
    height: 24
    background: 15,15,15
    shape: rect class=4 color=70,90,230 origin=4,14 size=8,6 velocity=1,0
    shape: ellipse class=7 color=230,200,50 center=24,8 axes=4,4 velocity=0,1
    """,
]

ALL_TRAINABLE = ParamPartition(frozen=frozenset(), trainable=frozenset(PARAM_GROUPS))
ALL_FROZEN = ParamPartition(frozen=frozenset(PARAM_GROUPS), trainable=frozenset())


@pytest.fixture(scope="module")
def train_data():
    return [generate_synthetic_video(parse_scene_text(s)) for s in TRAIN_SCENES]


class _StubModel:
    """Bare parameter container compatible with the optimizer helpers."""

    def __init__(self, params):
        self.params = params

    def group_of(self, name):
        return name.split("/", 1)[0]


# ---------------------------------------------------------------------------
# Learning-rate schedule
# ---------------------------------------------------------------------------

def test_lr_starts_at_configured_value():
    assert lr_at(0, TrainingConfig()) == 1e-4


def test_lr_constant_before_first_decay():
    cfg = TrainingConfig()
    assert lr_at(499, cfg) == 1e-4


def test_lr_after_two_decays():
    cfg = TrainingConfig(decay_factor=0.5, decay_interval=500)
    assert lr_at(1000, cfg) == pytest.approx(2.5e-5, rel=1e-12)


def test_lr_breakpoints_exactly_at_interval_multiples():
    cfg = TrainingConfig(decay_interval=500)
    for k in range(4):
        boundary = 500 * (k + 1)
        assert lr_at(boundary - 1, cfg) == lr_at(500 * k, cfg)
        assert lr_at(boundary, cfg) == lr_at(boundary - 1, cfg) * cfg.decay_factor


def test_lr_non_increasing():
    cfg = TrainingConfig(decay_interval=7, decay_factor=0.3)
    values = [lr_at(step, cfg) for step in range(100)]
    assert all(b <= a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# Warm-up policy
# ---------------------------------------------------------------------------

def test_warmup_zeroes_first_five_frames():
    weights = apply_warmup_policy(10, TrainingConfig())
    assert weights.tolist() == [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]


def test_warmup_clamps_and_warns_on_short_video(caplog):
    with caplog.at_level(logging.WARNING):
        weights = apply_warmup_policy(3, TrainingConfig(warmup_frames=5))
    assert weights.tolist() == [0, 0, 0]
    assert "warm-up" in caplog.text


def test_warmup_zero_disables_masking():
    assert apply_warmup_policy(4, TrainingConfig(warmup_frames=0)).tolist() == [1, 1, 1, 1]


# ---------------------------------------------------------------------------
# Accumulation / optimizer
# ---------------------------------------------------------------------------

def test_accumulation_one_updates_every_micro_step():
    model = PointPromptNet(seed=0)
    partition_parameters(model, ALL_TRAINABLE)
    cfg = TrainingConfig(accumulation_steps=1)
    state = init_state(model, cfg)
    rng = np.random.default_rng(0)
    before = model.clone_params()
    for i in range(3):
        grads = {k: rng.normal(size=v.shape) for k, v in model.params.items()}
        accumulate_and_step(state, model, grads, cfg)
        assert state.optimizer_step == i + 1
    assert any(not np.array_equal(before[k], model.params[k]) for k in before)


def test_eight_micro_steps_accumulation_four_gives_two_updates():
    model = PointPromptNet(seed=0)
    partition_parameters(model, ALL_TRAINABLE)
    cfg = TrainingConfig(accumulation_steps=4)
    state = init_state(model, cfg)
    rng = np.random.default_rng(1)
    for _ in range(8):
        grads = {k: rng.normal(size=v.shape) for k, v in model.params.items()}
        accumulate_and_step(state, model, grads, cfg)
    assert state.micro_step == 8
    assert state.optimizer_step == 2


def test_accumulated_identical_micro_grads_equal_full_batch():
    cfg_micro = TrainingConfig(accumulation_steps=4, learning_rate=1e-3)
    cfg_full = TrainingConfig(accumulation_steps=1, learning_rate=1e-3)
    model_a = PointPromptNet(seed=3)
    model_b = PointPromptNet(seed=3)
    partition_parameters(model_a, ALL_TRAINABLE)
    partition_parameters(model_b, ALL_TRAINABLE)
    rng = np.random.default_rng(3)
    g = {k: rng.normal(size=v.shape) for k, v in model_a.params.items()}
    state_a = init_state(model_a, cfg_micro)
    for _ in range(4):
        accumulate_and_step(state_a, model_a, {k: v.copy() for k, v in g.items()}, cfg_micro)
    state_b = init_state(model_b, cfg_full)
    accumulate_and_step(state_b, model_b, g, cfg_full)
    for name in model_a.params:
        np.testing.assert_allclose(model_a.params[name], model_b.params[name], atol=1e-10, rtol=0)


def test_accumulation_equivalence_on_quadratic_toy():
    # L_i(theta) = 0.5 * ||theta - t_i||^2, micro grads all taken at theta0
    rng = np.random.default_rng(12)
    theta0 = rng.normal(size=20)
    targets = rng.normal(size=(4, 20))
    cfg_micro = TrainingConfig(accumulation_steps=4, learning_rate=0.05)
    cfg_full = TrainingConfig(accumulation_steps=1, learning_rate=0.05)

    micro_model = _StubModel({"g/theta": theta0.copy()})
    state = init_state(micro_model, cfg_micro)
    for t in targets:
        accumulate_and_step(state, micro_model, {"g/theta": theta0 - t}, cfg_micro)
    assert state.optimizer_step == 1

    full_model = _StubModel({"g/theta": theta0.copy()})
    state_full = init_state(full_model, cfg_full)
    accumulate_and_step(state_full, full_model, {"g/theta": theta0 - targets.mean(axis=0)}, cfg_full)

    np.testing.assert_allclose(
        micro_model.params["g/theta"], full_model.params["g/theta"], atol=1e-10, rtol=0
    )


def test_state_invariants_hold_under_random_call_sequences():
    rng = np.random.default_rng(8)
    for trial in range(10):
        accumulation = int(rng.integers(1, 6))
        cfg = TrainingConfig(
            accumulation_steps=accumulation,
            decay_interval=int(rng.integers(1, 5)),
            decay_factor=float(rng.uniform(0.2, 0.9)),
            learning_rate=float(rng.uniform(1e-4, 1e-2)),
        )
        model = PointPromptNet(seed=trial)
        partition_parameters(model, DEFAULT_PARTITION)
        state = init_state(model, cfg)
        trainable = {k: v.shape for k, v in model.params.items() if not k.startswith("image_")}
        for _ in range(int(rng.integers(5, 40))):
            grads = {k: rng.normal(size=shape) for k, shape in trainable.items()}
            accumulate_and_step(state, model, grads, cfg)
            assert state.optimizer_step == state.micro_step // cfg.accumulation_steps
            expected_lr = cfg.learning_rate * cfg.decay_factor ** (
                state.optimizer_step // cfg.decay_interval
            )
            assert math.isclose(state.current_lr, expected_lr, rel_tol=1e-12)


def test_gradient_shape_mismatch_rejected():
    model = PointPromptNet(seed=0)
    partition_parameters(model, ALL_TRAINABLE)
    cfg = TrainingConfig()
    state = init_state(model, cfg)
    grads = {k: np.zeros(3) for k in model.params}
    with pytest.raises(ValidationError, match="shape"):
        accumulate_and_step(state, model, grads, cfg)


def test_gradient_keys_must_match_trainable_set():
    model = PointPromptNet(seed=0)
    partition_parameters(model, DEFAULT_PARTITION)
    cfg = TrainingConfig()
    state = init_state(model, cfg)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}  # includes frozen
    with pytest.raises(ValidationError, match="trainable"):
        accumulate_and_step(state, model, grads, cfg)


# ---------------------------------------------------------------------------
# Parameter partition
# ---------------------------------------------------------------------------

def test_unknown_group_rejected():
    model = PointPromptNet(seed=0)
    bogus = ParamPartition(frozen=frozenset({"nonexistent"}), trainable=frozenset(PARAM_GROUPS))
    with pytest.raises(ValidationError, match="unknown"):
        partition_parameters(model, bogus)


def test_partition_must_cover_all_groups():
    model = PointPromptNet(seed=0)
    partial = ParamPartition(frozen=frozenset({"image_encoder"}), trainable=frozenset({"mask_decoder"}))
    with pytest.raises(ValidationError, match="cover"):
        partition_parameters(model, partial)


def test_freeze_all_keeps_parameters_bit_identical(train_data):
    cfg = TrainingConfig(learning_rate=0.01, max_steps=10, warmup_frames=0, seed=0)
    model = PointPromptNet(seed=0)
    before = {k: v.tobytes() for k, v in model.params.items()}
    train_reference(model, train_data, cfg, partition=ALL_FROZEN)
    after = {k: v.tobytes() for k, v in model.params.items()}
    assert before == after


def test_freeze_none_loss_decreases_on_separable_fixture(train_data):
    cfg = TrainingConfig(learning_rate=0.01, max_steps=50, warmup_frames=0, seed=1)
    model = PointPromptNet(seed=1)
    state = train_reference(model, train_data, cfg, partition=ALL_TRAINABLE)
    losses = state.loss_history
    first = float(np.mean(losses[:10]))
    last = float(np.mean(losses[-10:]))
    assert last < 0.5 * first


def test_default_partition_freezes_encoder_and_trains_the_rest(train_data):
    cfg = TrainingConfig(learning_rate=0.01, max_steps=200, warmup_frames=0, seed=2)
    model = PointPromptNet(seed=2)
    before = model.clone_params()
    train_reference(model, train_data, cfg, partition=DEFAULT_PARTITION)
    for name in ("image_encoder/weight", "image_encoder/bias"):
        assert model.params[name].tobytes() == before[name].tobytes()
    for name in ("prompt_encoder/weight", "mask_decoder/weight"):
        assert not np.array_equal(model.params[name], before[name])


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------

def _loss_value(model, frame, heat, target):
    logits, _ = model.forward(frame, heat)
    loss, _ = segmentation_loss(logits, target, 1.0, 1.0)
    return loss


def test_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(99)
    model = PointPromptNet(channels=4, seed=99)
    frame = rng.random((8, 10, 3))
    heat = rng.normal(size=(8, 10))
    target = (rng.random((8, 10)) < 0.5).astype(np.float64)

    logits, cache = model.forward(frame, heat)
    _, d_logits = segmentation_loss(logits, target, 1.0, 1.0)
    analytic = model.backward(cache, d_logits)

    h = 1e-5
    worst = 0.0
    for name, param in model.params.items():
        flat = param.ravel()
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            up = _loss_value(model, frame, heat, target)
            flat[idx] = original - h
            down = _loss_value(model, frame, heat, target)
            flat[idx] = original
            numeric = (up - down) / (2 * h)
            a = analytic[name].ravel()[idx]
            denom = max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, abs(a - numeric) / denom)
    assert worst < 1e-4


# ---------------------------------------------------------------------------
# Full reference run and checkpoints
# ---------------------------------------------------------------------------

def test_max_steps_zero_checkpoint_equals_initialization(train_data, tmp_path):
    cfg = TrainingConfig(max_steps=0, seed=0)
    model = PointPromptNet(seed=0)
    init = model.clone_params()
    path = tmp_path / "init.ckpt"
    state = train_reference(model, train_data, cfg, checkpoint_path=path)
    assert state.micro_step == 0
    groups, tensors = load_checkpoint(path)
    assert groups == PARAM_GROUPS
    for name, value in init.items():
        assert np.array_equal(tensors[name], value.astype(np.float32))


def test_toy_run_reaches_iou_080(train_data, tmp_path):
    cfg = TrainingConfig(learning_rate=0.01, max_steps=300, warmup_frames=2, seed=0)
    model = PointPromptNet(seed=0)
    state = train_reference(
        model, train_data, cfg, checkpoint_path=tmp_path / "toy.ckpt",
        log_path=tmp_path / "log.csv",
    )
    assert training_iou(model, train_data) >= 0.8
    assert state.optimizer_step == 300
    manifest = (tmp_path / "toy.ckpt.manifest.txt").read_text()
    assert "config.learning_rate = 0.01" in manifest
    assert "metrics.train_iou" in manifest


def test_loss_history_has_one_entry_per_micro_step(train_data):
    cfg = TrainingConfig(learning_rate=0.01, max_steps=12, warmup_frames=0, seed=0)
    model = PointPromptNet(seed=0)
    state = train_reference(model, train_data, cfg)
    assert len(state.loss_history) == state.micro_step
    assert state.micro_step == 12 * cfg.accumulation_steps


def test_training_log_schema(train_data, tmp_path):
    import csv

    cfg = TrainingConfig(learning_rate=0.01, max_steps=3, warmup_frames=0, seed=0)
    model = PointPromptNet(seed=0)
    train_reference(model, train_data, cfg, log_path=tmp_path / "log.csv")
    with (tmp_path / "log.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["micro_step", "optimizer_step", "lr", "loss"]
    assert len(rows) == 1 + 3 * cfg.accumulation_steps


def test_checkpoint_version_mismatch_raises(train_data, tmp_path):
    model = PointPromptNet(seed=0)
    path = save_checkpoint(tmp_path / "v.ckpt", model)
    data = bytearray(path.read_bytes())
    data[4] = CHECKPOINT_VERSION + 1
    path.write_bytes(bytes(data))
    with pytest.raises(MigrationError, match="version"):
        load_checkpoint(path)


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainingConfig(accumulation_steps=0)
    with pytest.raises(ValidationError):
        TrainingConfig(decay_factor=1.0)
    with pytest.raises(ValidationError):
        TrainingConfig(learning_rate=0.0)
