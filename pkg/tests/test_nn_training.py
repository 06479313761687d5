import numpy as np
import pytest

from volumetrica.grid import Spacing, VoxelGrid
from volumetrica.nn.inference import (
    cnn_volume,
    dice,
    extract_tumor_mask,
    mask_training_target,
    prepare_input,
    resize_volume,
)
from volumetrica.nn.network import build_segmenter_3d, predict
from volumetrica.nn.optim import AdamState, SgdState, optimizer_step
from volumetrica.nn.training import TrainConfig, split_cases, train
from volumetrica.phantoms import PhantomSpec, make_phantom


class TestOptimizer:
    def test_sgd_step(self):
        p = [np.array([1.0])]
        optimizer_step(p, [np.array([1.0])], SgdState(0.1))
        assert p[0][0] == pytest.approx(0.9)

    def test_adam_first_step_magnitude(self):
        for c in (1e-4, 1.0, 50.0, -3.0):
            p = [np.array([0.0])]
            state = AdamState.for_params(p, learning_rate=1e-3)
            optimizer_step(p, [np.array([c])], state)
            # bias correction makes the first step ~ lr * sign(g)
            assert p[0][0] == pytest.approx(-1e-3 * np.sign(c), rel=1e-4)

    def test_zero_gradient_no_change(self):
        for state in (SgdState(0.5), AdamState.for_params([np.array([2.0])])):
            p = [np.array([2.0])]
            if isinstance(state, AdamState):
                state = AdamState.for_params(p)
            optimizer_step(p, [np.array([0.0])], state)
            assert p[0][0] == 2.0

    def test_adam_matches_reference_formula(self):
        rng = np.random.default_rng(0)
        p = [rng.normal(size=(3, 2))]
        state = AdamState.for_params(p, learning_rate=0.01)
        ref_p = p[0].copy()
        m = np.zeros_like(ref_p)
        v = np.zeros_like(ref_p)
        for t in range(1, 6):
            g = rng.normal(size=(3, 2))
            optimizer_step(p, [g], state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh = m / (1 - 0.9**t)
            vh = v / (1 - 0.999**t)
            ref_p = ref_p - 0.01 * mh / (np.sqrt(vh) + 1e-8)
        np.testing.assert_allclose(p[0], ref_p, atol=1e-14)


class TestResizeVolume:
    def test_constant_stays_constant(self):
        out = resize_volume(np.full((20, 17, 25), 3.5), (32, 32, 32))
        np.testing.assert_array_equal(out, 3.5)

    def test_identity_when_already_target(self):
        x = np.random.default_rng(0).normal(size=(32, 32, 32))
        out = resize_volume(x, (32, 32, 32))
        np.testing.assert_array_equal(out, x)

    def test_linear_ramp_preserved(self):
        nz = 40
        ramp = np.broadcast_to(np.linspace(0.0, 1.0, nz)[:, None, None], (nz, 8, 8)).copy()
        out = resize_volume(ramp, (32, 32, 32))
        expected = np.linspace(0.0, 1.0, 32)
        np.testing.assert_allclose(out[:, 0, 0], expected, atol=1e-9)

    def test_output_within_input_range(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(11, 23, 9))
        out = resize_volume(x, (32, 32, 32))
        assert out.min() >= x.min() - 1e-12
        assert out.max() <= x.max() + 1e-12

    def test_degenerate_axis_rejected(self):
        with pytest.raises(ValueError, match="extent"):
            resize_volume(np.zeros((1, 8, 8)), (32, 32, 32))

    def test_accepts_voxel_grid(self):
        grid = VoxelGrid(np.ones((8, 8, 8)), Spacing(1, 1, 1))
        assert resize_volume(grid, (32, 32, 32)).shape == (32, 32, 32)


class TestMaskVolume:
    def test_zero_predictions_zero_volume(self):
        mask = extract_tumor_mask(np.zeros((16, 16, 16, 1)), 0.5)
        assert cnn_volume(mask, (32, 32, 32), Spacing(1, 1, 1)) == 0.0

    def test_uniform_prediction_counts_pixels(self):
        pred = np.full((4, 4, 4, 1), 0.9)
        mask = extract_tumor_mask(pred, 0.5)
        # same-resolution geometry: every voxel is 1 mm^3
        assert cnn_volume(mask, (4, 4, 4), Spacing(1, 1, 1)) == pytest.approx(64.0)

    def test_downsampled_prediction_rescaled(self):
        # half-resolution prediction: each pixel covers 4 source pixels
        # per slice and each slice spans 2 source slices
        mask = np.ones((2, 2, 2), dtype=bool)
        v = cnn_volume(mask, (4, 4, 4), Spacing(0.5, 0.5, 2.0))
        assert v == pytest.approx(4 * 4 * 4 * 0.5 * 0.5 * 2.0)

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(2)
        pred = rng.uniform(size=(8, 8, 8, 1))
        vols = [
            cnn_volume(extract_tumor_mask(pred, t), (8, 8, 8), Spacing(1, 1, 1))
            for t in (0.001, 0.25, 0.5, 0.75, 0.999)
        ]
        assert all(b <= a for a, b in zip(vols, vols[1:]))

    def test_threshold_domain(self):
        with pytest.raises(ValueError):
            extract_tumor_mask(np.zeros((2, 2, 2, 1)), 0.0)
        with pytest.raises(ValueError):
            extract_tumor_mask(np.zeros((2, 2, 2, 1)), 1.0)

    def test_dice(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        assert dice(a, b) == 1.0
        a[0, 0] = True
        assert dice(a, b) == 0.0
        b[0, 0] = True
        assert dice(a, b) == 1.0


class TestSplit:
    def test_exact_partition(self):
        train_idx, test_idx = split_cases(25, 0.2, seed=3)
        assert sorted(train_idx + test_idx) == list(range(25))
        assert len(test_idx) == 5

    def test_rounding(self):
        _, test_idx = split_cases(11, 0.2, seed=0)
        assert len(test_idx) == 2  # round(11 * 0.2)


@pytest.fixture(scope="module")
def sphere_case():
    spec = PhantomSpec(kind="sphere", radius=10.0, noise_sigma=0.05, seed=2)
    grid, mask, volume = make_phantom(spec, (48, 48, 48), Spacing(1, 1, 1))
    return prepare_input(grid), mask_training_target(mask), grid, mask, volume


class TestTrain:
    def test_supervised_loss_decreases(self, sphere_case):
        x, t, *_ = sphere_case
        net = build_segmenter_3d(seed=0)
        log = train(net, [(x, t)], TrainConfig(epochs=200, loss="bce"))
        assert log.losses[-1] < log.losses[0]

    def test_zero_learning_rate_freezes_everything(self, sphere_case):
        x, t, *_ = sphere_case
        net = build_segmenter_3d(seed=0)
        before = [p.copy() for p in net.parameters()]
        log = train(net, [(x, t)], TrainConfig(epochs=3, loss="bce", learning_rate=0.0))
        for a, b in zip(before, net.parameters()):
            np.testing.assert_array_equal(a, b)
        assert log.losses[0] == log.losses[-1]

    def test_fixed_seed_bit_identical_log(self, sphere_case):
        x, t, *_ = sphere_case
        logs = []
        for _ in range(2):
            net = build_segmenter_3d(seed=4)
            logs.append(train(net, [(x, t)], TrainConfig(epochs=5, loss="bce")).losses)
        assert logs[0] == logs[1]

    def test_empty_dataset_raises(self):
        net = build_segmenter_3d()
        with pytest.raises(ValueError, match="no valid images"):
            train(net, [], TrainConfig(epochs=1))

    def test_non_finite_loss_raises_diverged(self):
        from volumetrica.nn.training import TrainingDivergedError

        net = build_segmenter_3d(seed=0)
        x = np.full((32, 32, 32, 1), np.inf)
        t = np.zeros((16, 16, 16, 1))
        with np.errstate(invalid="ignore"), pytest.raises(TrainingDivergedError):
            train(net, [(x, t)], TrainConfig(epochs=1, loss="bce"))

    def test_smaller_than_declared_inputs_accepted(self):
        # the engine is spatially flexible; targets pool per actual size
        net = build_segmenter_3d(seed=0)
        rng = np.random.default_rng(9)
        x = rng.uniform(size=(8, 8, 8, 1))
        t = rng.uniform(size=(4, 4, 4, 1))
        log = train(net, [(x, t)], TrainConfig(epochs=2, loss="bce"))
        assert len(log.losses) == 2

    def test_autoencoder_mode_runs(self, sphere_case):
        x, *_ = sphere_case
        net = build_segmenter_3d(seed=0)
        log = train(net, [x], TrainConfig(epochs=2, loss="bce"))
        assert len(log.losses) == 2

    def test_trained_net_segments_heldout_sphere(self, sphere_case):
        x, t, *_ = sphere_case
        net = build_segmenter_3d(seed=0)
        train(net, [(x, t)], TrainConfig(epochs=200, loss="bce"))
        spec = PhantomSpec(kind="sphere", radius=8.0, noise_sigma=0.05, seed=77)
        grid, _, volume = make_phantom(spec, (48, 48, 48), Spacing(1, 1, 1))
        pred = predict(net, prepare_input(grid))
        v = cnn_volume(extract_tumor_mask(pred, 0.5), grid.dims, grid.spacing)
        assert v == pytest.approx(volume, rel=0.15)

    def test_log_csv_shape(self, sphere_case):
        x, t, *_ = sphere_case
        net = build_segmenter_3d(seed=0)
        log = train(net, [(x, t)], TrainConfig(epochs=3, loss="mse"))
        csv = log.to_csv()
        lines = csv.strip().splitlines()
        assert lines[0] == "epoch,loss"
        assert len(lines) == 4

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(split_fraction=1.5)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=2)
