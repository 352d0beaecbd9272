import numpy as np
import pytest

from scanmix import Hyperparams, SensorConfig, init_model
from scanmix.experiments import (
    STRATEGIES,
    _batch_indices,
    ablation_csv,
    ablation_grid,
    load_dataset,
    render_error_maps,
    run_training,
    save_dataset,
)
from scanmix.synth import SceneParams, make_dataset
from scanmix.train import evaluate

CONFIG = SensorConfig(num_beams=16, incl_up=10.0, incl_down=30.0, width=48, max_range=50.0)


@pytest.fixture(scope="module")
def dataset():
    return make_dataset(10, SceneParams(), CONFIG, 0.5, seed=0, n_eval=3)


def test_dataset_disk_round_trip(dataset, tmp_path):
    save_dataset(dataset, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds")
    assert len(loaded.labeled) == len(dataset.labeled)
    assert len(loaded.unlabeled) == len(dataset.unlabeled)
    assert len(loaded.eval) == len(dataset.eval)
    for a, b in zip(loaded.labeled, dataset.labeled):
        # Disk format is float32; the simulator emits float64, so loaded
        # coordinates are the float32 rounding of the originals.
        np.testing.assert_array_equal(a.coords, b.coords.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(a.labels, b.labels)
    for truth_a, truth_b in zip(loaded.unlabeled_truth, dataset.unlabeled_truth):
        np.testing.assert_array_equal(truth_a, truth_b)
    assert all(not c.has_labels for c in loaded.unlabeled)


def test_batch_indices_stateless_and_epochwise():
    a = _batch_indices(seed=5, step=7, batch=2, n_labeled=4, n_unlabeled=10)
    b = _batch_indices(seed=5, step=7, batch=2, n_labeled=4, n_unlabeled=10)
    assert a == b
    # One epoch covers each unlabeled scan exactly once.
    seen = []
    for step in range(5):  # 5 steps x batch 2 == 10 == n_unlabeled
        _, unl = _batch_indices(seed=5, step=step, batch=2, n_labeled=4, n_unlabeled=10)
        seen.extend(unl)
    assert sorted(seen) == list(range(10))


def test_run_training_strategies_and_evals(dataset):
    hyper = Hyperparams(lr=0.05, batch=1)
    result = run_training(dataset, CONFIG, hyper, iterations=8, seed=0, strategy="beam", eval_every=4)
    assert len(result.losses) == 8
    assert [s for s, _ in result.eval_history] == [4, 8]
    assert result.teacher_eval is not None and result.student_eval is not None


def test_run_training_rejects_unknown_strategy(dataset):
    with pytest.raises(ValueError):
        run_training(dataset, CONFIG, Hyperparams(), iterations=1, seed=0, strategy="wat")


def test_sup_only_equals_zero_weight_full_iteration(dataset):
    """The sup-only fast path must match the full iteration with both
    extra loss weights at zero, up to float reassociation."""
    hyper_zero = Hyperparams(lambda_mix=0.0, lambda_mt=0.0, lr=0.05, batch=2)
    fast = run_training(dataset, CONFIG, hyper_zero, iterations=6, seed=3, strategy="sup_only")

    from scanmix.nn import init_model as init
    from scanmix.train import init_train_state, train_iteration
    from scanmix.experiments import _batch_indices

    state = init_train_state(init(dataset.label_map.k, (8, 16), seed=3), hyper_zero)
    # Replay the same labeled picks through the full algorithm.
    for step in range(6):
        rng_l = np.random.default_rng((3, 303, step))
        batch_idx = rng_l.integers(0, len(dataset.labeled), 2)
        lb = [dataset.labeled[i] for i in batch_idx]
        ub = [dataset.unlabeled[i % len(dataset.unlabeled)] for i in range(2)]
        train_iteration(state, lb, ub, CONFIG, np.random.default_rng((3, 404, step)))
    for a, b in zip(fast.state.student.parameters(), state.student.parameters()):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_ablation_grid_rows_and_csv(dataset):
    rows = ablation_grid(
        SceneParams(),
        CONFIG,
        Hyperparams(lr=0.05, batch=1),
        strategies=["beam", "sup_only"],
        seeds=[0, 1],
        sweep_m=[2],
        n_scans=6,
        n_eval=2,
        labeled_fraction=0.5,
        iterations=4,
    )
    assert len(rows) == 6  # (2 strategies + 1 sweep cell) x 2 seeds
    text = ablation_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "cell,name,value,seed,miou_teacher,miou_student"
    assert len(lines) == 7
    assert {r["cell"] for r in rows} == {"strategy", "sweep_m"}


def test_error_maps_match_confusion(dataset):
    model = init_model(dataset.label_map.k, (4, 6), seed=1)
    cloud = dataset.eval[0]
    maps = render_error_maps(model, cloud, CONFIG)
    result = evaluate(model, [cloud], CONFIG)
    confusion = result.confusion
    correct = int(np.trace(confusion))
    wrong = int(confusion.sum() - correct)
    assert maps.correct_pixels == correct
    assert maps.wrong_pixels == wrong
    # Range-view image: pixel color counts equal the confusion totals.
    rv = maps.rangeview
    n_gray = int((rv == (160, 160, 160)).all(axis=2).sum())
    n_red = int((rv == (200, 40, 40)).all(axis=2).sum())
    assert n_gray == correct and n_red == wrong


def test_error_maps_perfect_and_all_wrong(dataset):
    from scanmix.cloud import attach_labels

    cloud = dataset.eval[0]
    k = dataset.label_map.k
    model = init_model(k, (2,), seed=0)
    for p in model.parameters():
        p[:] = 0.0
    model.biases[-1][2] = 5.0  # predicts class 2 everywhere
    all_two = attach_labels(cloud, np.full(cloud.n, 2, np.int32))
    maps = render_error_maps(model, all_two, CONFIG)
    assert maps.wrong_pixels == 0 and maps.correct_pixels > 0
    assert not (maps.bev == (200, 40, 40)).all(axis=2).any()
    all_one = attach_labels(cloud, np.full(cloud.n, 1, np.int32))
    maps = render_error_maps(model, all_one, CONFIG)
    assert maps.correct_pixels == 0 and maps.wrong_pixels > 0
    assert not (maps.bev == (60, 170, 70)).all(axis=2).any()
