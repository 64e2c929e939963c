"""End-to-end smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import flowcast


def test_positional_encoding_values():
    f = flowcast.positional_encoding([0.0, 0.0])
    assert f.shape == (28,)
    np.testing.assert_allclose(f.reshape(7, 4), np.tile([1, 1, 0, 0], (7, 1)), atol=1e-12)
    f1 = flowcast.positional_encoding([1.0, 0.0])
    assert f1[12] == pytest.approx(-1.0)  # cos(pi) in the i=0 band
    assert np.all(np.abs(f1) <= 1.0 + 1e-12)


def test_kmeans_balance_and_barycenters():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(137, 2))
    assignment = flowcast.same_size_kmeans(pts, 10, seed=3)
    counts = np.bincount(assignment)
    assert len(counts) == math.ceil(137 / 10)
    assert counts.max() - counts.min() <= 1
    bary = flowcast.cluster_barycenters(pts, assignment)
    k = assignment.max() + 1
    for c in range(k):
        np.testing.assert_allclose(bary[c], pts[assignment == c].mean(axis=0), atol=1e-12)


def test_delaunay_square():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    triangles, edges = flowcast.delaunay(pts, boundary=pts)
    assert triangles.shape[0] == 2
    assert edges.shape[0] == 5


def test_k_number():
    assert flowcast.k_number(np.array([0.5, 0.3, 0.15, 0.05])) == 3
    assert flowcast.k_number(np.full(20, 1 / 20)) == 18
    with pytest.raises(flowcast.DataError):
        flowcast.k_number(np.array([0.5, 0.3]))


def test_taylor_green_values():
    v, p = flowcast.taylor_green([0.25, 0.25])
    np.testing.assert_allclose(v, [0.5, -0.5], atol=1e-12)
    assert p == pytest.approx(0.0, abs=1e-12)


def test_dataset_roundtrip_and_validation(tmp_path):
    out = str(tmp_path / "ds")
    train, valid, test = flowcast.generate_dataset(out, n_traj=2, steps=6, nodes=40, seed=1)
    assert len(train) >= 1
    traj = flowcast.load_trajectory(f"{out}/{train[0]}.bin")
    assert flowcast.validate(traj) == []
    assert len(traj.frames) == 6

    # round trip through python
    flowcast.save_trajectory(traj, str(tmp_path / "copy.bin"))
    again = flowcast.load_trajectory(str(tmp_path / "copy.bin"))
    np.testing.assert_array_equal(again.frames[0].positions, traj.frames[0].positions)
    np.testing.assert_array_equal(again.frames[3].velocity, traj.frames[3].velocity)


def test_fresh_model_is_persistence(tmp_path):
    out = str(tmp_path / "ds")
    train, _, _ = flowcast.generate_dataset(out, n_traj=1, steps=4, nodes=40, seed=2)
    traj = flowcast.load_trajectory(f"{out}/{train[0]}.bin")

    config = dict(hidden=8, token_width=16, heads=1, gnn_layers=1, attn_blocks=1, cluster_size=4)
    model = flowcast.Model.init(config, seed=5)
    pred, _ = model.forward_step(traj.frames[0])
    np.testing.assert_array_equal(pred.velocity, traj.frames[0].velocity)
    np.testing.assert_array_equal(pred.pressure, traj.frames[0].pressure)


def test_gradcheck_tiny():
    assert flowcast.gradcheck(seed=0, samples=60) < 1e-4


def test_train_eval_pipeline(tmp_path):
    out = str(tmp_path / "ds")
    flowcast.generate_dataset(out, n_traj=3, steps=6, nodes=40, seed=3)
    flowcast.precompute_clusters(out, size=4, seed=0)
    v_std, p_std = flowcast.compute_stats(out)
    assert v_std > 0 and p_std > 0

    config = dict(hidden=8, token_width=16, heads=1, gnn_layers=1, attn_blocks=1, cluster_size=4)
    tconfig = dict(steps=3, horizon=2, precision="f32", deterministic=True, log_every=1)
    entries = []
    steps = flowcast.train(out, str(tmp_path / "m.ckpt"), config, tconfig, log=entries.append)
    assert steps == 3
    assert entries and entries[0]["step"] == 1 and math.isfinite(entries[0]["loss"])

    report = flowcast.evaluate(out, str(tmp_path / "m.ckpt"), horizons=[1, 3], split="test")
    assert report["horizons"] == [1, 3]
    assert all(math.isfinite(x) for x in report["model"]["nrmse"])
    assert all(math.isfinite(x) for x in report["persistence"]["nrmse"])

    model = flowcast.Model.load(str(tmp_path / "m.ckpt"))
    traj = flowcast.load_trajectory(f"{out}/tg_0000.bin")
    frames = model.rollout(traj, steps=3)
    assert len(frames) == 3
    _, attention = model.forward_step(traj.frames[0], record_attention=True)
    assert len(attention) == 1  # one block
    row = np.asarray(attention[0][0])[0]
    assert row.sum() == pytest.approx(1.0, abs=1e-6)


def test_downsample_keeps_boundary():
    out_pts = np.random.default_rng(1).uniform(size=(60, 2))
    tri, edges = flowcast.delaunay(out_pts)
    types = np.zeros(60, dtype=np.uint8)
    types[:10] = 1  # walls
    frame = flowcast.MeshFrame(
        positions=out_pts,
        node_types=types,
        velocity=np.zeros((60, 2)),
        pressure=np.zeros((60, 1)),
        edges=edges,
    )
    down = flowcast.downsample_frame(frame, 0.5, seed=2)
    kept_types = np.asarray(down.node_types)
    assert (kept_types == 1).sum() == 10
    assert down.num_nodes == 10 + 25
