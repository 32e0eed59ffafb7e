import numpy as np
import pytest

from psml.embed import TrainConfig, load_space, save_space
from psml.graph import AnchorSet, Graph, ValidationError
from psml.hyperbolic import (LorentzTrainer, exp_map, lift_to_hyperboloid, lorentz_distance, lorentz_inner,
                             manifold_residual, project_tangent, shift_on_manifold, train_hyperbolic)
from psml.implant import implant
from psml.metatune import MetaConfig, psml_train


def random_point(rng, d=3, scale=1.0):
    return lift_to_hyperboloid(rng.normal(0, scale, d))


def test_inner_examples():
    assert lorentz_inner([1, 0, 0], [1, 0, 0]) == -1
    assert lorentz_inner([1, 0], [0, 1]) == 0
    assert lorentz_inner([np.cosh(1), np.sinh(1)], [1, 0]) == pytest.approx(-1.543081, abs=1e-6)
    with pytest.raises(ValidationError):
        lorentz_inner([1, 0], [1, 0, 0])


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_distance_along_geodesic(t):
    assert lorentz_distance([np.cosh(t), np.sinh(t), 0], [1, 0, 0]) == pytest.approx(t, abs=1e-9)


def test_distance_properties(rng):
    for _ in range(100):
        x, y = random_point(rng), random_point(rng)
        assert lorentz_distance(x, x) == 0.0
        assert lorentz_distance(x, y) == lorentz_distance(y, x)
    with pytest.raises(ValidationError):
        lorentz_distance([2, 0, 0], [1, 0, 0])


def test_lift_examples(rng):
    np.testing.assert_array_equal(lift_to_hyperboloid([0, 0]), [1, 0, 0])
    np.testing.assert_allclose(lift_to_hyperboloid([3, 4]), [np.sqrt(26), 3, 4])
    assert max(manifold_residual(random_point(rng, 5)) for _ in range(1000)) < 1e-12


def test_exp_map_examples(rng):
    x = random_point(rng)
    np.testing.assert_array_equal(exp_map(x, np.zeros(4)), x)
    np.testing.assert_allclose(exp_map([1, 0], [0, 0.7]), [np.cosh(0.7), np.sinh(0.7)], atol=1e-12)
    with pytest.raises(ValidationError):
        exp_map([1, 0, 0], [1, 0, 0])
    for _ in range(100):
        x = random_point(rng)
        v = project_tangent(x, rng.normal(0, 0.3, 4))
        y = exp_map(x, v)
        assert lorentz_distance(x, y) == pytest.approx(np.sqrt(lorentz_inner(v, v)), abs=1e-9)
        assert manifold_residual(y) < 1e-9


def test_projection_idempotent(rng):
    for _ in range(100):
        x = random_point(rng)
        h = rng.normal(size=4)
        p = project_tangent(x, h)
        assert abs(lorentz_inner(x, p)) < 1e-10
        np.testing.assert_allclose(project_tangent(x, p), p, atol=1e-10)


def test_shift_on_manifold_stays_on_manifold(rng):
    x = random_point(rng, 4)
    y = shift_on_manifold(x, rng.uniform(-1, 1, 4))
    assert manifold_residual(y) < 1e-9
    assert lorentz_distance(x, y) <= 1.0 + 1e-9


def _triangles():
    gs, gt = Graph(directed=False, namespace="s"), Graph(directed=False, namespace="t")
    for g in (gs, gt):
        for u, v in (("a", "x1"), ("x1", "x2"), ("x2", "a")):
            g.add_edge(g.qualify(u), g.qualify(v))
    return gs, gt, AnchorSet.all_train([("s:a", "t:a")])


def test_triangles_separate():
    gs, gt, a = _triangles()
    for seed in range(10):
        sp = train_hyperbolic(gs, gt, a, TrainConfig(dim=16, epochs=1, samples_per_epoch=5000, seed=seed))
        d = lambda p, q: lorentz_distance(sp[p], sp[q])
        intra = np.mean([d("s:x1", "s:x2"), d("t:x1", "t:x2")])
        cross = np.mean([d(f"s:{p}", f"t:{q}") for p in ("x1", "x2") for q in ("x1", "x2")])
        assert intra < cross, seed


def test_trained_points_on_manifold(small_pair):
    gs, gt, a = small_pair
    sp = train_hyperbolic(gs, gt, a, TrainConfig(dim=8, epochs=2, samples_per_epoch=5000))
    assert sp.geometry == "lorentz" and sp.vectors.shape[1] == 9
    assert np.all(sp.vectors[:, 0] > 0)
    assert max(manifold_residual(v) for v in sp.vectors) < 1e-9


def test_lorentz_space_roundtrip(tmp_path, small_pair):
    gs, gt, a = small_pair
    sp = train_hyperbolic(gs, gt, a, TrainConfig(dim=4, epochs=1, samples_per_epoch=500))
    save_space(sp, tmp_path)
    assert (tmp_path / "embeddings.txt").read_text().splitlines()[0].endswith("lorentz")
    assert load_space(tmp_path).geometry == "lorentz"


def test_psml_on_hyperboloid(small_pair):
    gs, gt, a = small_pair
    cfg = TrainConfig(dim=8, epochs=2, samples_per_epoch=3000)
    res = psml_train(gs, gt, a, None, cfg, MetaConfig(iterations=2, supports=()), LorentzTrainer)
    assert np.all(np.isfinite(res.space.vectors))
    assert np.all(res.space.vectors[:, 0] > 0)


def test_single_worker_only(small_pair):
    gs, gt, a = small_pair
    with pytest.raises(ValidationError):
        LorentzTrainer(gs, gt, a, TrainConfig(dim=4, workers=2))
