import math

import numpy as np
import pytest

from basisgan import tasks
from basisgan.tasks import TaskSpec


def test_gmm_zero_sigma_hits_centers_exactly():
    spec = TaskSpec(sigma=0.0)
    rng = np.random.default_rng(0)
    for A in (0, 1):
        for _ in range(20):
            s = tasks.gmm_sample(A, spec, rng)
            assert any(np.array_equal(s.target, c) for c in spec.modes(A))


def test_gmm_component_frequencies():
    spec, rng = TaskSpec(), np.random.default_rng(1)
    comps = [tasks.gmm_sample(0, spec, rng).meta["component"] for _ in range(10_000)]
    assert abs(np.mean(comps) - 0.5) < 0.02


def test_gmm_default_modes():
    spec = TaskSpec()
    assert spec.modes(0).tolist() == [[-2, 0], [2, 0]]
    assert spec.modes(1).tolist() == [[0, -2], [0, 2]]


def test_gmm_seeded_determinism():
    a = tasks.gmm_batch(TaskSpec(), np.random.default_rng(3), 50)
    b = tasks.gmm_batch(TaskSpec(), np.random.default_rng(3), 50)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_gmm_unknown_condition():
    with pytest.raises(ValueError):
        tasks.gmm_sample(2, TaskSpec(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        tasks.gmm_density(-1, [0, 0], TaskSpec())


def test_density_at_center():
    spec = TaskSpec()
    s2 = spec.sigma ** 2
    # the far component contributes exp(-800), below double precision
    assert tasks.gmm_density(0, [2.0, 0.0], spec) == 0.5 / (2 * math.pi * s2)


def test_density_integrates_to_one():
    spec = TaskSpec()
    h = 0.01
    g = np.arange(-3, 3 + h / 2, h)
    xx, yy = np.meshgrid(g, g)
    pts = np.stack([xx, yy], -1)
    for A in (0, 1):
        assert abs(tasks.gmm_density(A, pts, spec).sum() * h * h - 1.0) < 1e-3


def test_density_mirror_symmetry():
    spec, rng = TaskSpec(), np.random.default_rng(4)
    for x, y in rng.uniform(-3, 3, (50, 2)):
        assert tasks.gmm_density(0, [x, y], spec) == tasks.gmm_density(0, [-x, y], spec)


def test_samples_match_density_in_total_variation():
    spec, rng = TaskSpec(), np.random.default_rng(5)
    _, B, _ = tasks.gmm_batch(spec, rng, 100_000, np.zeros(100_000, dtype=int))
    edges = np.linspace(-2.5, 2.5, 51)
    counts, _, _ = np.histogram2d(B[:, 0], B[:, 1], bins=[edges, edges])
    emp = counts / counts.sum()
    # exact cell masses from the product of 1-d normal cdfs
    from math import erf

    def cdf(t, mu):
        return 0.5 * (1 + erf((t - mu) / (spec.sigma * math.sqrt(2))))
    exact = np.zeros((50, 50))
    for (mx, my) in spec.modes(0):
        px = np.diff([cdf(e, mx) for e in edges])
        py = np.diff([cdf(e, my) for e in edges])
        exact += 0.5 * np.outer(px, py)
    assert 0.5 * np.abs(emp - exact).sum() < 0.05


def test_shapes_pair_layout():
    s = tasks.shapes_sample(TaskSpec(id="shapes"), np.random.default_rng(6))
    assert s.condition.shape == (1, 16, 16) and s.target.shape == (3, 16, 16)
    assert set(np.unique(s.condition)) <= {0.0, 1.0}
    assert s.target.min() >= -1 and s.target.max() <= 1


def test_palette_of_one_is_one_to_one():
    spec, rng = TaskSpec(id="shapes", palette_size=1), np.random.default_rng(7)
    assert {tasks.shapes_sample(spec, rng).meta["color"] for _ in range(50)} == {0}


def test_color_frequencies_for_a_fixed_shape():
    spec, rng = TaskSpec(id="shapes"), np.random.default_rng(8)
    shape = ("rect", 3, 4, 6, 5)
    colors = [tasks.shapes_sample(spec, rng, shape).meta["color"] for _ in range(400)]
    counts = np.bincount(colors, minlength=4)
    assert np.all(np.abs(counts - 100) <= 30)


def test_color_entropy_is_log4():
    spec, rng = TaskSpec(id="shapes"), np.random.default_rng(9)
    counts = np.bincount([tasks.shapes_sample(spec, rng).meta["color"] for _ in range(10_000)], minlength=4)
    p = counts / counts.sum()
    assert abs(-(p * np.log(p)).sum() - math.log(4)) < 0.1


def test_edge_map_is_boundary_of_fill():
    rng = np.random.default_rng(10)
    for _ in range(100):
        shape = tasks.random_shape(rng, 16)
        fill = tasks.rasterize(shape, 16)
        A = tasks.edge_map(fill)
        assert fill.any() and A.any()
        assert np.all(fill[A])  # edges sit on the fill
        assert (tasks.dilate(A) & fill).any()
        interior = fill & ~A
        assert np.array_equal(tasks.erode(fill), interior)


def test_palette_colors_distinct():
    pal = TaskSpec(id="shapes").palette
    assert len({tuple(c) for c in pal}) == len(pal)


def test_autoenc_input_equals_target():
    s = tasks.autoenc_sample(TaskSpec(id="autoenc"), np.random.default_rng(11))
    assert np.array_equal(s.condition, s.target)
    assert s.condition is not s.target


def test_sample_at_is_pure():
    for tid in tasks.TASKS:
        spec = TaskSpec(id=tid, seed=3)
        a, b = tasks.sample_at(spec, 17), tasks.sample_at(spec, 17)
        assert np.array_equal(a.target, b.target)
        assert not np.array_equal(a.target, tasks.sample_at(spec, 18).target) or tid != "gmm"


def test_condition_maps():
    m = tasks.condition_maps(TaskSpec(grid=3), [1, 0])
    assert m.shape == (2, 2, 3, 3)
    assert np.all(m[0, 1] == 1) and np.all(m[0, 0] == 0)


@pytest.mark.parametrize("kw", [dict(id="faces"), dict(sigma=-1.0), dict(palette_size=5), dict(image_size=4)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        TaskSpec(**kw)
