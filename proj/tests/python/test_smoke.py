"""Smoke tests for the python bindings: each exposed operation runs and
returns sane values. Heavy numerics are covered by the C++ suites."""

import numpy as np
import pytest

import _perfrec as pr


@pytest.fixture(scope="module")
def geometry():
    geom = pr.FanBeamGeometry()
    geom.source_to_iso = 750.0
    geom.source_to_detector = 1200.0
    geom.n_det = 128
    geom.det_pitch = 1.25
    geom.views_per_rotation = 100
    return geom


def test_phantom_maps_have_expected_shapes_and_ranges():
    grid = pr.ImageGrid(64, 64)
    maps = pr.desk_phantom(grid)
    assert maps["cbf"].shape == (64, 64)
    assert maps["labels"].dtype == np.uint8
    assert maps["cbf"].max() == pytest.approx(50.0)
    assert maps["cbf"].min() == 0.0
    assert (maps["mtt"] >= 0).all()


def test_aif_peaks_at_mode():
    aif = pr.AifModel()
    assert pr.sample_aif(aif, 0.0) == 0.0
    peak_t = aif.arrival_s + aif.shape * aif.scale_s
    assert pr.sample_aif(aif, peak_t) == pytest.approx(aif.peak)


def test_projection_adjoint_inner_products_agree(geometry):
    grid = pr.ImageGrid(16, 16)
    rng = np.random.default_rng(3)
    image = rng.normal(size=(16, 16))
    sino = pr.forward_project(image, grid, geometry, 8)
    y = rng.normal(size=sino.shape)
    back = pr.back_project(y, grid, geometry, 8)
    lhs = float((sino * y).sum())
    rhs = float((image * back).sum())
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_fbp_round_trip_on_a_disk(geometry):
    grid = pr.ImageGrid(64, 64)
    yy, xx = np.mgrid[0:64, 0:64]
    disk = ((xx - 31.5) ** 2 + (yy - 31.5) ** 2 <= 20.0**2) * 0.02
    sino = pr.forward_project(disk, grid, geometry, 200)
    recon = pr.fbp_reconstruct(sino, grid, geometry, 200)
    inside = disk > 0
    assert recon[inside].mean() == pytest.approx(0.02, rel=0.02)
    assert pr.rrmse(recon, disk) < 6.0


def test_synthesize_dynamic_scales_linearly_with_cbf():
    grid = pr.ImageGrid(16, 16)
    aif = pr.AifModel()
    cbf = np.full((16, 16), 30.0)
    t0 = np.full((16, 16), 2.0)
    x1 = pr.synthesize_dynamic(cbf, t0, grid, aif, 16, 2.0, 1.0)
    x2 = pr.synthesize_dynamic(2 * cbf, t0, grid, aif, 16, 2.0, 1.0)
    assert x1.shape == (16, 16, 16)
    assert np.allclose(x2, 2 * x1)
    assert (x1 >= 0).all()


def test_metrics_match_numpy():
    rng = np.random.default_rng(5)
    truth = rng.uniform(0.5, 2.0, size=(8, 8))
    y = truth + rng.normal(scale=0.1, size=(8, 8))
    expected = 100.0 * np.sqrt(((y - truth) ** 2).mean()) / truth.max()
    assert pr.rrmse(y, truth) == pytest.approx(expected)
    mse = ((y - truth) ** 2).mean()
    assert pr.psnr(y, truth, truth.max()) == pytest.approx(
        10 * np.log10(truth.max() ** 2 / mse)
    )


def test_tiny_joint_reconstruction_improves_on_its_start(geometry):
    grid = pr.ImageGrid(32, 32)
    geom = pr.FanBeamGeometry()
    geom.source_to_iso = 750.0
    geom.source_to_detector = 1200.0
    geom.n_det = 64
    geom.det_pitch = 1.25
    geom.views_per_rotation = 40
    out = pr.run_trainer_small(grid, geom, 4, 2, 2, 10, 3, 11)
    assert out["cbf"].shape == (32, 32)
    assert out["final_total"] < out["initial_total"]
    assert out["iterations"] == 2
    assert (out["cbf"] >= 0).all() and (out["cbf"] <= 100).all()
