import csv
import json
import math

import numpy as np
import pytest
from scipy.stats import spearmanr
from skimage.metrics import structural_similarity

from stabledeblur.errors import DimensionError, InvalidParameterError
from stabledeblur.imaging import BlurOperator, NoiseSpec, add_noise, gaussian_psf, identity_psf
from stabledeblur.metrics import (
    TestSet,
    empirical_accuracy,
    empirical_stability,
    reconstruction_error,
    ssim,
    theorem1_bound,
    white_noise_gain,
)
from stabledeblur.stabilizers import FilterStabilizer, TikhonovProblem, tikhonov_direct


def smooth_images(n, size, seed):
    rng = np.random.default_rng(seed)
    op = BlurOperator(gaussian_psf(3, 2.0), (size, size))
    x = op.apply(rng.random((n, size, size)))
    return (x - x.min()) / (x.max() - x.min())


def ref_ssim(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0)


def test_reconstruction_error_basics():
    x = np.random.default_rng(0).random((6, 5))
    assert reconstruction_error(x, x) == 0
    assert math.isclose(reconstruction_error(np.ones((4, 9)), np.zeros((4, 9))), 6.0)
    y = np.random.default_rng(1).random((6, 5))
    assert math.isclose(reconstruction_error(x, y), math.sqrt(sum((a - b) ** 2 for a, b in zip(x.flat, y.flat))),
                        rel_tol=1e-13)
    with pytest.raises(DimensionError):
        reconstruction_error(x, x.T)


def test_accuracy_identity_psf_gives_inf():
    x = smooth_images(4, 16, 2)
    eta, inv = empirical_accuracy(lambda y: y, TestSet(x, x))
    assert eta == 0 and inv == math.inf


def test_accuracy_zero_map():
    x = smooth_images(4, 16, 3)
    eta, inv = empirical_accuracy(np.zeros_like, TestSet(x, x))
    assert math.isclose(eta, np.linalg.norm(x, axis=(1, 2)).max())
    assert abs(eta * inv - 1) < 1e-12


def test_accuracy_pinv_near_perfect():
    op = BlurOperator(gaussian_psf(5, 1.3), (32, 32))
    x = smooth_images(5, 32, 4)
    eta, _ = empirical_accuracy(op.pinv, TestSet(x, op.apply(x)))
    assert eta < 1e-6


def test_accuracy_empty_rejected():
    with pytest.raises(InvalidParameterError):
        empirical_accuracy(lambda y: y, TestSet(np.zeros((0, 8, 8)), np.zeros((0, 8, 8))))


def test_stability_constant_map_nonpositive():
    x = smooth_images(8, 16, 5)
    c = np.full((16, 16), 0.5)
    rep = empirical_stability(lambda y: np.broadcast_to(c, y.shape), TestSet(x, x), 0.05, seed=1)
    assert rep.c_hat <= 0
    assert rep.delta_stable == (rep.c_hat == 0)
    assert len(rep.per_image) == 8


def test_stability_pinv_unstable():
    op = BlurOperator(gaussian_psf(5, 1.3), (32, 32))
    x = smooth_images(6, 32, 6)
    rep = empirical_stability(op.pinv, TestSet(x, op.apply(x)), 0.01, seed=2)
    assert rep.c_hat > 100 and not rep.delta_stable


def test_stability_requires_positive_sigma():
    x = smooth_images(2, 16, 7)
    with pytest.raises(InvalidParameterError):
        empirical_stability(lambda y: y, TestSet(x, x), 0.0)


def test_error_bound_self_consistency():
    op = BlurOperator(gaussian_psf(5, 1.3), (16, 16))
    x = smooth_images(10, 16, 8)
    p = TikhonovProblem(op, 1e-2)
    rep = empirical_stability(lambda y: tikhonov_direct(p, y), TestSet(x, op.apply(x)), 0.05, seed=3)
    for r in rep.per_image:
        assert r.err_noisy <= rep.eta_hat + rep.c_hat * r.noise_norm + 1e-9
    assert rep.eta_hat_inv * rep.eta_hat == pytest.approx(1, abs=1e-12)
    assert rep.delta_stable == (0 <= rep.c_hat < 1)


def test_noise_pairing_across_reconstructors():
    x = smooth_images(4, 16, 9)
    a = empirical_stability(lambda y: y, TestSet(x, x), 0.05, seed=5)
    b = empirical_stability(lambda y: 0.5 * y, TestSet(x, x), 0.05, seed=5)
    assert [r.noise_norm for r in a.per_image] == [r.noise_norm for r in b.per_image]


def test_noise_norms_follow_per_image_seeds():
    x = smooth_images(3, 16, 10)
    rep = empirical_stability(lambda y: y, TestSet(x, x), 0.05, seed=11)
    for i, r in enumerate(rep.per_image):
        assert r.noise_norm == pytest.approx(add_noise(x[i], NoiseSpec(0.05, 11).for_task(i))[1], rel=1e-14)


def test_report_files(tmp_path):
    x = smooth_images(5, 16, 12)
    rep = empirical_stability(lambda y: 0.9 * y, TestSet(x, x), 0.05, seed=4, tag="demo")
    rep.write_csv(tmp_path / "r.csv")
    rep.write_json(tmp_path / "r.json")
    rep.write_scatter_csv(tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert list(rows[0]) == ["id", "err_noiseless", "err_noisy", "noise_norm", "ratio", "ssim"]
    assert len(rows) == 5
    for row in rows:
        ratio = (float(row["err_noisy"]) - rep.eta_hat) / float(row["noise_norm"])
        assert abs(float(row["ratio"]) - ratio) < 1e-12
    summary = json.loads((tmp_path / "r.json").read_text())
    for key in ("eta_hat", "c_hat", "delta_stable", "sigma", "seed", "reconstructor_tag"):
        assert key in summary
    assert summary["reconstructor_tag"] == "demo"
    scatter = list(csv.DictReader(open(tmp_path / "s.csv")))
    for row in scatter:
        below = float(row["excess_error"]) < float(row["noise_norm"])
        assert int(row["stable"]) == int(below) == int(float(row["ratio"]) < 1)


def test_inf_sentinel_in_json(tmp_path):
    x = smooth_images(2, 16, 13)
    rep = empirical_stability(lambda y: y, TestSet(x, x), 0.05)
    rep.write_json(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["eta_hat_inv"] == "+inf"


def test_lower_bound_identity():
    op = BlurOperator(identity_psf(), (16, 16))
    bound, e = theorem1_bound(op, 0.0, 0.3)
    assert math.isclose(bound, 1.0, rel_tol=1e-12)
    assert math.isclose(np.linalg.norm(e), 0.3, rel_tol=1e-12)


def test_lower_bound_gaussian_matches_transfer_minimum():
    op = BlurOperator(gaussian_psf(5, 1.3), (64, 64))
    mag = np.abs(op.transfer)
    tmin = mag[mag > 1e-10 * mag.max()].min()
    eta, delta = 0.01, 0.5
    bound, _ = theorem1_bound(op, eta, delta)
    assert math.isclose(bound, 1 / tmin - 2 * eta / delta, rel_tol=1e-9)


def test_lower_bound_vacuous_for_large_eta():
    op = BlurOperator(gaussian_psf(1, 0.6), (16, 16))
    assert theorem1_bound(op, 1e6, 1.0)[0] < 0


def test_affine_stability_matches_spectral_gain():
    # for a linear map with eta_hat = 0 every ratio is ||A e|| / ||e||; white noise gives the RMS gain
    f = FilterStabilizer()
    shape = (32, 32)
    x = np.zeros((500,) + shape)
    rep = empirical_stability(f, TestSet(x, x), 0.05, seed=6, compute_ssim=False)
    ratios = np.array([r.err_noisy / r.noise_norm for r in rep.per_image])
    assert abs(np.sqrt(np.mean(ratios**2)) / white_noise_gain(f.gain_spectrum(shape)) - 1) < 0.05


def test_ssim_identity_exact():
    x = smooth_images(1, 32, 14)[0]
    assert ssim(x, x) == 1.0


def test_ssim_matches_reference():
    rng = np.random.default_rng(15)
    xs = smooth_images(5, 40, 16)
    for x in xs:
        y = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
        assert abs(ssim(x, y) - ref_ssim(x, y)) < 1e-6
        assert abs(ssim(x, 1 - x) - ref_ssim(x, 1 - x)) < 1e-6


def test_ssim_symmetric_and_range():
    rng = np.random.default_rng(17)
    x, y = rng.random((2, 24, 24))
    assert abs(ssim(x, y) - ssim(y, x)) < 1e-12
    assert -1 <= ssim(x, y) <= 1


def test_ssim_stack_and_errors():
    xs = smooth_images(3, 16, 18)
    out = ssim(xs, xs[::-1])
    assert out.shape == (3,)
    assert out[1] == 1.0
    with pytest.raises(DimensionError):
        ssim(xs[0], xs[0][:, :15])
    with pytest.raises(DimensionError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_ssim_decreases_with_noise():
    x = smooth_images(1, 64, 19)[0]
    rng = np.random.default_rng(20)
    e = rng.standard_normal(x.shape)
    levels = np.linspace(0.005, 0.2, 20)
    scores = [ssim(x, x + s * e) for s in levels]
    assert spearmanr(levels, scores).statistic < -0.95
