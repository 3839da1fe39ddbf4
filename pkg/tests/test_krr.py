import math

import numpy as np
import pytest

from ggfps_lab.dataset import AtomEnvironments
from ggfps_lab.krr import (
    FactorizationError,
    KernelSpec,
    KrrModel,
    assemble_kernel,
    fit,
    fit_model,
    gaussian_kernel,
    local_kernel,
    predict,
)
from ggfps_lab.surfaces import StyblinskiTang, uniform_domain_sample


def random_spd(rng, n, cond=10.0):
    A = rng.normal(size=(n, n))
    Q, _ = np.linalg.qr(A)
    eigs = np.linspace(1.0, cond, n)
    return Q @ np.diag(eigs) @ Q.T


class TestGaussianKernel:
    def test_identical_points(self):
        x = np.array([1.0, -2.0, 0.5])
        assert gaussian_kernel(x, x, sigma=0.7) == 1.0

    def test_distance_sigma_sqrt2(self):
        sigma = 1.3
        xi = np.zeros(1)
        xj = np.array([sigma * math.sqrt(2.0)])
        assert gaussian_kernel(xi, xj, sigma) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_flat_kernel_limit(self):
        assert gaussian_kernel(np.zeros(1), np.ones(1), sigma=1e8) >= 1 - 1e-15

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            xi, xj = rng.normal(size=(2, 4))
            k = gaussian_kernel(xi, xj, 0.9)
            assert k == gaussian_kernel(xj, xi, 0.9)
            assert 0.0 < k <= 1.0


class TestLocalKernel:
    def test_distinct_species_identity(self):
        env = AtomEnvironments(species=[1, 6, 8], vectors=np.random.default_rng(2).normal(size=(3, 4)))
        assert local_kernel(env, env, sigma=0.5) == pytest.approx(3.0, rel=1e-12)

    def test_no_shared_species(self):
        a = AtomEnvironments(species=[1], vectors=np.ones((1, 2)))
        b = AtomEnvironments(species=[6, 8], vectors=np.ones((2, 2)))
        assert local_kernel(a, b, sigma=1.0) == 0.0

    def test_single_surviving_term(self):
        sigma = 0.8
        u = np.array([[0.2, 0.4]])
        v = np.array([[1.0, -0.3]])
        a = AtomEnvironments(species=[1], vectors=u)
        b = AtomEnvironments(species=[1, 6], vectors=np.vstack([v, [5.0, 5.0]]))
        expected = math.exp(-float(np.sum((u - v) ** 2)) / (2 * sigma**2))
        assert local_kernel(a, b, sigma) == pytest.approx(expected, rel=1e-12)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(3)
        a = AtomEnvironments(species=[1, 1, 6], vectors=rng.normal(size=(3, 5)))
        b = AtomEnvironments(species=[1, 6, 6], vectors=rng.normal(size=(3, 5)))
        assert local_kernel(a, b, 0.7) == pytest.approx(local_kernel(b, a, 0.7), rel=1e-14)


class TestAssembleKernel:
    def test_unit_diagonal(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(6, 3))
        K = assemble_kernel(X, X, KernelSpec("gaussian", 1.1))
        assert np.all(np.diag(K) == 1.0)
        assert np.max(np.abs(K - K.T)) < 1e-12

    def test_two_by_two_off_diagonal(self):
        sigma = 0.6
        X = np.array([[0.0], [sigma * math.sqrt(2.0)]])
        K = assemble_kernel(X, X, KernelSpec("gaussian", sigma))
        assert K[0, 1] == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_empty_columns(self):
        X = np.random.default_rng(5).normal(size=(3, 2))
        K = assemble_kernel(X, np.zeros((0, 2)), KernelSpec("gaussian", 1.0))
        assert K.shape == (3, 0)

    def test_local_square_symmetric(self):
        rng = np.random.default_rng(6)
        envs = [
            AtomEnvironments(species=[1, 6], vectors=rng.normal(size=(2, 3)))
            for _ in range(4)
        ]
        K = assemble_kernel(envs, envs, KernelSpec("local_gaussian", 0.9))
        assert np.array_equal(K, K.T)
        off = assemble_kernel(envs[:2], envs[2:], KernelSpec("local_gaussian", 0.9))
        assert off.shape == (2, 2)
        assert off[0, 1] == pytest.approx(local_kernel(envs[0], envs[3], 0.9), rel=1e-14)

    def test_local_requires_species_tags(self):
        with pytest.raises(ValueError, match="species"):
            assemble_kernel([np.zeros(3)], [np.zeros(3)], KernelSpec("local_gaussian", 1.0))


class TestFit:
    def test_scalar_solve(self):
        alpha = fit(np.array([[1.0]]), np.array([2.0]), lam=1.0)
        assert alpha == pytest.approx([1.0], rel=1e-15)

    def test_diagonal_solve(self):
        y = np.array([3.0, -1.5, 0.25])
        alpha = fit(np.eye(3), y, lam=0.5)
        assert alpha == pytest.approx(y / 1.5, rel=1e-14)

    def test_matches_dense_inverse_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            K = random_spd(rng, 8)
            y = rng.normal(size=8)
            lam = 1e-3
            alpha = fit(K, y, lam)
            oracle = np.linalg.inv(K + lam * np.eye(8)) @ y
            assert np.linalg.norm(alpha - oracle) <= 1e-10 * np.linalg.norm(oracle)

    def test_residual_bound(self):
        rng = np.random.default_rng(8)
        for lam in (1e-2, 1e-4, 1e-6):
            K = random_spd(rng, 40, cond=1e4)
            y = rng.normal(size=40)
            alpha = fit(K, y, lam)
            residual = np.linalg.norm((K + lam * np.eye(40)) @ alpha - y)
            assert residual <= 1e-8 * np.linalg.norm(y)

    def test_not_positive_definite_reports_pivot(self):
        K = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3 and -1
        with pytest.raises(FactorizationError) as err:
            fit(K, np.ones(2), lam=1e-12)
        assert err.value.pivot == 2

    def test_ridge_shrinkage(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            K = random_spd(rng, 12, cond=50)
            y = rng.normal(size=12)
            norms = [np.linalg.norm(fit(K, y, lam)) for lam in (1e-4, 1e-2, 1.0, 10.0)]
            assert all(a >= b for a, b in zip(norms, norms[1:]))

    def test_training_residual_decreases_with_lambda(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(-1, 1, size=(30, 2))
        y = rng.normal(size=30)
        K = assemble_kernel(X, X, KernelSpec("gaussian", 0.5))
        residuals = []
        for lam in (1e-2, 1e-6, 1e-10):
            alpha = fit(K, y, lam)
            residuals.append(np.linalg.norm(K @ alpha - y))
        assert residuals[0] > residuals[1] > residuals[2]


class TestPredict:
    def test_zero_alpha(self):
        assert np.all(predict(np.ones((3, 4)), np.zeros(3)) == 0.0)

    def test_unit_column(self):
        alpha = np.array([0.5, -2.0, 3.0])
        K = np.zeros((3, 1))
        K[1, 0] = 1.0
        assert predict(K, alpha) == pytest.approx([-2.0])

    def test_interpolation_at_vanishing_lambda(self):
        labeled = uniform_domain_sample(StyblinskiTang(), 40, seed=14)
        spec = KernelSpec("gaussian", 1.5)
        K = assemble_kernel(labeled.descriptors, labeled.descriptors, spec)
        alpha = fit(K, labeled.labels, lam=1e-12)
        pred = predict(K, alpha)
        rel = np.abs(pred - labeled.labels) / np.maximum(np.abs(labeled.labels), 1.0)
        assert np.max(rel) < 1e-6

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            predict(np.ones((3, 2)), np.ones(4))


class TestLocalKernelPipeline:
    def test_fit_predict_on_perturbed_trajectory(self):
        # water-like frames: energy is a smooth function of the O-H distances,
        # so a local-kernel model interpolating 12 frames should predict the
        # held-out frames far better than the label spread
        from ggfps_lab.dataset import Configuration, descriptor_local_radial

        rng = np.random.default_rng(16)
        base = np.array([[0.0, 0.0, 0.0], [0.96, 0.0, 0.0], [-0.24, 0.93, 0.0]])
        species = np.array([8, 1, 1])
        envs, energies = [], []
        for _ in range(14):
            pos = base + 0.06 * rng.normal(size=(3, 3))
            d1 = np.linalg.norm(pos[1] - pos[0])
            d2 = np.linalg.norm(pos[2] - pos[0])
            cfg = Configuration(positions=pos, species=species, energy=0.0,
                                forces=np.zeros((3, 3)))
            envs.append(descriptor_local_radial(cfg, cutoff=4.0, n_basis=6, widths=0.3))
            energies.append((d1 - 0.96) ** 2 + (d2 - 0.96) ** 2)
        energies = np.asarray(energies)
        spec = KernelSpec("local_gaussian", 0.35)
        K = assemble_kernel(envs[:12], envs[:12], spec)
        alpha = fit(K, energies[:12], lam=1e-10)
        K_test = assemble_kernel(envs[:12], envs[12:], spec)
        pred = predict(K_test, alpha)
        spread = energies.max() - energies.min()
        assert np.max(np.abs(pred - energies[12:])) < 0.05 * spread


class TestKrrModel:
    def test_json_round_trip(self):
        labeled = uniform_domain_sample(StyblinskiTang(), 12, seed=15)
        model = fit_model(
            labeled.descriptors, labeled.labels, labeled.ids,
            KernelSpec("gaussian", 2.0), lam=1e-6,
        )
        back = KrrModel.from_json(model.to_json())
        assert back.kernel == model.kernel
        assert back.lam == model.lam
        assert back.train_refs == model.train_refs
        assert np.array_equal(back.alpha, model.alpha)

    def test_validation(self):
        with pytest.raises(ValueError):
            KrrModel(kernel=KernelSpec("gaussian", 1.0), lam=0.0,
                     train_refs=("a",), alpha=np.ones(1))
        with pytest.raises(ValueError, match="sigma"):
            KernelSpec("gaussian", 0.0)
