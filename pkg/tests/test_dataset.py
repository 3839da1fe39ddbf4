import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from ggfps_lab.dataset import (
    Configuration,
    GenerationError,
    LabeledSet,
    XyzParseError,
    descriptor_identity,
    descriptor_local_radial,
    gradient_norm,
    labeled_set_from_configurations,
    parse_extended_xyz,
    synth_boltzmann_set,
    write_extended_xyz,
)
from ggfps_lab.surfaces import StyblinskiTang, uniform_domain_sample
from oracles import random_rotation


def make_config(rng, n_atoms=4):
    return Configuration(
        positions=rng.uniform(-3, 3, size=(n_atoms, 3)),
        species=rng.integers(1, 9, size=n_atoms),
        energy=float(rng.normal()),
        forces=rng.normal(size=(n_atoms, 3)),
    )


class TestParseExtendedXyz:
    def test_minimal_frame(self):
        configs = parse_extended_xyz("1\nenergy=-0.5\nH 0 0 0 0 0 1\n")
        assert len(configs) == 1
        cfg = configs[0]
        assert cfg.n_atoms == 1
        assert cfg.species.tolist() == [1]
        assert cfg.energy == -0.5
        assert cfg.forces.tolist() == [[0.0, 0.0, 1.0]]

    def test_empty_stream(self):
        assert parse_extended_xyz("") == []
        assert parse_extended_xyz(b"\n\n") == []

    def test_missing_energy_names_second_frame(self):
        text = (
            "1\nenergy=-0.5\nH 0 0 0 0 0 1\n"
            "1\ncomment with no key\nH 0 0 0 0 0 1\n"
        )
        with pytest.raises(XyzParseError) as err:
            parse_extended_xyz(text)
        assert err.value.frame == 2
        assert err.value.line == 5
        assert "energy" in str(err.value)

    def test_malformed_atom_count(self):
        with pytest.raises(XyzParseError) as err:
            parse_extended_xyz("x\nenergy=1\n")
        assert err.value.frame == 1 and err.value.line == 1

    def test_non_numeric_field(self):
        with pytest.raises(XyzParseError) as err:
            parse_extended_xyz("1\nenergy=1\nH a 0 0 0 0 0\n")
        assert err.value.frame == 1 and err.value.line == 3

    def test_unknown_symbol(self):
        with pytest.raises(XyzParseError, match="Xx"):
            parse_extended_xyz("1\nenergy=1\nXx 0 0 0 0 0 0\n")

    def test_bytes_input(self):
        configs = parse_extended_xyz(b"1\nenergy=2.5\nC 1 2 3 0 0 0\n")
        assert configs[0].species.tolist() == [6]

    def test_frame_order_preserved(self):
        text = "1\nenergy=1\nH 0 0 0 0 0 0\n1\nenergy=2\nO 0 0 0 0 0 0\n"
        configs = parse_extended_xyz(text)
        assert [c.energy for c in configs] == [1.0, 2.0]
        assert [int(c.species[0]) for c in configs] == [1, 8]

    def test_round_trip(self):
        rng = np.random.default_rng(17)
        configs = [make_config(rng, n) for n in (1, 3, 5)]
        back = parse_extended_xyz(write_extended_xyz(configs))
        for a, b in zip(configs, back):
            assert np.array_equal(a.positions, b.positions)
            assert np.array_equal(a.forces, b.forces)
            assert a.energy == b.energy
            assert np.array_equal(a.species, b.species)


class TestGradientNorm:
    def test_zero_forces(self):
        cfg = Configuration(
            positions=np.zeros((2, 3)), species=[1, 1], energy=0.0, forces=np.zeros((2, 3))
        )
        assert gradient_norm(cfg) == 0.0

    def test_three_four_five(self):
        cfg = Configuration(
            positions=np.zeros((1, 3)), species=[1], energy=0.0, forces=[[3.0, 4.0, 0.0]]
        )
        assert gradient_norm(cfg) == pytest.approx(5.0, rel=1e-15)

    def test_two_atom_norm(self):
        cfg = Configuration(
            positions=np.zeros((2, 3)), species=[1, 1], energy=0.0,
            forces=[[1.0, 0.0, 0.0], [0.0, 2.0, 2.0]],
        )
        assert gradient_norm(cfg) == pytest.approx(3.0, rel=1e-15)  # sqrt(1+4+4)

    def test_invariance_under_row_permutation_and_rotation(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            cfg = make_config(rng, 5)
            perm = rng.permutation(5)
            rot = random_rotation(3, rng)
            permuted = Configuration(
                positions=cfg.positions, species=cfg.species, energy=cfg.energy,
                forces=cfg.forces[perm],
            )
            rotated = Configuration(
                positions=cfg.positions, species=cfg.species, energy=cfg.energy,
                forces=cfg.forces @ rot.T,
            )
            base = gradient_norm(cfg)
            assert gradient_norm(permuted) == pytest.approx(base, rel=1e-12)
            assert gradient_norm(rotated) == pytest.approx(base, rel=1e-12)


class TestDescriptorIdentity:
    def test_identity(self):
        assert descriptor_identity([[1.0, 2.0]]).tolist() == [[1.0, 2.0]]

    def test_empty(self):
        out = descriptor_identity(np.zeros((0, 3)))
        assert out.shape == (0, 3)

    def test_bitwise_equal(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        assert np.array_equal(descriptor_identity(X), X)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            descriptor_identity([[np.nan, 0.0]])


class TestDescriptorLocalRadial:
    def test_isolated_atom_is_zero(self):
        cfg = Configuration(
            positions=[[0.0, 0.0, 0.0]], species=[1], energy=0.0, forces=[[0, 0, 0]]
        )
        env = descriptor_local_radial(cfg, cutoff=4.0, n_basis=3, widths=0.5)
        assert np.all(env.vectors == 0.0)

    def test_pair_beyond_cutoff_is_zero(self):
        cfg = Configuration(
            positions=[[0, 0, 0], [10, 0, 0]], species=[1, 1], energy=0.0,
            forces=np.zeros((2, 3)),
        )
        env = descriptor_local_radial(cfg, cutoff=4.0, n_basis=2, widths=0.5)
        assert np.all(env.vectors == 0.0)

    def test_h2_hand_evaluation(self):
        # one neighbor at r=1, cutoff 4, centers mu = (2, 4), width w
        w = 0.5
        cfg = Configuration(
            positions=[[0, 0, 0], [1.0, 0, 0]], species=[1, 1], energy=0.0,
            forces=np.zeros((2, 3)),
        )
        env = descriptor_local_radial(cfg, cutoff=4.0, n_basis=2, widths=w)
        fcut = 0.5 * (math.cos(math.pi * 1.0 / 4.0) + 1.0)
        expected = [
            math.exp(-((1.0 - 2.0) ** 2) / (2 * w * w)) * fcut,
            math.exp(-((1.0 - 4.0) ** 2) / (2 * w * w)) * fcut,
        ]
        assert env.vectors[0] == pytest.approx(expected, rel=1e-12)
        assert env.vectors[1] == pytest.approx(expected, rel=1e-12)

    def test_same_species_permutation_invariance(self):
        rng = np.random.default_rng(41)
        pos = rng.uniform(-1.5, 1.5, size=(5, 3))
        species = np.array([1, 1, 6, 6, 6])
        cfg = Configuration(positions=pos, species=species, energy=0.0, forces=np.zeros((5, 3)))
        # swap the two hydrogens and rotate the carbons among themselves
        perm = np.array([1, 0, 4, 2, 3])
        cfg_p = Configuration(
            positions=pos[perm], species=species[perm], energy=0.0, forces=np.zeros((5, 3))
        )
        a = descriptor_local_radial(cfg, 4.0, 3, 0.5)
        b = descriptor_local_radial(cfg_p, 4.0, 3, 0.5)
        # atom 0 (H) of the original is atom 1 of the permuted configuration
        inverse = np.argsort(perm)
        assert a.vectors == pytest.approx(b.vectors[inverse], abs=1e-10)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(42)
        pos = rng.uniform(-1.5, 1.5, size=(6, 3))
        species = np.array([1, 1, 6, 8, 8, 8])
        rot = random_rotation(3, rng)
        shift = rng.uniform(-5, 5, size=3)
        cfg = Configuration(positions=pos, species=species, energy=0.0, forces=np.zeros((6, 3)))
        moved = Configuration(
            positions=pos @ rot.T + shift, species=species, energy=0.0, forces=np.zeros((6, 3))
        )
        a = descriptor_local_radial(cfg, 4.0, 4, 0.5)
        b = descriptor_local_radial(moved, 4.0, 4, 0.5)
        assert a.vectors == pytest.approx(b.vectors, abs=1e-10)

    def test_species_order_pads_layout(self):
        cfg = Configuration(
            positions=[[0, 0, 0], [1, 0, 0]], species=[1, 1], energy=0.0,
            forces=np.zeros((2, 3)),
        )
        env = descriptor_local_radial(cfg, 4.0, 2, 0.5, species_order=[1, 6, 8])
        assert env.vectors.shape == (2, 6)
        assert np.all(env.vectors[:, 2:] == 0.0)  # no carbon or oxygen neighbors


class TestSynthBoltzmann:
    def test_determinism(self):
        surf = StyblinskiTang()
        a = synth_boltzmann_set(surf, temperature=5.0, n=200, seed=8, step=0.5)
        b = synth_boltzmann_set(surf, temperature=5.0, n=200, seed=8, step=0.5)
        assert np.array_equal(a.descriptors, b.descriptors)
        assert np.array_equal(a.labels, b.labels)

    def test_high_temperature_approaches_uniform(self):
        surf = StyblinskiTang()
        hot = synth_boltzmann_set(surf, temperature=1e7, n=5000, seed=2, step=3.0)
        uniform = uniform_domain_sample(surf, 5000, seed=3)
        for c in range(2):
            stat = ks_2samp(hot.descriptors[:, c], uniform.descriptors[:, c]).statistic
            assert stat < 0.1

    def test_low_temperature_prefers_wells(self):
        surf = StyblinskiTang()
        cold = synth_boltzmann_set(surf, temperature=2.0, n=2000, seed=5, step=0.5)
        uniform = uniform_domain_sample(surf, 2000, seed=6)
        assert cold.labels.mean() < uniform.labels.mean()

    def test_samples_stay_in_domain(self):
        surf = StyblinskiTang()
        hot = synth_boltzmann_set(surf, temperature=1e7, n=500, seed=2, step=3.0)
        assert np.all(hot.descriptors >= -4) and np.all(hot.descriptors <= 4)

    def test_empty_request_rejected(self):
        with pytest.raises(ValueError, match="n must be"):
            synth_boltzmann_set(StyblinskiTang(), 1.0, 0, 0, 0.5)

    def test_non_finite_surface_rejected(self):
        class BadSurface:
            dim = 2
            domain = (-4.0, 4.0)

            def value(self, x):
                return float("nan")

            def value_and_gradient(self, x):
                raise AssertionError("never reached")

        with pytest.raises(GenerationError):
            synth_boltzmann_set(BadSurface(), 1.0, 10, 0, 0.5)


class TestLabeledSetSerialization:
    def make_set(self):
        return uniform_domain_sample(StyblinskiTang(), 25, seed=12)

    def test_csv_round_trip(self):
        labeled = self.make_set()
        text = labeled.to_csv()
        header = text.splitlines()[0]
        assert header == "id,label,grad_norm,x0,x1"
        back = LabeledSet.from_csv(text)
        assert np.array_equal(back.descriptors, labeled.descriptors)
        assert np.array_equal(back.labels, labeled.labels)
        assert np.array_equal(back.gradient_norms, labeled.gradient_norms)
        assert back.ids == labeled.ids

    def test_json_round_trip(self):
        labeled = self.make_set()
        back = LabeledSet.from_json(labeled.to_json())
        assert np.array_equal(back.descriptors, labeled.descriptors)
        assert back.ids == labeled.ids

    def test_subset_keeps_alignment(self):
        labeled = self.make_set()
        sub = labeled.subset([3, 1, 4])
        assert sub.ids == (labeled.ids[3], labeled.ids[1], labeled.ids[4])
        assert np.array_equal(sub.descriptors[0], labeled.descriptors[3])

    def test_validation(self):
        with pytest.raises(ValueError):
            LabeledSet(
                descriptors=np.zeros((2, 2)), labels=np.zeros(3),
                gradient_norms=np.zeros(2), ids=("a", "b"),
            )
        with pytest.raises(ValueError, match="nonnegative"):
            LabeledSet(
                descriptors=np.zeros((1, 2)), labels=np.zeros(1),
                gradient_norms=np.array([-1.0]), ids=("a",),
            )


def test_labeled_set_from_configurations():
    rng = np.random.default_rng(55)
    base = rng.uniform(-1, 1, size=(3, 3))
    configs = []
    for _ in range(6):
        pos = base + 0.05 * rng.normal(size=(3, 3))
        configs.append(
            Configuration(
                positions=pos, species=[8, 1, 1],
                energy=float(rng.normal()), forces=rng.normal(size=(3, 3)),
            )
        )
    labeled = labeled_set_from_configurations(configs, cutoff=4.0, n_basis=3, widths=0.5)
    assert len(labeled) == 6
    assert labeled.dim == 3 * 2 * 3  # atoms x species-union x basis
    assert np.all(labeled.gradient_norms >= 0)
