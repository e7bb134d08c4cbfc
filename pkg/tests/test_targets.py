import numpy as np
import pytest

from bsflow import targets as tg
from bsflow.errors import ArgumentError, SingularPointError


class TestDensities:
    def test_single_ring_peak_value(self):
        # with a tiny width the rings decouple; on the first ring the
        # mixture reduces to its first term, amplitude 1
        t = tg.ToyTarget(kind="rings", width=1e-4)
        x = np.array([t.radii[0], 0.0])
        assert np.exp(tg.unnorm_logdensity(t, x)) == pytest.approx(1.0,
                                                                   abs=1e-6)

    def test_rotation_invariance(self):
        t = tg.ToyTarget.rings()
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=2) * 2.0
            angle = rng.uniform(0, 2 * np.pi)
            rot = np.array([[np.cos(angle), -np.sin(angle)],
                            [np.sin(angle), np.cos(angle)]])
            assert tg.unnorm_logdensity(t, rot @ x) == pytest.approx(
                tg.unnorm_logdensity(t, x), abs=1e-12)

    def test_periodic_kind_even_in_each_coordinate(self):
        t = tg.ToyTarget.periodic_rings()
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=2)
            for i in range(2):
                flipped = x.copy()
                flipped[i] = -flipped[i]
                assert tg.unnorm_logdensity(t, flipped) == pytest.approx(
                    tg.unnorm_logdensity(t, x), abs=1e-12)

    def test_energy_is_negated_logdensity(self):
        t = tg.ToyTarget.rings()
        x = np.array([0.3, -1.2])
        assert tg.energy(t, x) == -tg.unnorm_logdensity(t, x)

    def test_logsumexp_stable_far_out(self):
        t = tg.ToyTarget.rings()
        val = tg.unnorm_logdensity(t, np.array([1e3, 0.0]))
        assert np.isfinite(val)
        force = tg.target_force(t, np.array([1e3, 0.0]))
        assert np.all(np.isfinite(force))

    def test_invalid_parameters(self):
        with pytest.raises(ArgumentError):
            tg.ToyTarget(kind="rings", width=-1.0)
        with pytest.raises(ArgumentError):
            tg.ToyTarget(kind="blobs")


class TestForces:
    def test_zero_radial_force_on_isolated_ridge(self):
        t = tg.ToyTarget(kind="rings", width=1e-3)
        x = np.array([0.0, t.radii[1]])
        f = tg.target_force(t, x)
        radial = f @ (x / np.linalg.norm(x))
        assert radial == pytest.approx(0.0, abs=1e-8)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for t in (tg.ToyTarget.rings(), tg.ToyTarget.periodic_rings()):
            for _ in range(25):
                x = rng.uniform(-2.0, 2.0, size=2)
                if t.kind == "rings" and np.linalg.norm(x) < 0.1:
                    continue
                f = tg.target_force(t, x)
                h = 1e-6
                for i in range(2):
                    e = np.zeros(2)
                    e[i] = h
                    fd = (tg.unnorm_logdensity(t, x + e)
                          - tg.unnorm_logdensity(t, x - e)) / (2 * h)
                    assert f[i] == pytest.approx(fd, rel=1e-7, abs=1e-7)

    def test_periodic_zero_at_origin(self):
        t = tg.ToyTarget.periodic_rings()
        np.testing.assert_allclose(tg.target_force(t, np.array([0.0, 0.0])),
                                   0.0, atol=1e-15)

    def test_origin_singularity_raises(self):
        t = tg.ToyTarget.rings()
        with pytest.raises(SingularPointError):
            tg.target_force(t, np.array([0.0, 0.0]))

    def test_closed_path_line_integral_vanishes(self):
        # the force is an exact gradient, so its circulation is zero;
        # midpoint rule with analytic tangents on an off-center circle
        t = tg.ToyTarget.rings()
        s = np.linspace(0, 2 * np.pi, 4001)
        mid = 0.5 * (s[1:] + s[:-1])
        path = np.stack([1.3 + 0.45 * np.cos(mid), 0.2 + 0.45 * np.sin(mid)],
                        axis=-1)
        tangent = np.stack([-0.45 * np.sin(mid), 0.45 * np.cos(mid)],
                           axis=-1) * (s[1] - s[0])
        circulation = np.sum(tg.target_force(t, path) * tangent)
        assert circulation == pytest.approx(0.0, abs=1e-9)


class TestMetropolis:
    def test_identical_proposal_always_accepted(self):
        ratio = np.zeros(1000)
        accept = tg.metropolis_decision(ratio, np.random.default_rng(3).random(1000))
        assert accept.all()

    def test_acceptance_statistics_match_rule(self):
        # recorded decisions follow min(1, exp(delta)) per log-ratio bin
        _, records = tg.mh_generate(tg.ToyTarget.rings(), chains=2000,
                                    burn_in=60, keeps=1, step=0.6, seed=4,
                                    collect_stats=True)
        ratios = np.concatenate([r for r, _ in records])
        accepts = np.concatenate([a for _, a in records])
        for lo, hi in ((-2.0, -1.0), (-1.0, -0.5), (-0.5, -0.1)):
            mask = (ratios >= lo) & (ratios < hi)
            if np.count_nonzero(mask) < 200:
                continue
            want = np.mean(np.minimum(1.0, np.exp(ratios[mask])))
            got = np.mean(accepts[mask])
            assert got == pytest.approx(want, abs=0.05)
        assert np.all(accepts[ratios >= 0.0])

    def test_seed_determinism(self):
        a = tg.mh_generate(tg.ToyTarget.rings(), chains=100, burn_in=50,
                           keeps=5, seed=8)
        b = tg.mh_generate(tg.ToyTarget.rings(), chains=100, burn_in=50,
                           keeps=5, seed=8)
        assert np.array_equal(a.positions, b.positions)

    def test_sample_count(self):
        ds = tg.mh_generate(tg.ToyTarget.rings(), chains=120, burn_in=30,
                            keeps=7, seed=9)
        assert ds.n == 120 * 7

    def test_radial_histogram_matches_amplitudes(self, small_rings_dataset):
        # mean density over a thin annulus at each ring radius follows the
        # amplitude ordering
        ds = small_rings_dataset
        t = ds.target
        radii = np.linalg.norm(ds.positions, axis=1)
        densities = []
        for r in t.radii:
            mask = np.abs(radii - r) < 0.1
            area = np.pi * ((r + 0.1) ** 2 - (r - 0.1) ** 2)
            densities.append(np.count_nonzero(mask) / area)
        assert all(a > b for a, b in zip(densities, densities[1:]))
        peaks = []
        for r in t.radii:
            mask = np.abs(radii - r) < 0.1
            peaks.append(np.count_nonzero(mask))
        assert all(p > 0 for p in peaks)

    def test_rows_inside_box(self, small_rings_dataset):
        ds = small_rings_dataset
        assert np.all(ds.positions >= ds.box.lo)
        assert np.all(ds.positions <= ds.box.hi)
        unit = ds.unit_positions()
        assert np.all(unit >= tg.MARGIN - 1e-12)
        assert np.all(unit <= 1.0 - tg.MARGIN + 1e-12)


class TestDatasetIO:
    def test_round_trip(self, small_rings_dataset, tmp_path):
        path = tmp_path / "rings.ds"
        tg.save_dataset(small_rings_dataset, path)
        loaded = tg.load_dataset(path)
        assert np.array_equal(loaded.positions, small_rings_dataset.positions)
        assert loaded.seed == small_rings_dataset.seed
        assert loaded.target == small_rings_dataset.target
        np.testing.assert_array_equal(loaded.box.lo, small_rings_dataset.box.lo)

    def test_byte_identical_for_same_seed(self, tmp_path):
        for name in ("a", "b"):
            ds = tg.mh_generate(tg.ToyTarget.rings(), chains=50, burn_in=20,
                                keeps=4, seed=21)
            tg.save_dataset(ds, tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_csv_export(self, tmp_path):
        ds = tg.mh_generate(tg.ToyTarget.rings(), chains=10, burn_in=5,
                            keeps=2, seed=22)
        tg.dataset_to_csv(ds, tmp_path / "rows.csv")
        rows = (tmp_path / "rows.csv").read_text().strip().splitlines()
        assert rows[0] == "x0,x1"
        assert len(rows) == ds.n + 1
        first = np.array([float(v) for v in rows[1].split(",")])
        np.testing.assert_allclose(first, ds.positions[0], rtol=1e-15)


class TestBoxMap:
    def test_pullback_force_scaling(self):
        t = tg.ToyTarget.rings()
        box = tg.BoxMap(lo=np.array([-5.0, -4.0]), hi=np.array([5.0, 4.0]))
        z = np.array([[0.3, 0.6]])
        x = box.from_unit(z)
        f_data = tg.target_force(t, x)
        f_unit = box.pullback_force(t, z)
        np.testing.assert_allclose(f_unit, f_data / box.scale, atol=1e-12)
        # chain rule against finite differences in flow coordinates
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (box.pullback_logdensity(t, z + e)
                  - box.pullback_logdensity(t, z - e)) / (2 * h)
            assert f_unit[0, i] == pytest.approx(float(fd[0]), rel=1e-6)

    def test_degenerate_box_rejected(self):
        with pytest.raises(ArgumentError):
            tg.BoxMap(lo=np.array([0.0, 0.0]), hi=np.array([1.0, 0.0]))
