import numpy as np
import pytest

from mtl_relu_lab.cpwl import (
    CPWLError,
    CPWLFunction,
    connect_the_dots,
    cpwl_from_json,
    cpwl_to_json,
    cpwl_to_net,
    equality_family_interpolant,
    evaluate,
    insert_free_knot,
    knot_removal_delta,
    net_to_cpwl,
    random_perturbed_interpolant,
    remove_extraneous_knots,
    representational_cost,
    segment_slopes,
    uniqueness_report,
)
from mtl_relu_lab.dataset import MultiTaskDataset
from mtl_relu_lab.network import ShallowReLUNet, forward_batch, path_norm_cost

HAT = MultiTaskDataset([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])


def aligned_dataset():
    # second task twice the first; consecutive slope changes share direction
    t1 = np.array([0.0, 0.0, 1.0, 3.0])
    return MultiTaskDataset([0.0, 1.0, 2.0, 3.0], np.c_[t1, 2.0 * t1])


class TestEvaluate:
    def test_affine(self):
        f = CPWLFunction(np.zeros(0), np.zeros((0, 1)), [1.0], [0.0], 0.0)
        assert evaluate(f, 3.0)[0] == pytest.approx(3.0)

    def test_scaled_relu(self):
        f = CPWLFunction([0.0], [[2.0]], [0.0], [0.0])
        assert evaluate(f, 1.0)[0] == pytest.approx(2.0)
        assert evaluate(f, -1.0)[0] == pytest.approx(0.0)

    def test_continuity_at_knot(self):
        f = CPWLFunction([0.5], [[3.0, -1.0]], [1.0, 0.5], [0.2, -0.2])
        eps = 1e-9
        left = evaluate(f, 0.5 - eps)
        right = evaluate(f, 0.5 + eps)
        at = evaluate(f, 0.5)
        assert np.allclose(left, at, atol=1e-8)
        assert np.allclose(right, at, atol=1e-8)

    def test_zero_change_knots_dropped(self):
        f = CPWLFunction([0.0, 1.0], [[1.0], [0.0]], [0.0], [0.0])
        assert f.n_knots == 1


class TestRepresentationalCost:
    def test_affine_is_free(self):
        f = CPWLFunction(np.zeros(0), np.zeros((0, 2)), [3.0, -4.0], [1.0, 1.0], 0.0)
        assert representational_cost(f) == 0.0

    def test_hat_cost(self):
        assert representational_cost(connect_the_dots(HAT)) == pytest.approx(2.0)

    def test_two_task_hat_cost(self):
        data = MultiTaskDataset([0.0, 1.0, 2.0], [[0.0, 0.0], [1.0, 2.0], [0.0, 0.0]])
        # slope changes (-2, -4) at the middle point
        assert representational_cost(connect_the_dots(data)) == pytest.approx(2.0 * np.sqrt(5.0))


class TestConnectTheDots:
    def test_two_points_affine(self):
        data = MultiTaskDataset([0.0, 2.0], [1.0, 5.0])
        f = connect_the_dots(data)
        assert f.n_knots == 0
        assert representational_cost(f) == 0.0
        assert evaluate(f, 1.0)[0] == pytest.approx(3.0)

    def test_collinear_no_knots(self):
        x = np.linspace(0, 4, 5)
        data = MultiTaskDataset(x, 2.0 * x - 1.0)
        assert connect_the_dots(data).n_knots == 0

    def test_hat_midpoint(self):
        f = connect_the_dots(HAT)
        assert f.n_knots == 1
        assert evaluate(f, 1.5)[0] == pytest.approx(0.5)

    def test_interpolates_and_extends_boundary_slopes(self):
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(-2, 2, 6))
        data = MultiTaskDataset(x, rng.standard_normal((6, 3)))
        f = connect_the_dots(data)
        assert np.allclose(evaluate(f, x), data.labels, atol=1e-12)
        s = segment_slopes(f)
        chord0 = (data.labels[1] - data.labels[0]) / (x[1] - x[0])
        chordl = (data.labels[-1] - data.labels[-2]) / (x[-1] - x[-2])
        assert np.allclose(s[0], chord0)
        assert np.allclose(s[-1], chordl)


class TestKnotRemovalDelta:
    def test_zero_delta_exact_equality(self):
        rng = np.random.default_rng(1)
        a, b, c = rng.standard_normal((3, 4))
        with_k, without, dec = knot_removal_delta(a, b, c, np.zeros(4), 0.3)
        assert with_k == pytest.approx(without, abs=0.0)
        assert not dec

    def test_aligned_equality_family(self):
        a, b, c = np.array([2.0, 0.0]), np.array([0.0, 0.0]), np.array([-1.0, 0.0])
        # a-b=(2,0), b-c=(1,0); tau=1/2 allows ||delta|| <= min(2, 1) = 1
        for s in (0.25, 0.5, 1.0):
            with_k, without, dec = knot_removal_delta(a, b, c, [s, 0.0], 0.5)
            assert abs(with_k - without) <= 1e-12
            assert not dec

    def test_not_aligned_strict_increase(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 0.0])
        c = np.array([0.0, -1.0])  # a-b=(1,0), b-c=(0,1): orthogonal
        rng = np.random.default_rng(2)
        for _ in range(1000):
            delta = rng.standard_normal(2)
            tau = rng.uniform(0.05, 0.95)
            with_k, without, dec = knot_removal_delta(a, b, c, delta, tau)
            assert with_k > without + 1e-12
            assert dec

    def test_never_decreases_randomly(self):
        rng = np.random.default_rng(3)
        for t in (1, 2, 5):
            for _ in range(500):
                a, b, c, delta = rng.standard_normal((4, t))
                tau = rng.uniform(0.05, 0.95)
                with_k, without, _ = knot_removal_delta(a, b, c, delta, tau)
                assert with_k >= without - 1e-12

    def test_tau_out_of_range(self):
        with pytest.raises(CPWLError):
            knot_removal_delta([1.0], [0.0], [0.0], [0.1], 1.0)


class TestBentInterpolants:
    def test_bent_still_interpolates(self):
        rng = np.random.default_rng(4)
        x = np.sort(rng.uniform(-3, 3, 7))
        data = MultiTaskDataset(x, rng.standard_normal((7, 2)))
        f = random_perturbed_interpolant(data, rng, n_inserts=3)
        assert np.abs(evaluate(f, x) - data.labels).max() < 1e-10

    def test_insert_cost_matches_knot_removal_arithmetic(self):
        rng = np.random.default_rng(5)
        x = np.sort(rng.uniform(-2, 2, 6))
        data = MultiTaskDataset(x, rng.standard_normal((6, 3)))
        f0 = connect_the_dots(data)
        s = np.diff(data.labels, axis=0) / np.diff(x)[:, None]
        j, tau = 2, 0.4
        delta = rng.standard_normal(3)
        f1 = insert_free_knot(data, j, tau, delta)
        with_k, without, _ = knot_removal_delta(s[j - 1], s[j], s[j + 1], delta, tau)
        gap_direct = representational_cost(f1) - representational_cost(f0)
        assert gap_direct == pytest.approx(with_k - without, abs=1e-12)

    def test_boundary_insert_costs_at_least_delta_norm(self):
        rng = np.random.default_rng(6)
        x = np.sort(rng.uniform(-2, 2, 5))
        data = MultiTaskDataset(x, rng.standard_normal((5, 2)))
        base_cost = representational_cost(connect_the_dots(data))
        for interval in (0, data.n_points - 2):
            delta = rng.standard_normal(2)
            f = insert_free_knot(data, interval, 0.5, delta)
            assert representational_cost(f) >= base_cost + np.linalg.norm(delta) - 1e-10


class TestRemoveExtraneousKnots:
    def test_idempotent_on_straight_interpolant(self):
        rng = np.random.default_rng(7)
        x = np.sort(rng.uniform(-2, 2, 6))
        data = MultiTaskDataset(x, rng.standard_normal((6, 2)))
        f = connect_the_dots(data)
        g = remove_extraneous_knots(f, data)
        grid = np.linspace(x[0] - 1, x[-1] + 1, 500)
        assert np.allclose(evaluate(f, grid), evaluate(g, grid), atol=1e-12)

    def test_equality_family_knot_removed_cost_equal(self):
        data = aligned_dataset()
        f = equality_family_interpolant(data, 1, 0.5, 0.5)
        g = remove_extraneous_knots(f, data)
        assert representational_cost(g) == pytest.approx(representational_cost(f), abs=1e-12)
        fd = connect_the_dots(data)
        grid = np.linspace(-1.0, 4.0, 800)
        assert np.allclose(evaluate(g, grid), evaluate(fd, grid), atol=1e-10)

    def test_generic_perturbation_cost_strictly_decreases(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            x = np.sort(rng.uniform(-2, 2, 6))
            data = MultiTaskDataset(x, rng.standard_normal((6, 2)))
            f = random_perturbed_interpolant(data, rng, n_inserts=2)
            g = remove_extraneous_knots(f, data)
            assert representational_cost(g) < representational_cost(f) - 1e-8

    def test_rejects_non_interpolant(self):
        data = aligned_dataset()
        f = CPWLFunction(np.zeros(0), np.zeros((0, 2)), [0.0, 0.0], [5.0, 5.0], 0.0)
        with pytest.raises(CPWLError, match="interpolate"):
            remove_extraneous_knots(f, data)


class TestUniqueness:
    def test_n3_always_unique(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            data = MultiTaskDataset(np.sort(rng.standard_normal(3)), rng.standard_normal((3, 2)))
            assert uniqueness_report(data).verdict == "unique"

    def test_doubled_task_aligned_non_unique(self):
        rep = uniqueness_report(aligned_dataset())
        assert rep.verdict == "non-unique"
        assert rep.cosines[0] == pytest.approx(1.0)
        assert np.allclose(rep.delta_prev[0], [1.0, 2.0])
        assert np.allclose(rep.delta_next[0], [1.0, 2.0])

    def test_random_gaussian_unique_spot_check(self):
        rng = np.random.default_rng(10)
        for _ in range(500):
            data = MultiTaskDataset(np.sort(rng.standard_normal(6)), rng.standard_normal((6, 2)))
            assert uniqueness_report(data).verdict == "unique"

    def test_zero_change_blocks_alignment(self):
        # middle slope change is exactly zero -> unique despite outer agreement
        data = MultiTaskDataset([0.0, 1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 0.0, -1.0, 0.0])
        rep = uniqueness_report(data)
        assert rep.verdict == "unique"
        assert not rep.both_nonzero[0]


class TestNetConversions:
    def test_single_neuron_to_knot(self):
        net = ShallowReLUNet([[1.0]], [0.0], [[1.0, 0.0]], np.zeros((2, 1)), np.zeros(2))
        f = net_to_cpwl(net)
        assert f.n_knots == 1
        assert f.knots[0] == pytest.approx(0.0)
        assert np.allclose(f.slope_changes[0], [1.0, 0.0])

    def test_round_trip_random_canonical(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            m = rng.integers(1, 6)
            t = rng.integers(1, 4)
            knots = np.sort(rng.standard_normal(m) * 2)
            while m > 1 and np.min(np.diff(knots)) < 1e-6:
                knots = np.sort(rng.standard_normal(m) * 2)
            f = CPWLFunction(
                knots, rng.standard_normal((m, t)), rng.standard_normal(t), rng.standard_normal(t)
            )
            back = net_to_cpwl(cpwl_to_net(f))
            assert np.allclose(back.knots, f.knots, atol=1e-12)
            assert np.allclose(back.slope_changes, f.slope_changes, atol=1e-12)
            grid = np.linspace(knots[0] - 1, knots[-1] + 1, 200)
            assert np.allclose(evaluate(back, grid), evaluate(f, grid), atol=1e-12)

    def test_cost_equivalence(self):
        f = connect_the_dots(aligned_dataset())
        net = cpwl_to_net(f, width=8)
        assert path_norm_cost(net) == pytest.approx(representational_cost(f), abs=0.0)

    def test_width_too_small(self):
        f = connect_the_dots(aligned_dataset())
        with pytest.raises(CPWLError):
            cpwl_to_net(f, width=1)

    def test_net_function_matches_cpwl(self):
        data = aligned_dataset()
        f = connect_the_dots(data)
        net = cpwl_to_net(f)
        grid = np.linspace(-1, 4, 300)
        assert np.allclose(forward_batch(net, grid[:, None]), evaluate(f, grid), atol=1e-12)


class TestJsonRoundTrip:
    def test_cpwl_json(self):
        f = connect_the_dots(aligned_dataset())
        back = cpwl_from_json(cpwl_to_json(f))
        assert np.array_equal(back.knots, f.knots)
        assert np.array_equal(back.slope_changes, f.slope_changes)
        assert np.array_equal(back.base_slope, f.base_slope)
        assert np.array_equal(back.base_offset, f.base_offset)

    def test_affine_json(self):
        f = CPWLFunction(np.zeros(0), np.zeros((0, 2)), [1.0, -1.0], [0.5, 0.5], 0.0)
        back = cpwl_from_json(cpwl_to_json(f))
        assert back.n_knots == 0
        assert np.array_equal(back.base_slope, f.base_slope)
