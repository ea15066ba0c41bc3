import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from fbtc.errors import LengthMismatchError
from fbtc.harness import adjusted_rand_index, contingency_table, evaluate, generate_three_group
from fbtc.measures import compute_measure_vector
from fbtc.trajectory import derivative_profile


class TestGenerator:
    def test_defaults(self):
        ds = generate_three_group()
        assert len(ds) == 45 and ds.labels == [1] * 15 + [2] * 15 + [3] * 15
        assert all(tr.N == 10 and tr.times[0] == 0 and tr.times[-1] == 1 for tr in ds.trajectories)
        assert ds.ids[0] == "g1_01" and ds.ids[-1] == "g3_15"
        assert ds.generator_spec["seed"] == 0

    def test_linear_group_signature(self):
        for tr in generate_three_group().trajectories[:15]:
            v = compute_measure_vector(tr).values
            assert v["m8"] == pytest.approx(1, abs=1e-12)
            assert v["m12"] == pytest.approx(v["m10"], rel=1e-12)

    def test_quadratic_group_curves_upward(self):
        for tr in generate_three_group().trajectories[30:]:
            assert np.all(derivative_profile(tr).d2[1:-1] > 0)

    def test_step_group_has_one_jump(self):
        for tr in generate_three_group().trajectories[15:30]:
            assert np.count_nonzero(np.diff(tr.values)) == 1

    def test_deterministic(self):
        a = generate_three_group(seed=4, noise_sd=0.1)
        b = generate_three_group(seed=4, noise_sd=0.1)
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a.trajectories, b.trajectories))
        c = generate_three_group(seed=5, noise_sd=0.1)
        assert not np.array_equal(a.trajectories[0].values, c.trajectories[0].values)

    def test_separation_tightens(self):
        spread = [np.ptp([tr.values[-1] - tr.values[0] for tr in generate_three_group(separation=s).trajectories[:15]]) for s in (1, 4)]
        assert spread[1] < spread[0]

    def test_bad_args(self):
        with pytest.raises(ValueError):
            generate_three_group(n_obs=2)
        with pytest.raises(ValueError):
            generate_three_group(separation=0)


class TestEvaluate:
    def test_perfect_with_relabel(self):
        r = evaluate([2, 2, 1, 1], [1, 1, 2, 2])
        assert r.matched == 4 and r.ari == 1 and r.matching == {1: 2, 2: 1}

    def test_half(self):
        r = evaluate([1, 2, 1, 2], [1, 1, 2, 2])
        assert r.accuracy == 0.5 and r.ari == pytest.approx(-0.5)

    def test_table(self):
        table, rows, cols = contingency_table(["a", "b", "b"], [1, 1, 2])
        assert rows == [1, 2] and cols == ["a", "b"] and table.tolist() == [[1, 1], [0, 1]]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            evaluate([1, 2], [1])

    def test_single_cluster_everywhere(self):
        assert evaluate([1, 1, 1], [5, 5, 5]).ari == 1.0

    def test_more_found_than_reference(self):
        r = evaluate([1, 2, 3, 3], [1, 1, 2, 2])
        assert r.matched == 3 and r.contingency.shape == (2, 3)

    def test_format_table(self):
        lines = evaluate([1, 2], [1, 2]).format_table().splitlines()
        assert len(lines) == 3 and lines[0].split()[0] == "ref\\found"

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=2, max_size=40))
    def test_ari_matches_reference_implementation(self, pairs):
        found, ref = zip(*pairs)
        table, _, _ = contingency_table(found, ref)
        assert adjusted_rand_index(table) == pytest.approx(adjusted_rand_score(ref, found), abs=1e-12)

    @given(st.lists(st.integers(1, 4), min_size=2, max_size=30), st.permutations([1, 2, 3, 4]))
    def test_relabelling_found_changes_nothing(self, found, perm):
        ref = [(i * 7) % 3 for i in range(len(found))]
        a = evaluate(found, ref)
        b = evaluate([perm[f - 1] for f in found], ref)
        assert a.matched == b.matched and a.ari == pytest.approx(b.ari, abs=1e-15)
