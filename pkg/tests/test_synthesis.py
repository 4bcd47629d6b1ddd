import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threatsim.core import CulturalIdentity, ModelParams, group_of
from threatsim.population import EXCLUSIVE, INCLUSIVE
from threatsim.synthesis import (
    FitConfig,
    IndicatorMatrix,
    PopulationSpec,
    Prototype,
    SearchSpace,
    build_population,
    check_prototype,
    compute_indicators,
    default_prototypes,
    dumps,
    expand,
    fit,
    fit_result_from_dict,
    fit_result_to_dict,
    largest_remainder,
    mixture_counts,
    objective,
    prototype_counts,
    prototype_indicators,
    prototypes_to_array,
    protos_to_prototypes,
    spec_from_dict,
    spec_to_dict,
)

from . import oracles


def matrix(v, labels=("M", "C", "A")):
    v = np.asarray(v, dtype=float)
    return IndicatorMatrix(v[:9].reshape(3, 3), v[9:].reshape(3, 3), labels)


class TestPrototypes:
    def test_defaults_valid(self):
        protos = default_prototypes()
        assert [(p.group, p.kind) for p in protos] == [(g, c) for g in range(3) for c in (0, 1)]
        for p in protos:
            check_prototype(p, 0.05)
            assert group_of(p.identity) == p.group

    def test_exclusive_positive_elsewhere_rejected(self):
        bad = Prototype(0, EXCLUSIVE, CulturalIdentity.from_triples(
            [(0.8, 0.5, 0.95), (-0.6, -0.9, 0.1), (-0.6, -0.9, -0.3)]))
        with pytest.raises(ValueError, match="worldview 1"):
            check_prototype(bad, 0.05)

    def test_inclusive_far_position_rejected(self):
        bad = Prototype(0, INCLUSIVE, CulturalIdentity.from_triples(
            [(0.8, 0.5, 0.95), (-0.6, -0.9, 0.4), (0.0, -0.3, 0.4)]))
        with pytest.raises(ValueError):
            check_prototype(bad, 0.05)

    def test_wrong_group_rejected(self):
        bad = Prototype(1, INCLUSIVE, CulturalIdentity.from_triples(
            [(0.8, 0.5, 0.95), (0.2, -0.3, 0.4), (0.0, -0.3, 0.4)]))
        with pytest.raises(ValueError, match="highest position"):
            check_prototype(bad, 0.05)

    def test_narrow_margin_rejected(self):
        bad = Prototype(0, INCLUSIVE, CulturalIdentity.from_triples(
            [(0.5, 0.49, 0.9), (0.0, -0.3, 0.4), (0.0, -0.3, 0.4)]))
        with pytest.raises(ValueError, match="epsilon"):
            check_prototype(bad, 0.05)


class TestCounts:
    def test_largest_remainder(self):
        assert largest_remainder(10, (1, 1, 1)) == [4, 3, 3]
        assert largest_remainder(0, (1, 2)) == [0, 0]
        assert sum(largest_remainder(997, (0.2, 0.3, 0.5))) == 997

    def test_six_agents_one_each(self):
        spec = PopulationSpec(n=6)
        assert prototype_counts(spec) == [1] * 6
        pop = build_population(spec)
        for i, p in enumerate(default_prototypes()):
            assert pop.identity(i) == p.identity
            assert (pop.group[i], pop.kind[i]) == (p.group, p.kind)

    def test_thousand_agents(self):
        spec = PopulationSpec(n=1000, inclusive_fraction=(0.4, 0.4, 0.4))
        counts = prototype_counts(spec)
        assert sum(counts) == 1000
        assert counts[0] + counts[1] in (333, 334)
        for g in range(3):
            n_g = counts[2 * g] + counts[2 * g + 1]
            assert abs(counts[2 * g] - 0.4 * n_g) <= 1

    @given(st.integers(0, 2000), st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_counts_sum(self, n, fr):
        assert sum(mixture_counts(n, (0.2, 0.5, 0.3), fr)) == n

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            PopulationSpec(shares=(0.5, 0.6, -0.1))
        with pytest.raises(ValueError):
            PopulationSpec(inclusive_fraction=(0.5, 1.2, 0.5))
        with pytest.raises(ValueError):
            PopulationSpec(prototypes=default_prototypes()[::-1])


class TestBuild:
    def test_deterministic(self):
        spec = PopulationSpec(n=200, jitter=0.1, seed=4)
        assert build_population(spec).same_as(build_population(spec))

    def test_seed_matters(self):
        a = build_population(PopulationSpec(n=50, jitter=0.1, seed=1))
        b = build_population(PopulationSpec(n=50, jitter=0.1, seed=2))
        assert not a.same_as(b)

    def test_jitter_keeps_valid(self):
        pop = build_population(PopulationSpec(n=300, jitter=0.4, seed=3))
        pop.validate(0.05)
        assert np.all(pop.position.max(axis=1) > 0)

    def test_prototype_groups(self):
        pop = build_population(PopulationSpec(n=60))
        for i in range(pop.n):
            assert group_of(pop.identity(i)) == pop.group[i]


class TestIndicators:
    @pytest.mark.parametrize("n", [6, 9, 10])
    def test_oracle(self, n):
        d = 21
        params = ModelParams(d=d)
        pop = build_population(PopulationSpec(n=n, jitter=0.15, seed=n))
        ids = [list(zip(pop.position[i], pop.lower[i], pop.upper[i])) for i in range(pop.n)]
        mean, std = oracles.indicators(ids, list(pop.group), d)
        got = compute_indicators(pop, params.grid(), params)
        assert np.allclose(got.mean, mean, atol=1e-12, rtol=0)
        assert np.allclose(got.std, std, atol=1e-12, rtol=0)

    def test_prototype_fast_path(self, grid, params):
        spec = PopulationSpec(n=60, inclusive_fraction=(0.3, 0.5, 0.8))
        slow = compute_indicators(build_population(spec), grid, params)
        fast = prototype_indicators(prototypes_to_array(spec.prototypes), prototype_counts(spec), grid, params)
        assert np.allclose(slow.mean, fast.mean, atol=1e-12)
        assert np.allclose(slow.std, fast.std, atol=1e-12)

    def test_csv_round_trip(self, grid, params):
        ind = compute_indicators(build_population(PopulationSpec(n=12)), grid, params)
        back = IndicatorMatrix.from_csv(ind.to_csv())
        assert np.array_equal(back.mean, ind.mean) and np.array_equal(back.std, ind.std)

    def test_csv_missing_pair(self):
        text = "observer_group,target_group,mean,std\nM,M,0.1,0.2\n"
        with pytest.raises(ValueError, match="all 9"):
            IndicatorMatrix.from_csv(text)

    def test_shipped_reference(self, params):
        text = resources.files("threatsim").joinpath("data/reference_example.csv").read_text()
        regen = compute_indicators(build_population(PopulationSpec(n=60)), params.grid(), params)
        assert text == regen.to_csv()


class TestObjective:
    def test_zero_for_identical(self):
        m = matrix(np.linspace(-0.5, 0.5, 18))
        assert objective(m, m) == (0.0, 0.0, 0.0)

    def test_worked(self):
        ref = matrix([0.5] * 9 + [0.05] * 9)
        cand = matrix([0.6] + [0.5] * 8 + [0.05] * 8 + [0.15])
        l1, avg, mx = objective(cand, ref)
        assert l1 == pytest.approx(0.2, abs=1e-15)
        # 0.1/0.5 and 0.1/max(0.05, 0.1)
        assert mx == pytest.approx(1.0, abs=1e-15)
        assert avg == pytest.approx((0.2 + 1.0) / 18, abs=1e-15)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-1, 1), min_size=54, max_size=54))
    def test_l1_metric(self, v):
        a, b, c = matrix(v[:18]), matrix(v[18:36]), matrix(v[36:])
        assert objective(a, b)[0] == pytest.approx(objective(b, a)[0], abs=1e-12)
        assert objective(a, c)[0] <= objective(a, b)[0] + objective(b, c)[0] + 1e-12


class TestSearchSpace:
    def test_dim(self):
        assert SearchSpace().dim == 57

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=57, max_size=57))
    def test_decode_always_valid(self, u):
        space = SearchSpace()
        protos, fractions = space.decode(np.array(u))
        for p in protos_to_prototypes(protos):
            check_prototype(p, space.epsilon, space.near_zero, tol=1e-9)
        assert all(0 <= x <= 1 for x in fractions)

    def test_round_trip(self):
        space = SearchSpace()
        u = np.random.default_rng(0).uniform(0.05, 0.95, size=space.dim)
        protos, fr = space.decode(u)
        assert np.allclose(space.encode(protos, fr), u, atol=1e-9)


SMALL = FitConfig(n=12, n_starts=10, budget=60, n_climbers=2, top=5)


@pytest.fixture(scope="module")
def reference():
    params = ModelParams(d=101)
    return compute_indicators(build_population(PopulationSpec(n=12)), params.grid(), params), params


class TestFit:
    def test_zero_budget_is_starts_only(self, reference):
        ref, params = reference
        cfg = FitConfig(n=12, n_starts=7, budget=0, top=20)
        res = fit(ref, cfg, seed=1, params=params)
        assert res.evaluations == 7 and len(res.candidates) == 7

    def test_same_seed_same_result(self, reference):
        ref, params = reference
        a = fit(ref, SMALL, seed=3, params=params)
        b = fit(ref, SMALL, seed=3, params=params)
        assert dumps(fit_result_to_dict(a)) == dumps(fit_result_to_dict(b))

    def test_ranked(self, reference):
        ref, params = reference
        res = fit(ref, SMALL, seed=3, params=params)
        l1 = [c.l1 for c in res.candidates]
        assert l1 == sorted(l1) and len(l1) == SMALL.top
        assert res.evaluations == SMALL.n_starts + SMALL.budget

    def test_more_budget_never_worse(self, reference):
        ref, params = reference
        best = [fit(ref, FitConfig(n=12, n_starts=10, budget=b, n_climbers=1), seed=5, params=params).best.l1
                for b in (0, 40, 200)]
        assert best[0] >= best[1] >= best[2]

    def test_candidates_valid(self, reference):
        ref, params = reference
        for c in fit(ref, SMALL, seed=2, params=params).candidates:
            pop = build_population(c.spec, params.epsilon)
            pop.validate(params.epsilon)
            l1, avg, mx = objective(compute_indicators(pop, params.grid(), params), ref)
            assert l1 == pytest.approx(c.l1, abs=1e-9)
            assert avg == pytest.approx(c.avg_rel, abs=1e-9)

    def test_custom_optimizer(self, reference):
        ref, params = reference
        seen = []

        def one_point(evaluate, dim, rng, cfg):
            seen.append(dim)
            evaluate(np.full(dim, 0.5))

        res = fit(ref, SMALL, seed=0, params=params, optimizer=one_point)
        assert seen == [57] and res.evaluations == 1 and len(res.candidates) == 1

    def test_json_round_trip(self, reference):
        ref, params = reference
        res = fit(ref, SMALL, seed=3, params=params)
        text = dumps(fit_result_to_dict(res))
        again = fit_result_from_dict(json.loads(text))
        assert dumps(fit_result_to_dict(again)) == text

    def test_expand(self, reference):
        ref, params = reference
        big = expand(fit(ref, SMALL, seed=3, params=params).best.spec, 1000)
        assert build_population(big).n == 1000


class TestSpecDict:
    def test_round_trip(self):
        spec = PopulationSpec(n=30, jitter=0.05, seed=9, inclusive_fraction=(0.1, 0.2, 0.3))
        assert spec_from_dict(json.loads(json.dumps(spec_to_dict(spec)))) == spec

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            spec_from_dict({"n": 3, "size": 4})
