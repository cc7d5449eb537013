import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipcover.algorithms import (AlgoConfig, BudgetInputs, InfeasibleStartMode, PreconditionError,
                                 constrained_covering, covering_method, delta_gap_bound,
                                 kappa_mu_convex, pigeonhole_budget, relax_and_project,
                                 t_sufficient_constrained, t_sufficient_mu_convex,
                                 t_sufficient_unconstrained)
from lipcover.benchmarks import appendix_examples, resistive_oracle, sinc_objective
from lipcover.core import BoxDomain, FunctionOracle, ProblemSpec, Status, ValidationError

# frozen from tests/oracles/derive_values.py
T_UNC_BRANIN = 1_200_001
T_CON_P1 = 961_200_001


def square(x):
    return float(x @ x), 2 * np.asarray(x)


def spec1(fn=square, **kw):
    base = dict(domain=BoxDomain.cube(1, -1, 1), oracle=FunctionOracle(fn), q1=np.ones(1),
                lip_j=2.0, eta=1e-6)
    base.update(kw)
    return ProblemSpec(**base)


def running_best(trace, level):
    best, out = math.inf, []
    for r in trace:
        if level is None or r.h_at_query <= level:
            best = min(best, r.j_at_query)
        out.append(best)
    return out


def fine_min(problem, level, n=200_001):
    xs = np.linspace(-10, 10, n)[:, None]
    j = np.array([problem.objective(x)[0] for x in xs])
    if level is not None:
        h = np.array([problem.constraint(x)[0] for x in xs])
        j = j[h <= level]
    return float(j.min())


@pytest.fixture(scope="module")
def example_runs():
    ex1, ex2 = appendix_examples()
    ex1b = appendix_examples(lip_j=1.0)[0]
    return {
        "ex1": (ex1, constrained_covering(ex1.spec("infeasible"))),
        "ex1b": (ex1b, constrained_covering(ex1b.spec("infeasible"))),
        "ex2": (ex2, relax_and_project(ex2.spec("feasible"))),
    }


class TestCovering:
    def test_square_converges(self):
        out = covering_method(spec1())
        assert out.status is Status.MINIMUM
        assert out.delta_global <= 1e-6
        assert abs(out.best_point[0]) < 1e-3 and out.best_value <= 1e-6

    def test_constant_objective(self):
        out = covering_method(spec1(lambda x: (3.0, np.zeros(1)), budget=2))
        # J^- = 3 - |x - 1|^2 bottoms out at the far corner, 4 below
        assert out.trace[0].delta_global == pytest.approx(4.0)
        np.testing.assert_array_equal(out.best_point, [1.0])
        assert out.status is Status.BUDGET_EXHAUSTED

    def test_budget_one(self):
        out = covering_method(spec1(budget=1))
        assert out.status is Status.BUDGET_EXHAUSTED and out.oracle_calls == 1

    def test_delta_monotone_and_sound(self):
        out = covering_method(spec1(sinc_objective, domain=BoxDomain.cube(1, -10, 10),
                                    q1=np.array([-10.0]), lip_j=0.2, eta=0.01))
        assert out.status is Status.MINIMUM
        deltas = [r.delta_global for r in out.trace]
        assert all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:]))
        lbs = [r.surrogate_lb for r in out.trace]
        assert all(b >= a - 1e-3 for a, b in zip(lbs, lbs[1:]))
        xs = np.linspace(-10, 10, 200_001)
        ref = min(sinc_objective(np.array([x]))[0] for x in xs)
        tol = AlgoConfig().bnb_for(spec1(eta=0.01), constrained=False).abs_gap_tol
        for d, b in zip(deltas, running_best(out.trace, None)):
            assert b - ref <= d + tol

    def test_oracle_call_count(self):
        out = covering_method(spec1(budget=5))
        assert out.oracle_calls == len(out.queries) == out.iterations + 1


class TestConstrained:
    def test_example1_minimum(self, example_runs):
        prob, out = example_runs["ex1"]
        assert out.status is Status.MINIMUM
        assert out.delta_global <= prob.eta
        assert out.iterations < 30
        assert out.infeasible_queries > 0
        assert any("boundary" in n for n in out.notes)

    def test_example1_larger_lipschitz_needs_more(self, example_runs):
        assert example_runs["ex1b"][1].iterations > example_runs["ex1"][1].iterations

    def test_example1_anytime(self, example_runs):
        prob, out = example_runs["ex1"]
        ref = fine_min(prob, 0.0)
        tol = min(prob.eta, prob.delta) / 10
        for r, b in zip(out.trace, running_best(out.trace, prob.delta)):
            if math.isfinite(r.delta_global):
                assert b - ref <= r.delta_global + tol

    def test_incumbent_only_within_delta(self, example_runs):
        prob, out = example_runs["ex1"]
        h = prob.constraint(out.best_point)[0]
        assert h <= prob.delta

    def test_resistive_never_within_delta(self):
        s = ProblemSpec(BoxDomain.cube(2, -10, 10), resistive_oracle(1.0), np.zeros(2), 6.0, 1.0,
                        delta=1e-5, budget=20)
        out = constrained_covering(s)
        assert not any(r.within_delta_flag for r in out.trace)
        assert out.status is Status.INFEASIBLE
        assert out.gamma >= 0 and out.delta_global is None
        # certificate validity: min H = 1 >= -gamma
        assert 1.0 >= -out.gamma

    def test_resistive_proof_gives_zero_gamma(self):
        # tiny L_H: a handful of queries make the minorant positive on the whole box
        s = ProblemSpec(BoxDomain.cube(2, -10, 10), resistive_oracle(1.0), np.zeros(2), 6.0, 0.01,
                        delta=1e-5, budget=50)
        out = constrained_covering(s)
        assert out.status is Status.INFEASIBLE
        assert 0.0 <= out.gamma <= 1.0

    def test_minimize_h_first(self):
        ex1 = appendix_examples()[0]
        out = constrained_covering(ex1.spec("infeasible"),
                                   infeasible_start_mode=InfeasibleStartMode.MINIMIZE_H_FIRST)
        phases = [r.phase for r in out.trace]
        assert phases[0] == "feasibility" or ex1.constraint(out.queries[0].point)[0] <= ex1.delta
        k = phases.count("feasibility")
        if k:
            assert out.trace[k - 1].h_at_query <= ex1.delta
        assert out.status is Status.MINIMUM

    def test_budget_one_reports_budget(self):
        ex1 = appendix_examples()[0]
        out = constrained_covering(ex1.spec("infeasible", budget=1))
        assert out.status is Status.BUDGET_EXHAUSTED and out.gamma is not None


class TestRelaxProject:
    def test_example2(self, example_runs):
        prob, out = example_runs["ex2"]
        assert out.status is Status.MINIMUM
        assert out.iterations < 30
        assert out.infeasible_queries == 0
        assert all(prob.constraint(q.point)[0] <= 1e-9 for q in out.queries)
        assert all(r.relax_point is not None for r in out.trace)

    def test_infeasible_start_rejected(self):
        ex2 = appendix_examples()[1]
        with pytest.raises(PreconditionError, match="feasible q1"):
            relax_and_project(ex2.spec("feasible", q1=np.array([10.0])))

    def test_needs_mu(self):
        ex1 = appendix_examples()[0]
        with pytest.raises(ValidationError, match="μ"):
            relax_and_project(ex1.spec("feasible"))


class TestBudgets:
    def test_unconstrained(self):
        assert t_sufficient_unconstrained(BudgetInputs(1, 1.0, 1.0, 1.0)) == 2
        assert t_sufficient_unconstrained(BudgetInputs(2, 20 * math.sqrt(2), 75, 0.1)) == T_UNC_BRANIN

    def test_constrained(self):
        assert t_sufficient_constrained(BudgetInputs(1, 1.0, 1.0, 1.0, 1.0, 1.0)) == 3
        inp = BudgetInputs(2, 20 * math.sqrt(2), 75, 0.1, lip_h=6, delta=1e-5)
        assert t_sufficient_constrained(inp) == T_CON_P1

    def test_mu_convex(self):
        inp = BudgetInputs(1, 1.0, 1.0, 1.0, lip_h=1.0, mu=1.0, grad_j_max=2.0, grad_h_max=2.0)
        assert kappa_mu_convex(inp) == pytest.approx(2.5)
        assert t_sufficient_mu_convex(inp) == 3

    def test_pigeonhole_values(self):
        assert pigeonhole_budget(1, 1.0, 0.25) == 3
        assert pigeonhole_budget(2, math.sqrt(2), 1.0) == 5

    def test_delta_gap(self):
        assert delta_gap_bound(1.0, 0.5, 1.0) == pytest.approx(1.0)
        assert delta_gap_bound(1.0, 0.0, 1.0) == 0.0

    def test_warning_below_slack(self):
        inp = BudgetInputs(2, 20 * math.sqrt(2), 75, 0.1, lip_h=6, delta=1e-5, grad_j_max=390.1)
        with pytest.warns(UserWarning, match="slack"):
            t_sufficient_constrained(inp)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            t_sufficient_constrained(BudgetInputs(1, 1.0, 1.0, 1.0, 1.0, 1.0, grad_j_max=0.1))

    def test_invalid(self):
        with pytest.raises(ValidationError):
            BudgetInputs(1, 1.0, 1.0, 0.0)
        with pytest.raises(ValidationError):
            t_sufficient_mu_convex(BudgetInputs(1, 1.0, 1.0, 1.0, 1.0))


pos = st.floats(0.01, 100)


@given(st.integers(1, 3), st.floats(0.5, 5), pos, pos, pos, pos, st.floats(0.01, 10))
def test_budget_monotone(d, diam, lj, lh, eta, delta, mu):
    base = BudgetInputs(d, diam, lj, eta, lh, delta, mu, 1.0, 1.0)
    half_eta = BudgetInputs(d, diam, lj, eta / 2, lh, delta, mu, 1.0, 1.0)
    half_delta = BudgetInputs(d, diam, lj, eta, lh, delta / 2, mu, 1.0, 1.0)
    half_mu = BudgetInputs(d, diam, lj, eta, lh, delta, mu / 2, 1.0, 1.0)
    assert t_sufficient_unconstrained(half_eta) >= t_sufficient_unconstrained(base)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert t_sufficient_constrained(half_delta) >= t_sufficient_constrained(base)
    assert t_sufficient_mu_convex(half_mu) >= t_sufficient_mu_convex(base)
    assert kappa_mu_convex(base) / lj >= 2 * lh / mu


@settings(max_examples=30)
@given(st.integers(1, 3), st.floats(0.5, 3), st.floats(0.05, 4), st.integers(0, 2**31))
def test_pigeonhole_property(d, side, eps, seed):
    diam = side * math.sqrt(d)
    T = pigeonhole_budget(d, diam, eps)
    if T > 3000:
        return
    pts = np.random.default_rng(seed).uniform(0, side, (T, d))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1)) + np.eye(T) * 1e9
    assert dist.min() <= math.sqrt(eps)
