"""Exit criteria for the solver/simulator toolkit, one test per criterion."""

import functools
import itertools
import json

import numpy as np
import pytest
from scipy import stats

from localbreakout.cli import main
from localbreakout.delay import DelayModel, cn_delay_cdf, cn_delay_samples, p_bac
from localbreakout.harness import ExperimentConfig, run_sweep
from localbreakout.kernel import level_kernel, sample_epochs, transition_row
from localbreakout.params import Action, SystemParams
from localbreakout.policies import PolicySpec
from localbreakout.simulator import SimConfig
from localbreakout.solver import bellman_residual, solve

from oracles import cdf_by_quadrature, enumerate_policies, p_bac_enumerated
from test_kernel import chi_square_pvalue

pytestmark = pytest.mark.acceptance

DELAY = DelayModel()
GRID = (0.05, 0.25, 0.5, 0.75, 0.95)
FIG5 = ExperimentConfig()
FIG6 = ExperimentConfig(axis="q", start=0.02, stop=0.10, step=0.01, fixed=0.05)
SIM_1E6 = SimConfig(n_packets=10**6, warmup_packets=10**5, seed=20180901)


def nonincreasing(xs, slack=1e-12):
    return all(b <= a + slack for a, b in zip(xs, xs[1:]))


def nondecreasing(xs, slack=1e-12):
    return all(b >= a - slack for a, b in zip(xs, xs[1:]))


@functools.cache
def sweep_rows(name):
    return run_sweep({"fig5": FIG5, "fig6": FIG6}[name].with_(sim=SIM_1E6))


def test_c1_kernel(criterion):
    with criterion("C1", "transition rows sum to 1; sampler passes chi-square", 60) as c:
        worst = 0.0
        pvalues = []
        rng = np.random.default_rng(1)
        for p, q in itertools.product(GRID, GRID):
            params = SystemParams(p=p, q=q)
            kern = level_kernel(params)
            worst = max(worst, np.abs(kern.sum(axis=1) - 1).max())
            for s in range(params.n_states):
                for action in Action:
                    if action is Action.BREAKOUT and s == params.buffer_size:
                        continue
                    row = transition_row(params, s, action)
                    worst = max(worst, abs(row.sum() - 1))
                    np.testing.assert_allclose(row, kern[s + action], rtol=0, atol=1e-15)
            for s, action in ((0, Action.BREAKOUT), (params.buffer_size // 2, Action.CORE)):
                row = transition_row(params, s, action)
                draws = sample_epochs(params, s, action, rng, 10**6)
                pvalues.append(((p, q, s, action.name), chi_square_pvalue(draws, row)))
        assert worst <= 1e-12, f"row-sum error {worst}"
        failing = [(k, pv) for k, pv in pvalues if pv <= 0.001]
        assert not failing, f"chi-square rejects {failing}"
        c.detail = f"max row-sum error {worst:.1e}; {len(pvalues)} histograms, min p-value {min(pv for _, pv in pvalues):.3g}"


def test_c2_backhaul_success_oracle(criterion):
    with criterion("C2", "p_bac equals exhaustive enumeration (T <= 12)", 30) as c:
        worst = 0.0
        for q in (0.05, 0.3, 0.5, 0.77, 1.0):
            for deadline in range(1, 13):
                params = SystemParams(q=q, deadline_slots=deadline, buffer_size=deadline)
                for s in range(deadline + 1):
                    worst = max(worst, abs(p_bac(params, s) - p_bac_enumerated(q, s, deadline)))
        assert worst <= 1e-12, f"max error {worst}"
        c.detail = f"max error {worst:.1e}"


def test_c3_core_delay_oracle(criterion):
    with criterion("C3", "CDF vs quadrature to 1e-8; sampler KS < 0.002", 60) as c:
        ts = np.linspace(0, 120, 100)
        errors = [abs(cn_delay_cdf(DELAY, t) - cdf_by_quadrature(t, DELAY)) for t in ts]
        assert max(errors) < 1e-8, f"max quadrature error {max(errors)}"
        draws = cn_delay_samples(DELAY, np.random.default_rng(3), 10**6)
        ks = stats.kstest(draws, lambda x: cn_delay_cdf(DELAY, x)).statistic
        assert ks < 0.002, f"KS distance {ks}"
        c.detail = f"max quadrature error {max(errors):.1e}; KS {ks:.5f}"


def test_c4_solver_oracle(criterion):
    with criterion("C4", "solve matches exhaustive policy enumeration (B <= 4)", 60) as c:
        worst = 0.0
        count = 0
        for buffer_size in (1, 2, 3, 4):
            for p, q in itertools.product((0.2, 0.4, 0.6, 0.8), repeat=2):
                params = SystemParams(p=p, q=q, buffer_size=buffer_size, deadline_slots=4,
                                      tau_ms=7.5)
                gains = enumerate_policies(params, DELAY)
                best = max(gains.values())
                res = solve(params, DELAY)
                assert res.converged
                chosen = gains[tuple(int(a) for a in res.policy)]
                worst = max(worst, abs(res.gain - best), best - chosen)
                count += 1
        assert worst < 1e-6, f"max gain gap {worst}"
        c.detail = f"{count} instances, max gap {worst:.1e}"


def test_c5_bellman_residual(criterion):
    with criterion("C5", "Bellman residual at paper scale", 60) as c:
        params = SystemParams()
        res = solve(params, DELAY)
        assert res.converged
        scale = max(1.0, np.abs(res.value).max())
        residual = bellman_residual(params, DELAY, res)
        assert residual < 1e-6 * scale, f"residual {residual} vs scale {scale}"
        c.detail = f"residual {residual:.2e}, max|V| {scale:.3g}, {res.iterations} iterations"


def test_c6_fig5_trend(criterion):
    with criterion("C6", "p sweep: MDP >= myopic, gains nonincreasing, gap grows", 300) as c:
        fig5_rows = sweep_rows("fig5")
        mdp = [r.gains["mdp"] for r in fig5_rows]
        myo = [r.gains["myopic"] for r in fig5_rows]
        assert len(fig5_rows) == 9
        assert all(a >= b for a, b in zip(mdp, myo)), list(zip(mdp, myo))
        assert nonincreasing(mdp) and nonincreasing(myo), (mdp, myo)
        gap = [(a - b) / b for a, b in zip(mdp, myo)]
        assert gap[-1] > gap[0], gap
        c.detail = f"relative gap p=0.01: {gap[0]:.3g}, p=0.09: {gap[-1]:.3g}"


def test_c7_fig6_trend(criterion):
    with criterion("C7", "q sweep: gains nondecreasing, MDP >= myopic", 300) as c:
        fig6_rows = sweep_rows("fig6")
        mdp = [r.gains["mdp"] for r in fig6_rows]
        myo = [r.gains["myopic"] for r in fig6_rows]
        assert all(a >= b for a, b in zip(mdp, myo)), list(zip(mdp, myo))
        assert nondecreasing(mdp) and nondecreasing(myo), (mdp, myo)
        c.detail = f"relative gap q=0.02: {(mdp[0] - myo[0]) / myo[0]:.3g}"


def test_c8_threshold_trend(criterion):
    with criterion("C8", "thresholds clean, nonincreasing in p, nondecreasing in q") as c:
        fig5_rows, fig6_rows = sweep_rows("fig5"), sweep_rows("fig6")
        dirty = [(r.axis, r.value) for r in fig5_rows + fig6_rows if not r.threshold_is_clean]
        assert not dirty, f"non-threshold policies at {dirty}"
        by_p = [r.threshold for r in fig5_rows]
        by_q = [r.threshold for r in fig6_rows]
        assert nonincreasing(by_p, 0), list(zip([r.value for r in fig5_rows], by_p))
        assert nondecreasing(by_q, 0), list(zip([r.value for r in fig6_rows], by_q))
        c.detail = f"by p {by_p}; by q {by_q}"


def test_c9_analytic_empirical_closure(criterion):
    policies = (PolicySpec("mdp"), PolicySpec("myopic"), PolicySpec("always_breakout"),
                PolicySpec("always_core"), PolicySpec("fixed_threshold", 30))
    with criterion("C9", "simulated success within max(3 CI, 1e-3) of analytic gain", 300) as c:
        rows = run_sweep(FIG5.with_(policies=policies, sim=SIM_1E6))
        misses, worst = [], 0.0
        for row in rows:
            for spec in policies:
                err = abs(row.sim_success[spec.name] - row.gains[spec.name])
                tol = max(3 * row.ci95[spec.name], 1e-3)
                worst = max(worst, err / tol)
                if err >= tol:
                    misses.append((row.value, spec.name, err, tol))
        assert not misses, misses
        c.detail = f"{len(rows) * len(policies)} checks, worst err/tol {worst:.2f}"


def test_c10_sweep_determinism(criterion, tmp_path):
    with criterion("C10", "sweep CSV byte-identical across runs and worker counts", 300) as c:
        cfg = FIG5.with_(sim=SimConfig(n_packets=200_000, seed=77))
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        outputs = []
        for run_index, workers in enumerate((1, 1, 8, 8)):
            out = tmp_path / f"run{run_index}.csv"
            code = main(["sweep", "--config", str(path), "--out", str(out),
                         "--workers", str(workers), "--seed", "77"])
            assert code == 0
            outputs.append(out.read_bytes())
        assert len(set(outputs)) == 1
        c.detail = f"{len(outputs)} runs, {len(outputs[0])} bytes each"
