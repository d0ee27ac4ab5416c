"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (the verdict lines
are written straight to the terminal, bypassing capture).  All seeds are fixed.
"""

import math
import time
import timeit

import numpy as np
import pytest
from scipy import stats

from kmplab import cli
from kmplab.coupling import run_coupled_counts
from kmplab.disagreement import perfect_sim_eta, perfect_sim_samples, ranks_to_order, run_eta
from kmplab.engine import run_ensemble
from kmplab.events import substream
from kmplab.exact import solve_second_moments, tilde_correlations
from kmplab.graph import path_graph
from kmplab.kmp import sample_stationary_energy
from kmplab.kmp_discrete import duality_check_continuous, duality_check_opinion
from kmplab.opinion import arcsine_cdf, opinion_nu_sampler, stationary_opinion_samples
from kmplab.stats import (chi2_goodness_of_fit, chi2_two_sample, covariance_with_se, hydrostatic_experiment,
                          independence_report, ks_statistic, mixture_exponential_cdf, mixture_geometric_pmf)
from oracles import arcsine_moment

LEVEL = 0.01


@pytest.fixture
def verdict(capsys):
    def report(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return report


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def test_criterion_01_arcsine_law(verdict):
    t0 = time.perf_counter()
    s = stationary_opinion_samples(path_graph(2, 0.0, 1.0), 10_000, seed=101)[:, 1]
    ks = ks_statistic(s, lambda y: arcsine_cdf(y, 0.0, 1.0))
    wall = time.perf_counter() - t0
    verdict(1, not ks.reject_01 and wall < 10,
            f"arc-sine KS D={ks.D:.4f} (crit 0.01 {ks.critical_01:.4f}), n={ks.n}, {wall:.1f}s")


def test_criterion_02_worked_example(verdict):
    g = path_graph(8, 0.0, 1.0)
    order = ranks_to_order([3, 6, 5, 8, 1, 2, 4, 7])
    out = perfect_sim_eta(g, order)
    best = min(timeit.repeat(lambda: perfect_sim_eta(g, order), number=1, repeat=50))
    ok = list(out) == [1, 1, 0, 1, 0, 1, 1, 1] and best < 1e-3
    verdict(2, ok, f"eta*={''.join(map(str, out))}, {best * 1e6:.0f} us per call")


def _renewal_fraction_se(run):
    """Time fraction in state 0 and its regenerative (ratio-estimator) standard error."""
    h, s = run.holding_times, run.holding_states
    start = int(np.argmax(s == 0))
    h, s = h[start:], s[start:]
    cycles = len(h) // 2
    zero, one = h[0:2 * cycles:2], h[1:2 * cycles:2]
    assert np.all(s[0:2 * cycles:2] == 0) and np.all(s[1:2 * cycles:2] == 1)
    length = zero + one
    p = zero.sum() / length.sum()
    resid = zero - p * length
    return p, float(resid.std(ddof=1) / (math.sqrt(cycles) * length.mean()))


def test_criterion_03_edge_marginal(verdict):
    t0 = time.perf_counter()
    g = path_graph(5, 0.0, 1.0)
    mid = g.edge_id((2, 3))
    n = 100_000
    freq = float((perfect_sim_samples(g, n, seed=103)[:, mid] == 0).mean())
    sigma = math.sqrt((1 / 3) * (2 / 3) / n)
    run = run_eta(g, np.ones(g.n_edges, np.uint8), 10**6, seed=104, track=mid, burn_in=1000)
    p_time, se_time = _renewal_fraction_se(run)
    wall = time.perf_counter() - t0
    ok = abs(freq - 1 / 3) <= 3 * sigma and abs(p_time - 1 / 3) <= 3 * se_time and wall < 30
    verdict(3, ok, f"perm freq={freq:.4f} (3sd {3 * sigma:.4f}); time avg={p_time:.4f} (3sd {3 * se_time:.4f}); "
                   f"{wall:.1f}s")


def test_criterion_04_second_moment_chain(verdict):
    t0 = time.perf_counter()
    m11 = solve_second_moments(2, 0.0, 1.0).second[1, 1]
    quad = arcsine_moment(2)
    g = path_graph(2, 0.0, 1.0)
    nu = opinion_nu_sampler(g)
    rng = substream(105)
    z = np.array([sample_stationary_energy(g, nu, rng)[1] for _ in range(100_000)])
    m, se = _mean_se(z ** 2)
    wall = time.perf_counter() - t0
    ok = abs(m11 - 0.375) < 1e-12 and abs(m11 - quad) < 1e-12 and abs(m - 0.75) <= 3 * se and wall < 30
    verdict(4, ok, f"M11={m11:.15f}, arc-sine E[Y^2]={quad:.15f}, E[zeta^2]={m:.4f}+-{se:.4f}, {wall:.1f}s")


def test_criterion_05_correlation_bound(verdict):
    t0 = time.perf_counter()
    details, ok = [], True
    for n in (5, 10, 20):
        C = solve_second_moments(n, 0.0, 1.0).covariance
        gap = float(np.max(C - tilde_correlations(n, 0.0, 1.0)))
        ok &= gap <= 1e-12
        samples = stationary_opinion_samples(path_graph(n, 0.0, 1.0), 10_000, seed=106, key=n)
        cov, se = covariance_with_se(samples)
        inner = slice(1, n)
        z = np.abs(cov - C)[inner, inner] / se[inner, inner]
        worst = float(z.max())
        ok &= worst <= 3.0
        details.append(f"N={n}: max(C-Ct)={gap:.1e}, worst |z|={worst:.2f} over {z.size} entries")
    spot = tilde_correlations(10, 0.0, 1.0)[2, 5]
    ok &= abs(spot - 1 / 110) < 1e-15
    wall = time.perf_counter() - t0
    ok &= wall < 120
    verdict(5, ok, "; ".join(details) + f"; Ct[2,5]={spot:.8f}; {wall:.1f}s")


def test_criterion_06_independence(verdict):
    t0 = time.perf_counter()
    g = path_graph(4, 0.0, 1.0)
    R = 10_000
    rng = substream(107)

    def temps_init():
        T = rng.random((R, g.n_vertices))
        T[:, g.boundary_ids] = g.temps[g.boundary_ids]
        return T

    X0 = rng.standard_exponential((R, g.n_vertices))
    X, T, _ = run_ensemble("joint", g, (X0, temps_init()), seed=108, t=3.0)
    O = run_ensemble("opinion", g, temps_init(), seed=109, t=3.0)
    rep = independence_report(X, T, [1, 2, 3])
    p = float(stats.ks_2samp(T[:, 2], O[:, 2]).pvalue)
    wall = time.perf_counter() - t0
    ok = rep.consistent and p > LEVEL and wall < 120
    verdict(6, ok, f"corr={np.round(rep.correlations, 4).tolist()} band={rep.band:.4f}; "
                   f"KS(T2,O2) p={p:.3f}; {wall:.1f}s")


def test_criterion_07_mixture_invariance(verdict):
    t0 = time.perf_counter()
    g = path_graph(5, 1.0, 2.0)
    R = 10_000
    nu = opinion_nu_sampler(g)
    rng = substream(110)
    Z = np.array([sample_stationary_energy(g, nu, rng) for _ in range(R)])
    means = stationary_opinion_samples(g, 10_000, seed=111)
    snapshots = {0: Z.copy()}
    Z = run_ensemble("kmp", g, Z, seed=112, n_events=500)
    snapshots[500] = Z.copy()
    Z = run_ensemble("kmp", g, Z, seed=113, n_events=500)
    snapshots[1000] = Z
    ok, worst = True, []
    for v in g.interior_ids:
        ks = ks_statistic(Z[:, v], mixture_exponential_cdf(means[:, v]))
        ok &= not ks.reject_01
        worst.append(ks.D / ks.critical_01)
    bworst = []
    for snap in snapshots.values():
        for b in g.boundary_ids:
            ks = ks_statistic(snap[:, b], lambda x, T=g.temps[b]: stats.expon.cdf(x, scale=T))
            ok &= not ks.reject_01
            bworst.append(ks.D / ks.critical_01)
    wall = time.perf_counter() - t0
    ok &= wall < 300
    verdict(7, ok, f"interior max D/crit={max(worst):.2f}; boundary max D/crit={max(bworst):.2f} "
                   f"over {len(snapshots)} times; {wall:.1f}s")


def test_criterion_08_duality(verdict):
    g = path_graph(4, 1.0, 2.0)
    O = np.array([1.0, 0.5, 3.0, 1.2, 2.0])
    cases = [[0, 1, 0, 0, 0], [0, 1, 0, 1, 0], [0, 0, 2, 0, 0]]
    ok, lines, worst = True, 0, 0.0
    for K in cases:
        for t in (0.0, 1.0, 5.0):
            for check in (duality_check_opinion, duality_check_continuous):
                rep = check(g, O, K, t, 100_000, seed=114)
                ok &= rep.passed
                if t == 0 and check is duality_check_opinion:
                    ok &= rep.lhs == rep.rhs
                if t == 0 and check is duality_check_continuous:
                    ok &= rep.rhs_se == 0.0
                denom = rep.lhs_se + rep.rhs_se
                worst = max(worst, abs(rep.lhs - rep.rhs) / denom if denom else 0.0)
                lines += 1
    verdict(8, ok, f"{lines} cases, worst |lhs-rhs|/(se1+se2)={worst:.2f} (limit 3)")


def test_criterion_09_discrete_sns(verdict):
    t0 = time.perf_counter()
    g = path_graph(5, 1.0, 2.0)
    R = 10_000
    means = stationary_opinion_samples(g, 20_000, seed=115)
    K = run_ensemble("discrete", g, np.zeros((R, g.n_vertices), dtype=np.int64), seed=116, t=200.0)
    pvals = []
    for v in g.interior_ids:
        kmax = int(K[:, v].max()) + 60
        pvals.append(chi2_goodness_of_fit(K[:, v], mixture_geometric_pmf(means[:, v], kmax)))
    rng = substream(117)
    s = np.ones(g.n_vertices)
    s[g.boundary_ids] = g.temps[g.boundary_ids]
    Zc = s * rng.standard_exponential((R, g.n_vertices))
    K0 = rng.poisson(Zc)
    Kc = K0.copy()
    run_coupled_counts(Zc, Kc, g, 30, substream(118))
    Kd = run_ensemble("discrete", g, K0, seed=119, n_events=30)
    cpvals = [chi2_two_sample(Kc[:, v], Kd[:, v]) for v in range(g.n_vertices)]
    wall = time.perf_counter() - t0
    ok = min(pvals) > LEVEL and min(cpvals) > LEVEL and wall < 300
    verdict(9, ok, f"stationary chi2 min p={min(pvals):.3f}; coupled-vs-direct min p={min(cpvals):.3f}; {wall:.1f}s")


def test_criterion_10_hydrostatic(verdict):
    t0 = time.perf_counter()
    rows = hydrostatic_experiment([5, 10, 20, 40], 1000, "one", 0.0, 1.0, seed=120)
    var = [r.variance for r in rows]
    ok = all(r.mean_ok for r in rows) and all(r.variance_below_bound for r in rows)
    ok &= all(a > b for a, b in zip(var, var[1:]))
    wall = time.perf_counter() - t0
    ok &= wall < 600
    table = ", ".join(f"N={r.n}: mean {r.mean:.4f} (exp {r.expected_mean:.4f}) var {r.variance:.2e} "
                      f"bound {r.bound:.2e}" for r in rows)
    verdict(10, ok, f"{table}; {wall:.1f}s")


DETERMINISM_RUNS = [
    ("simulate", ["--kind", "joint", "--path", "4", "--horizon", "2", "--replicas", "5", "--sample-times", "1"]),
    ("simulate", ["--kind", "coupled", "--path", "3", "--events", "30", "--temps", "1,2"]),
    ("stationary-sample", ["--path", "6", "--replicas", "300"]),
    ("perfect-sim-eta", ["--path", "6", "--replicas", "2000"]),
    ("perfect-sim-eta", ["--path", "8-edges", "--perm", "3,6,5,8,1,2,4,7"]),
    ("exact-moments", ["--path", "10"]),
    ("duality-check", ["--path", "4", "--temps", "1,2", "--replicas", "5000", "--particles", "0,0,2,0,0"]),
    ("hydrostatic", ["--ns", "5,10", "--replicas", "300"]),
    ("independence", ["--path", "4", "--replicas", "2000", "--horizon", "3"]),
    ("coupling-check", ["--path", "4", "--temps", "1,2", "--replicas", "3000"]),
]


def test_criterion_11_determinism(verdict, tmp_path):
    mismatched = []
    for k, (experiment, args) in enumerate(DETERMINISM_RUNS):
        dirs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{k}{rep}"
            code = cli.main(["run", experiment, "--seed", "121", *args, "--out", str(out)])
            assert code == 0
            dirs.append(out)
        csvs = sorted(p.name for p in dirs[0].glob("*.csv"))
        if not csvs or any((dirs[0] / c).read_bytes() != (dirs[1] / c).read_bytes() for c in csvs):
            mismatched.append(experiment)
    verdict(11, not mismatched, f"{len(DETERMINISM_RUNS)} runs over all 8 experiments; mismatched: {mismatched}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
