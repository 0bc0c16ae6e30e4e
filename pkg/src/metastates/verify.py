"""Self-contained verification suites behind the ``verify`` subcommand.

Each suite runs a bundle of checks at full or reduced ("quick") scale and
returns one :class:`CheckResult` per check.  Informational lines report
quantities worth eyeballing that are not pass/fail gates here (the pytest
acceptance suite is the strict gate).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import gibbs, markov, meanfield, metastate, potts

SUITES = ("gibbs", "covariance", "degenerate", "weights", "kernels", "ratio",
          "theorem3", "clt", "all")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool | None  # None marks an informational line
    detail: str

    @property
    def status(self) -> str:
        if self.passed is None:
            return "INFO"
        return "PASS" if self.passed else "FAIL"


def _coexistence_point():
    cx = potts.coexistence(8.0, 3, (3.0, 4.5))
    return potts.PottsParams(beta=8.0, field=cx.field, q=3), cx.u


def brute_force_count_law(model, eta):
    """Configuration-space enumeration of the count-vector law (oracle)."""
    eta = np.asarray(eta, dtype=np.int64)
    q = model.spin_size
    n = eta.size
    law: dict[tuple, float] = {}
    for omega in itertools.product(range(q), repeat=n):
        k = np.bincount(omega, minlength=q)
        w = float(np.exp(-n * model.energy(k / n)))
        for i, s in enumerate(omega):
            w *= model.alphas[eta[i], s]
        key = tuple(int(x) for x in k)
        law[key] = law.get(key, 0.0) + w
    z = sum(law.values())
    return {k: v / z for k, v in law.items()}, float(np.log(z))


def suite_gibbs(quick: bool, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cases = 5 if quick else 25
    nmax = 7 if quick else 9
    worst_tv = worst_z = 0.0
    for _ in range(cases):
        beta = rng.uniform(0.0, 5.0)
        b_field = rng.uniform(0.0, 1.0)
        n = int(rng.integers(4, nmax + 1))
        model = potts.potts_model(potts.PottsParams(beta=beta, field=b_field, q=3))
        eta = rng.integers(0, 3, size=n)
        law, log_z = brute_force_count_law(model, eta)
        dist = gibbs.count_distribution(model, eta)
        tv = sum(abs(p - float(np.exp(dist.log_probs[k[0], k[1]]))) for k, p in law.items())
        worst_tv = max(worst_tv, tv)
        worst_z = max(worst_z, abs(dist.log_z - log_z))
    return [CheckResult("gibbs", "count law vs 3^n enumeration", worst_tv <= 1e-12,
                        f"{cases} cases, worst TV {worst_tv:.2e}, worst logZ gap {worst_z:.2e}")]


def suite_covariance(quick: bool, seed: int = 1) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    chains = 4 if quick else 20
    n_fin = 100_000
    replicas, n_mc = (10_000, 300) if quick else (100_000, 1000)
    gap_methods = gap_fin = z_worst = 0.0
    for k in range(chains):
        ch = markov.TransitionMatrix.from_rows(rng.dirichlet(np.ones(3), size=3))
        pi = markov.stationary(ch)
        cov_s = markov.covariance_limit(ch, pi, method="series", tol=1e-10)
        cov_f = markov.covariance_limit(ch, pi, method="fundamental-matrix", tol=1e-10)
        gap_methods = max(gap_methods, float(np.max(np.abs(cov_s.matrix - cov_f.matrix))))
        gap_fin = max(gap_fin, float(np.max(np.abs(
            markov.covariance_finite(ch, pi, n_fin).matrix - cov_f.matrix))))
        counts, _ = markov.sample_occupation_batch(ch, "stationary", n_mc, replicas, seed=seed + k)
        fl = np.sqrt(n_mc) * (counts / n_mc - pi)
        emp = (fl.T @ fl) / replicas
        exact = markov.covariance_finite(ch, pi, n_mc).matrix
        se = np.sqrt((np.outer(np.diag(exact), np.diag(exact)) + exact**2) / replicas)
        z_worst = max(z_worst, float(np.max(np.abs(emp - exact) / se)))
    return [
        CheckResult("covariance", "series vs fundamental matrix", gap_methods <= 1e-9,
                    f"{chains} chains, worst gap {gap_methods:.2e}"),
        CheckResult("covariance", "finite n=1e5 vs limit", gap_fin <= 1e-3,
                    f"worst gap {gap_fin:.2e}"),
        CheckResult("covariance", "Monte Carlo vs exact finite-n (3 SE)", z_worst <= 3.0,
                    f"worst z {z_worst:.2f} over {chains} chains"),
    ]


def suite_degenerate(quick: bool, seed: int = 2) -> list[CheckResult]:
    ch = markov.degenerate_chain(0.5)
    pi = markov.stationary(ch)
    replicas = 10_000 if quick else 100_000
    counts, finals = markov.sample_occupation_batch(ch, 2, 200, replicas, seed=seed)
    ell = counts[:, 0] - counts[:, 1]
    ok_support = bool(np.all((ell == 0) | (ell == 1)))
    ok_link = bool(np.all((ell == 1) == (finals == 0)))
    cov = markov.covariance_limit(ch, pi)
    rank, null = markov.tangent_rank(cov)
    target = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    null_gap = min(np.max(np.abs(null[0] - target)), np.max(np.abs(null[0] + target))) \
        if rank == 1 else np.inf
    return [
        CheckResult("degenerate", "count difference in {0,1} on every path", ok_support,
                    f"{replicas} paths from state index 2"),
        CheckResult("degenerate", "difference = 1 iff path ends in state index 0", ok_link, ""),
        CheckResult("degenerate", "tangent rank 1, null direction (1,-1,0)/sqrt(2)",
                    rank == 1 and null_gap <= 1e-8,
                    f"rank {rank}, null gap {null_gap:.2e}"),
    ]


def suite_weights(quick: bool, seed: int = 3) -> list[CheckResult]:
    params, u = _coexistence_point()
    model = potts.potts_model(params)
    pi = np.full(3, 1 / 3)
    records = [r for r in meanfield.find_minimizers(model, pi) if r.is_global]
    stab = np.asarray([r.stability for r in records])
    norms = np.linalg.norm(stab, axis=1)
    u0 = int(np.argmin(norms))
    samples = 10**5 if quick else 10**6
    n, replicas = (2000, 2000) if quick else (10_000, 10_000)
    tol_w = 0.03 if quick else 0.01
    tol_e = 0.04 if quick else 0.02

    out = []
    iid = markov.iid_chain(pi)
    cov = markov.covariance_limit(iid, pi)
    gw = metastate.gaussian_weights(cov, stab, samples=samples, margin=0.0, seed=seed)
    ordered = [j for j in range(len(records)) if j != u0]
    out.append(CheckResult(
        "weights", "iid uniform disorder: ordered weights 1/3 each",
        bool(np.all(np.abs(gw.weights[ordered] - 1 / 3) <= tol_w)),
        f"weights {np.round(gw.weights, 4).tolist()}"))
    out.append(CheckResult(
        "weights", "symmetric state invisible (zero stability vector)",
        norms[u0] <= 1e-9 and gw.weights[u0] == 0.0,
        f"|B| = {norms[u0]:.2e}, weight {gw.weights[u0]}"))

    sched = metastate.default_margin_schedule(stab)
    for name, ch in (("iid", iid), ("doubly", markov.doubly_stochastic_chain(0.4, 0.3, 0.2, 0.5))):
        covc = markov.covariance_limit(ch, pi)
        g = metastate.gaussian_weights(covc, stab, samples=samples, margin=sched(n), seed=seed)
        e = metastate.empirical_region_weights(ch, model, pi, n=n, replicas=replicas,
                                               seed=seed + 7, records=records)
        gap = float(np.max(np.abs(g.weights - e.weights)))
        out.append(CheckResult("weights", f"empirical vs Gaussian weights ({name})",
                               gap <= tol_e, f"max gap {gap:.4f}"))
        if name == "doubly":
            w = np.sort(g.weights[ordered])[::-1]
            out.append(CheckResult(
                "weights", "doubly preset: largest two weights differ by > 0.01",
                bool(w[0] - w[1] > 0.01), f"ordered-state weights {np.round(w, 4).tolist()}"))
            out.append(CheckResult(
                "weights", "doubly preset: smallest two weights", None,
                f"differ by {w[1] - w[2]:.4f}; the 1<->3 state swap maps this chain to its "
                f"time reversal, so those two weights agree exactly in the limit"))
    return out


def suite_kernels(quick: bool, seed: int = 4) -> list[CheckResult]:
    params, u = _coexistence_point()
    model = potts.potts_model(params)
    n = 120 if quick else 240
    ch = markov.degenerate_chain(0.5)
    base = markov.sample_path(ch, 2, n, seed=seed).states
    center = potts.ordered_total(params, u, 1)
    spec = gibbs.NeighborhoodSpec(center=center, epsilon=0.15)
    prof = meanfield.gamma_profile(model, center)
    worst = 0.0
    for b in range(3):
        eta = base.copy()
        eta[-1] = b
        sm = gibbs.site_marginals_conditional(model, eta, spec)
        worst = max(worst, float(np.max(np.abs(sm - prof[b]))))
    tol = 0.02 if quick else 0.01
    return [CheckResult("kernels", f"conditional site marginal vs tilted kernel (n={n})",
                        worst <= tol, f"worst gap {worst:.4f} over all field/spin pairs")]


def _aitken(r1: float, r2: float, r3: float) -> float:
    denom = (r3 - r2) - (r2 - r1)
    if abs(denom) < 1e-12:
        return r3
    return r3 - (r3 - r2) ** 2 / denom


def suite_ratio(quick: bool, seed: int = 5) -> list[CheckResult]:
    params, u = _coexistence_point()
    model = potts.potts_model(params)
    target = potts.p1(params, u)
    c1 = potts.ordered_total(params, u, 0)
    c2 = potts.ordered_total(params, u, 1)
    volumes = (30, 60, 120) if quick else (60, 120, 240)
    out = []
    for eps in (0.05, 0.1, 0.2):
        ratios = []
        for n in volumes:
            c0 = n // 3 + 1
            eta = np.repeat(np.arange(3), [c0, c0 - 1, n - 2 * c0 + 1])
            ratios.append(gibbs.gibbs_ratio(model, eta, c1, c2, eps))
        extrap = _aitken(*ratios)
        rel = abs(extrap - target) / target
        out.append(CheckResult("ratio", f"extrapolated mass ratio vs closed form (eps={eps})",
                               rel <= 0.05, f"{extrap:.4f} vs {target:.4f} ({rel:.2%})"))
    par0 = potts.PottsParams(beta=params.beta, field=params.field, q=3)
    out.append(CheckResult("ratio", "bias is exactly 1 at u = 0",
                           abs(potts.p1(par0, 0.0) - 1.0) <= 1e-12, ""))
    return out


def suite_theorem3(quick: bool, seed: int = 6) -> list[CheckResult]:
    params, u = _coexistence_point()
    p = potts.p_of(params, u)
    n, replicas = (2000, 4000) if quick else (10_000, 20_000)
    n_direct, rep_direct = (120, 500) if quick else (240, 2000)
    tol = 0.03 if quick else 0.02

    per_start = {}
    for start in (0, 1, 2):
        per_start[start] = metastate.degenerate_potts_kappa(
            params, start, n=n, replicas=replicas, seed=seed + start)
    pure3 = [0.0, 0.0, 1.0]
    even = [0.5, 0.5, 0.0]
    biased = [p, 1 - p, 0.0]
    reversed_biased = [1 - p, p, 0.0]

    est3 = per_start[2]
    out = [CheckResult(
        "theorem3", "start state 3: weights (1/2, 1/3, 1/6)",
        abs(est3.weight_of(pure3) - 0.5) <= tol
        and abs(est3.weight_of(even) - 1 / 3) <= tol
        and abs(est3.weight_of(biased) - 1 / 6) <= tol,
        f"measured ({est3.weight_of(pure3):.3f}, {est3.weight_of(even):.3f}, "
        f"{est3.weight_of(biased):.3f})")]
    est1 = per_start[0]
    out.append(CheckResult(
        "theorem3", "start state 1 matches start state 3",
        all(abs(est1.weight_of(c) - est3.weight_of(c)) <= tol
            for c in (pure3, even, biased)), ""))
    est2 = per_start[1]
    out.append(CheckResult(
        "theorem3", "start state 2: biased atom has reversed coefficients",
        est2.weight_of(reversed_biased) > 0.1 and est2.weight_of(biased) <= 0.05,
        f"reversed-atom weight {est2.weight_of(reversed_biased):.3f}"))
    out.append(CheckResult(
        "theorem3", "asymmetry |p - 1/2| > 0.01", abs(p - 0.5) > 0.01, f"p = {p:.4f}"))

    direct = metastate.degenerate_potts_kappa(params, 2, n=n_direct, replicas=rep_direct,
                                              seed=seed + 9, estimator="direct", epsilon=0.1)
    structural = metastate.degenerate_potts_kappa(params, 2, n=n_direct, replicas=rep_direct,
                                                  seed=seed + 9, estimator="structural")
    gap = max(abs(direct.weight_of(c) - structural.weight_of(c))
              for c in (pure3, even, biased))
    out.append(CheckResult("theorem3", "structural vs direct estimator (same paths)",
                           gap <= 0.05, f"max weight gap {gap:.3f}"))
    coeffs = [a for a in direct.atoms
              if a.coefficients[2] < 0.5 and abs(a.coefficients[0] - 0.5) > 0.1]
    coeff_gap = min((abs(a.coefficients[0] - p) for a in coeffs), default=np.inf)
    out.append(CheckResult("theorem3", "direct biased coefficients match closed-form bias",
                           coeff_gap <= 0.03, f"gap {coeff_gap:.4f}"))

    combined = metastate.combine_kappa([per_start[s] for s in (0, 1, 2)], np.full(3, 1 / 3))
    measured = (combined.weight_of(pure3), combined.weight_of(even),
                combined.weight_of(biased), combined.weight_of(reversed_biased))
    out.append(CheckResult(
        "theorem3", "equilibrium mixture vs printed weights (1/2, 1/3, 1/9, 1/18)", None,
        f"measured {tuple(round(w, 3) for w in measured)}; printed values put 1/3 on the even "
        f"atom and 1/18 on the reversed atom, but paths started in state 2 carry the reversed "
        f"atom exactly when they do not end in state 1 (limiting probability 2/3, not 1/3), "
        f"so the measurement converges to (1/2, 5/18, 1/9, 1/9)"))
    return out


def suite_clt(quick: bool, seed: int = 7) -> list[CheckResult]:
    n, replicas = (1000, 2000) if quick else (10_000, 10_000)
    lam_pair = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    lam_sym = np.array([1.0, 1.0, -2.0]) / np.sqrt(6)
    cases = [
        ("iid", markov.iid_chain(np.full(3, 1 / 3)), lam_pair),
        ("doubly", markov.doubly_stochastic_chain(0.4, 0.3, 0.2, 0.5), lam_pair),
        ("degenerate", markov.degenerate_chain(0.5), lam_sym),
    ]
    out = []
    for name, ch, lam in cases:
        diag = metastate.clt_joint_independence(ch, lam, n=n, replicas=replicas, seed=seed)
        zmax = max(max(r.z_freq, r.z_mean, r.z_var) for r in diag.rows)
        out.append(CheckResult("clt", f"final state and fluctuation decouple ({name})",
                               diag.passed, f"worst z {zmax:.2f} (4 SE allowed)"))
    return out


_SUITE_FUNCS = {
    "gibbs": suite_gibbs,
    "covariance": suite_covariance,
    "degenerate": suite_degenerate,
    "weights": suite_weights,
    "kernels": suite_kernels,
    "ratio": suite_ratio,
    "theorem3": suite_theorem3,
    "clt": suite_clt,
}


def run_suite(suite: str, quick: bool = False) -> list[CheckResult]:
    """Run one suite (or ``all``); returns the individual check results."""
    if suite == "all":
        results = []
        for name in _SUITE_FUNCS:
            results.extend(_SUITE_FUNCS[name](quick))
        return results
    if suite not in _SUITE_FUNCS:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    return _SUITE_FUNCS[suite](quick)
