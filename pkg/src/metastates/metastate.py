"""Metastate assembly.

Couples the disorder side (occupation-time fluctuations of the field chain)
to the spin side (free-energy minimizers and their stability vectors):

* classification of tangent fluctuations into stability regions,
* Gaussian region weights (Monte Carlo over the limiting covariance),
* empirical finite-volume region weights over replica paths,
* product-kernel representations of the pure states on finite windows,
* the metastate of the 3-state random-field Potts model driven by the
  three-state chain with one deterministic transition, estimated either
  structurally (occupation-count bookkeeping) or directly (exact
  finite-volume Gibbs-mass ratios), and the printed reference weights.

Atoms of a metastate estimate are mixtures over minimizer indices; the
estimate keeps any unclassified replica mass explicit so weights plus
undecided mass always account for 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gibbs as gibbs_mod
from . import markov as markov_mod
from . import potts as potts_mod
from .errors import DegenerateAll, NoOrderedPhase
from .geometry import tangent_basis
from .markov import TransitionMatrix

DEFAULT_MARGIN_COEFF = 0.2
ATOM_MERGE_TOL = 0.02


class GaussianSampler:
    """Centered Gaussian on the simplex tangent space with given covariance.

    Rank deficiency is handled by sampling only eigendirections whose
    eigenvalue exceeds 1e-12 of the tangent trace; samples therefore stay
    in the covariance's range space.
    """

    def __init__(self, cov, seed: int = 0, rel_floor: float = 1e-12):
        matrix = np.asarray(getattr(cov, "matrix", cov), dtype=float)
        q = matrix.shape[0]
        basis = tangent_basis(q)
        reduced = basis @ matrix @ basis.T
        w, e = np.linalg.eigh(0.5 * (reduced + reduced.T))
        floor = rel_floor * max(w.sum(), 0.0)
        keep = w > floor
        self.rank = int(keep.sum())
        self._factors = (basis.T @ e[:, keep]) * np.sqrt(w[keep])
        self._rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.size = q

    def sample(self, count: int) -> np.ndarray:
        """Draw ``count`` tangent vectors, shape (count, q')."""
        if self.rank == 0:
            return np.zeros((count, self.size))
        z = self._rng.standard_normal((count, self.rank))
        return z @ self._factors.T


def classify(x, stability, margin: float = 0.0) -> int | None:
    """Index of the stability region containing ``x``, or None.

    Region j wins when <x, B_j> exceeds every other score by more than
    ``margin``; ties and sub-margin gaps are Undecided (None).
    """
    scores = np.asarray([float(np.dot(x, b)) for b in stability])
    order = np.argsort(scores)
    if scores[order[-1]] - scores[order[-2]] > margin:
        return int(order[-1])
    return None


def _classify_batch(x: np.ndarray, stability: np.ndarray, margin: float) -> np.ndarray:
    """Vectorized classification; -1 marks Undecided."""
    scores = x @ stability.T
    top2 = np.partition(scores, -2, axis=1)[:, -2:]
    winners = np.argmax(scores, axis=1)
    return np.where(top2[:, 1] - top2[:, 0] > margin, winners, -1)


@dataclass(frozen=True)
class WeightEstimate:
    """Monte Carlo region weights with binomial standard errors."""

    weights: np.ndarray
    stderr: np.ndarray
    undecided: float
    samples: int


def gaussian_weights(cov, stability, samples: int = 1_000_000, margin: float = 0.0,
                     seed: int = 0, batch: int = 1 << 18) -> WeightEstimate:
    """Estimate w_j = P(G in R_j) for G ~ N(0, cov) on the tangent space.

    Raises DegenerateAll when every sample is Undecided at the given margin.
    """
    stability = np.asarray(stability, dtype=float)
    sampler = GaussianSampler(cov, seed=seed)
    hits = np.zeros(stability.shape[0], dtype=np.int64)
    undecided = 0
    done = 0
    while done < samples:
        take = min(batch, samples - done)
        labels = _classify_batch(sampler.sample(take), stability, margin)
        undecided += int(np.sum(labels < 0))
        hits += np.bincount(labels[labels >= 0], minlength=stability.shape[0])
        done += take
    if undecided == samples:
        raise DegenerateAll("every Gaussian sample was undecided at this margin")
    weights = hits / samples
    stderr = np.sqrt(weights * (1.0 - weights) / samples)
    return WeightEstimate(weights=weights, stderr=stderr,
                          undecided=undecided / samples, samples=samples)


def default_margin_schedule(stability, coefficient: float = DEFAULT_MARGIN_COEFF):
    """Margin schedule c * n^(-1/4), scaled by the largest stability norm.

    Any schedule between n^(-1/2) and O(1) separates genuine region
    membership from lattice-scale ties in the limit; the n^(-1/4) rate
    balances undecided mass at accessible volumes.
    """
    scale = max(float(np.linalg.norm(b)) for b in stability)
    if scale == 0.0:
        scale = 1.0
    return lambda n: coefficient * scale * n ** -0.25


def empirical_region_weights(matrix: TransitionMatrix, model, pi, n: int, replicas: int,
                             margin_schedule=None, seed: int = 0, records=None) -> WeightEstimate:
    """Finite-volume analogue of :func:`gaussian_weights` over replica paths.

    Each replica contributes its standardized occupation fluctuation,
    classified against the stability vectors of the model's global
    minimizers at margin ``margin_schedule(n)``.  For nondegenerate chains
    this converges to the Gaussian weights at the matching margin.
    """
    from .meanfield import find_minimizers

    pi = np.asarray(pi, dtype=float)
    if records is None:
        records = [r for r in find_minimizers(model, pi) if r.is_global]
    stability = np.asarray([r.stability for r in records], dtype=float)
    if margin_schedule is None:
        margin_schedule = default_margin_schedule(stability)
    counts, _ = markov_mod.sample_occupation_batch(matrix, "stationary", n, replicas, seed)
    fluct = np.sqrt(n) * (counts / n - pi)
    labels = _classify_batch(fluct, stability, margin_schedule(n))
    hits = np.bincount(labels[labels >= 0], minlength=stability.shape[0])
    weights = hits / replicas
    stderr = np.sqrt(weights * (1.0 - weights) / replicas)
    return WeightEstimate(weights=weights, stderr=stderr,
                          undecided=float(np.mean(labels < 0)), samples=replicas)


@dataclass(frozen=True)
class PureStateKernels:
    """Finite-window product-kernel representation of one pure state."""

    index: int
    window: np.ndarray
    kernels: np.ndarray


def pure_state_kernels(model, pi, record, eta_window) -> PureStateKernels:
    """Per-site kernels gamma[eta(i)](.| total of the minimizer) on a window."""
    from .meanfield import gamma_profile

    window = np.asarray(getattr(eta_window, "symbols", eta_window), dtype=np.int64)
    kernels = gamma_profile(model, record.total)[window]
    index = getattr(record, "index", 0)
    return PureStateKernels(index=index, window=window, kernels=kernels)


@dataclass(frozen=True)
class MetastateAtom:
    """A mixture over minimizer-indexed pure states, with its weight."""

    coefficients: np.ndarray
    weight: float
    stderr: float | None = None

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if np.any(c < -1e-12) or abs(c.sum() - 1.0) > 1e-12:
            raise ValueError("mixture coefficients must form a probability vector")
        if not -1e-12 <= self.weight <= 1.0 + 1e-12:
            raise ValueError("atom weight must lie in [0, 1]")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)


@dataclass(frozen=True)
class MetastateEstimate:
    """Weighted list of atoms plus any unclassified mass."""

    atoms: tuple[MetastateAtom, ...]
    undecided: float
    provenance: str
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        total = sum(a.weight for a in self.atoms) + self.undecided
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"weights + undecided = {total} != 1")
        object.__setattr__(self, "atoms", tuple(self.atoms))

    def weight_of(self, coefficients, tol: float = ATOM_MERGE_TOL) -> float:
        """Total weight of atoms within ``tol`` (l-infinity) of the coefficients."""
        target = np.asarray(coefficients, dtype=float)
        return sum(
            a.weight for a in self.atoms
            if np.max(np.abs(a.coefficients - target)) <= tol
        )


def merge_atoms(atoms, tol: float = ATOM_MERGE_TOL) -> tuple[MetastateAtom, ...]:
    """Cluster atoms whose coefficients agree within ``tol`` (l-infinity).

    Atoms are sorted by coefficients first, so the result does not depend
    on input order; merged coefficients are weight-averaged.
    """
    ordered = sorted(atoms, key=lambda a: tuple(a.coefficients))
    clusters: list[list[MetastateAtom]] = []
    for atom in ordered:
        placed = False
        for cluster in clusters:
            ref = cluster[0]
            if np.max(np.abs(atom.coefficients - ref.coefficients)) <= tol:
                cluster.append(atom)
                placed = True
                break
        if not placed:
            clusters.append([atom])
    merged = []
    for cluster in clusters:
        weight = sum(a.weight for a in cluster)
        if weight <= 0.0:
            continue
        coeff = sum(a.weight * a.coefficients for a in cluster) / weight
        coeff = np.clip(coeff, 0.0, None)
        coeff /= coeff.sum()
        errs = [a.stderr for a in cluster if a.stderr is not None]
        stderr = float(np.sqrt(np.sum(np.square(errs)))) if errs else None
        merged.append(MetastateAtom(coefficients=coeff, weight=weight, stderr=stderr))
    merged.sort(key=lambda a: -a.weight)
    return tuple(merged)


def _ordered_stability(params: potts_mod.PottsParams, u: float) -> np.ndarray:
    return np.asarray(
        [potts_mod.stability_vector_closed(params, u, j) for j in range(params.q)]
    )


def degenerate_potts_kappa(
    params: potts_mod.PottsParams,
    start_state: int,
    n: int,
    replicas: int,
    epsilon: float | None = None,
    seed: int = 0,
    estimator: str = "structural",
    chain_p: float = 0.5,
    cap: int = gibbs_mod.DEFAULT_CAP,
    margin_coefficient: float = DEFAULT_MARGIN_COEFF,
) -> MetastateEstimate:
    """Metastate estimate for the deterministic-transition chain, one start state.

    Per replica path: if the standardized occupation fluctuation classifies
    into region 3 of the ordered states, a pure-3 atom is emitted.
    Otherwise the path's occupation counts decide the mixture between the
    two nearly degenerate ordered states.  On every path of this chain the
    count difference l = |sites of type 1| - |sites of type 2| takes values
    in {-1, 0, 1}: an unmatched type-1 site tilts the Gibbs mass toward the
    state ordered in direction 1 and vice versa, so

    * the structural estimator emits (p, 1-p) for l = +1, (1/2, 1/2) for
      l = 0, and (1-p, p) for l = -1, with p the closed-form bias,
    * the direct estimator replaces the coefficients of the non-3-like
      cases by r/(1+r), 1/(1+r), where r is the exact finite-volume
      Gibbs-mass ratio of the two ordered neighborhoods on the realized
      path (computed once per distinct count vector).

    For paths started in state index 0 or 2, l = +1 exactly when the path
    ends in state index 0 and l = 0 otherwise; started in state index 1,
    l = 0 when the path ends in index 0 and l = -1 otherwise.

    Atoms are aggregated at coefficient tolerance 0.02.  When no ordered
    branch is globally stable the estimate degenerates to a single atom on
    the symmetric state and is flagged.
    """
    if params.q != 3:
        raise ValueError("the degenerate-chain construction is for q = 3")
    if estimator not in ("structural", "direct"):
        raise ValueError(f"unknown estimator {estimator!r}")
    chain = markov_mod.degenerate_chain(chain_p)
    pi = markov_mod.stationary(chain)
    star = potts_mod.global_order_parameter(params)
    if star is None:
        atom = MetastateAtom(coefficients=np.array([1.0]), weight=1.0)
        return MetastateEstimate(atoms=(atom,), undecided=0.0, provenance=estimator,
                                 flags=("unique-minimizer",))
    u = star.u
    stability = _ordered_stability(params, u)
    margin = default_margin_schedule(stability, coefficient=margin_coefficient)(n)

    counts, _ = markov_mod.sample_occupation_batch(chain, int(start_state), n, replicas, seed)
    fluct = np.sqrt(n) * (counts / n - pi)
    labels = _classify_batch(fluct, stability, margin)
    three_like = labels == 2
    ell = counts[:, 0] - counts[:, 1]

    p_bias = potts_mod.p_of(params, u)
    pure3 = np.array([0.0, 0.0, 1.0])
    atoms: list[MetastateAtom] = []
    n_three = int(three_like.sum())
    if n_three:
        atoms.append(MetastateAtom(coefficients=pure3, weight=n_three / replicas,
                                   stderr=_binom_err(n_three, replicas)))

    rest = np.flatnonzero(~three_like)
    if estimator == "structural":
        for lval, coeff in (
            (1, np.array([p_bias, 1.0 - p_bias, 0.0])),
            (0, np.array([0.5, 0.5, 0.0])),
            (-1, np.array([1.0 - p_bias, p_bias, 0.0])),
        ):
            hits = int(np.sum(ell[rest] == lval))
            if hits:
                atoms.append(MetastateAtom(coefficients=coeff, weight=hits / replicas,
                                           stderr=_binom_err(hits, replicas)))
    else:
        model = potts_mod.potts_model(params)
        center1 = potts_mod.ordered_total(params, u, 0)
        center2 = potts_mod.ordered_total(params, u, 1)
        if epsilon is None:
            totals = [potts_mod.ordered_total(params, u, j) for j in range(3)]
            totals.append(np.full(3, 1.0 / 3.0))
            epsilon = gibbs_mod.default_epsilon(totals)
        cache: dict[tuple[int, ...], float] = {}
        for idx in rest:
            key = tuple(int(c) for c in counts[idx])
            if key not in cache:
                eta = np.repeat(np.arange(3), counts[idx])
                cache[key] = gibbs_mod.gibbs_ratio(model, eta, center1, center2,
                                                   epsilon, cap=cap)
            r = cache[key]
            coeff = np.array([r / (1.0 + r), 1.0 / (1.0 + r), 0.0])
            atoms.append(MetastateAtom(coefficients=coeff, weight=1.0 / replicas))

    merged = merge_atoms(atoms, tol=ATOM_MERGE_TOL)
    return MetastateEstimate(atoms=merged, undecided=0.0, provenance=estimator)


def _binom_err(hits: int, total: int) -> float:
    frac = hits / total
    return float(np.sqrt(frac * (1.0 - frac) / total))


def combine_kappa(per_start, pi) -> MetastateEstimate:
    """Mix per-start estimates with the stationary weights of the starts."""
    pi = np.asarray(pi, dtype=float)
    if len(per_start) != pi.size:
        raise ValueError("need one estimate per start state")
    atoms = []
    undecided = 0.0
    flags: list[str] = []
    for weight, estimate in zip(pi, per_start):
        undecided += weight * estimate.undecided
        flags.extend(estimate.flags)
        for atom in estimate.atoms:
            err = atom.stderr * weight if atom.stderr is not None else None
            atoms.append(MetastateAtom(coefficients=atom.coefficients,
                                       weight=atom.weight * weight, stderr=err))
    return MetastateEstimate(atoms=merge_atoms(atoms), undecided=undecided,
                             provenance="combined", flags=tuple(dict.fromkeys(flags)))


def theorem3_reference(params: potts_mod.PottsParams, u: float | None = None) -> MetastateEstimate:
    """The printed reference metastate: four atoms with weights 1/2, 1/3, 1/9, 1/18.

    Pure state 3 carries 1/2; the even mixture of states 1, 2 carries 1/3;
    the mixtures biased by (p, 1-p) and (1-p, p) carry 1/9 and 1/18.  ``u``
    defaults to the globally stable ordered root; NoOrderedPhase is raised
    when only the symmetric solution exists.
    """
    if params.q != 3:
        raise ValueError("the reference construction is for q = 3")
    if u is None:
        star = potts_mod.global_order_parameter(params)
        if star is None:
            raise NoOrderedPhase("no globally stable ordered root")
        u = star.u
    p_bias = potts_mod.p_of(params, u)
    atoms = (
        MetastateAtom(coefficients=np.array([0.0, 0.0, 1.0]), weight=0.5),
        MetastateAtom(coefficients=np.array([0.5, 0.5, 0.0]), weight=1.0 / 3.0),
        MetastateAtom(coefficients=np.array([p_bias, 1.0 - p_bias, 0.0]), weight=1.0 / 9.0),
        MetastateAtom(coefficients=np.array([1.0 - p_bias, p_bias, 0.0]), weight=1.0 / 18.0),
    )
    return MetastateEstimate(atoms=atoms, undecided=0.0, provenance="reference")


@dataclass(frozen=True)
class CltStateRow:
    """Per-final-state diagnostics of the joint CLT."""

    state: int
    count: int
    frequency: float
    mean: float
    variance: float
    z_freq: float
    z_mean: float
    z_var: float


@dataclass(frozen=True)
class CltDiagnostic:
    """Joint law of (final state, projected fluctuation) vs the product limit."""

    direction: np.ndarray
    n: int
    replicas: int
    sigma2: float
    rows: tuple[CltStateRow, ...]
    passed: bool


def clt_joint_independence(matrix: TransitionMatrix, direction, n: int, replicas: int,
                           seed: int = 0, z_max: float = 4.0) -> CltDiagnostic:
    """Diagnose asymptotic independence of the final state and the fluctuation.

    For each final state the empirical mean and variance of
    <direction, sqrt(n)(pi_hat - pi)> are compared against the pooled
    centered normal with variance direction^t Sigma_M direction, and the
    final-state frequencies against the stationary law; the diagnostic
    passes when every discrepancy is within ``z_max`` standard errors.
    """
    direction = np.asarray(direction, dtype=float)
    pi = markov_mod.stationary(matrix)
    sigma = markov_mod.covariance_limit(matrix, pi)
    sigma2 = float(direction @ sigma.matrix @ direction)
    counts, finals = markov_mod.sample_occupation_batch(matrix, "stationary", n, replicas, seed)
    proj = (np.sqrt(n) * (counts / n - pi)) @ direction

    rows = []
    ok = True
    for b in range(matrix.size):
        sel = proj[finals == b]
        count = sel.size
        freq = count / replicas
        se_freq = np.sqrt(pi[b] * (1.0 - pi[b]) / replicas)
        z_freq = abs(freq - pi[b]) / se_freq if se_freq > 0 else np.inf
        if count == 0:
            rows.append(CltStateRow(b, 0, 0.0, np.nan, np.nan, z_freq, np.inf, np.inf))
            ok = False
            continue
        mean = float(sel.mean())
        var = float(sel.var())
        se_mean = np.sqrt(sigma2 / count) if sigma2 > 0 else 0.0
        se_var = sigma2 * np.sqrt(2.0 / count) if sigma2 > 0 else 0.0
        z_mean = abs(mean) / se_mean if se_mean > 0 else (0.0 if mean == 0.0 else np.inf)
        z_var = abs(var - sigma2) / se_var if se_var > 0 else (0.0 if var == 0.0 else np.inf)
        rows.append(CltStateRow(b, count, freq, mean, var, z_freq, z_mean, z_var))
        ok = ok and max(z_freq, z_mean, z_var) <= z_max
    return CltDiagnostic(direction=direction, n=n, replicas=replicas, sigma2=sigma2,
                         rows=tuple(rows), passed=ok)
