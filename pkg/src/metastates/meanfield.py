"""General finite-type mean-field free-energy engine.

The free energy of a type profile nu_hat (one spin distribution per
disorder symbol) at type frequencies pi_hat is

    phi[pi_hat](nu_hat) = F(sum_b pi_hat(b) nu_hat(b))
                          + sum_b pi_hat(b) S(nu_hat(b) | alpha[b])

with S the relative entropy.  Critical profiles are fixed points of the
single-site tilted-kernel map, which this module iterates from a simplex
grid to enumerate minimizers; each minimizer carries a positive-definiteness
verdict for the Hessian and its stability vector (the negative gradient of
the free energy in the type frequencies).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import rel_entr

from .errors import BoundaryPoint, EmptyResult, NonConvergence, SupportViolation
from .geometry import as_distribution, project_tangent, simplex_grid, tangent_basis

logger = logging.getLogger(__name__)

BOUNDARY_EPS = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """A mean-field model: energy density F, its gradient, and field kernels.

    ``energy`` and ``energy_grad`` must be vectorized over leading axes,
    mapping arrays of shape (..., q) to (...) resp. (..., q).  ``alphas``
    holds one strictly positive a-priori spin distribution per disorder
    symbol, shape (q', q).
    """

    spin_size: int
    field_size: int
    energy: Callable[[np.ndarray], np.ndarray]
    energy_grad: Callable[[np.ndarray], np.ndarray]
    alphas: np.ndarray
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.shape != (self.field_size, self.spin_size):
            raise ValueError("alphas must have shape (field_size, spin_size)")
        if np.any(a <= 0.0):
            raise ValueError("a-priori kernels must be strictly positive")
        for row in a:
            as_distribution(row, name="alpha row")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)


def zero_energy_model(alphas) -> ModelSpec:
    """Non-interacting model (F identically zero) over the given kernels."""
    alphas = np.asarray(alphas, dtype=float)
    qp, q = alphas.shape
    return ModelSpec(
        spin_size=q,
        field_size=qp,
        energy=lambda nu: np.zeros(np.asarray(nu).shape[:-1]),
        energy_grad=lambda nu: np.zeros_like(np.asarray(nu, dtype=float)),
        alphas=alphas,
        name="zero",
    )


def check_gradient(model: ModelSpec, seed: int = 0, points: int = 100, step: float = 1e-5) -> float:
    """Max deviation between energy_grad and central differences of energy.

    Sampled at random interior simplex points along tangent directions;
    models are expected to stay below 1e-6.
    """
    rng = np.random.default_rng(seed)
    basis = tangent_basis(model.spin_size)
    worst = 0.0
    for _ in range(points):
        nu = rng.dirichlet(np.full(model.spin_size, 5.0))
        grad = np.asarray(model.energy_grad(nu), dtype=float)
        for direction in basis:
            fd = (model.energy(nu + step * direction) - model.energy(nu - step * direction)) / (
                2.0 * step
            )
            worst = max(worst, abs(float(fd) - float(grad @ direction)))
    return worst


def rel_entropy(p, q) -> float:
    """Relative entropy sum_a p(a) log(p(a)/q(a)) with 0 log 0 = 0.

    Raises SupportViolation when p charges a null atom of q.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    terms = rel_entr(p, q)
    if np.any(np.isinf(terms)):
        raise SupportViolation("p charges a null atom of q")
    return float(terms.sum())


def free_energy(model: ModelSpec, pi_hat: np.ndarray, profile: np.ndarray) -> float:
    """phi[pi_hat](profile) for a (q', q) type profile."""
    pi_hat = np.asarray(pi_hat, dtype=float)
    profile = np.asarray(profile, dtype=float)
    total = pi_hat @ profile
    entropy = sum(
        pi_hat[b] * rel_entropy(profile[b], model.alphas[b]) for b in range(model.field_size)
    )
    return float(model.energy(total)) + entropy


def gamma_profile(model: ModelSpec, nu: np.ndarray) -> np.ndarray:
    """Tilted single-site kernels gamma[b](.|nu) for all b, shape (q', q).

    gamma[b](a|nu) is proportional to exp(-dF_nu(a)) alpha[b](a); the
    normalization is computed stably in log space.
    """
    logits = np.log(model.alphas) - np.asarray(model.energy_grad(nu), dtype=float)[None, :]
    logits = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def gamma_kernel(model: ModelSpec, b: int, nu: np.ndarray) -> np.ndarray:
    """Single kernel gamma[b](.|nu)."""
    return gamma_profile(model, nu)[b]


def self_consistent_map(model: ModelSpec, pi: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """One step of the mean-field iteration on total measures.

    Maps nu to sum_b pi(b) gamma[b](.|nu); fixed points are the critical
    totals of the free energy, and for concave F the free energy of the
    lifted profile decreases along iterates.
    """
    return np.asarray(pi, dtype=float) @ gamma_profile(model, nu)


@dataclass(frozen=True)
class MinimizerRecord:
    """A converged critical profile with its diagnostics.

    ``boundary`` marks profiles with entries below 1e-8, for which the
    Hessian verdict and stability vector are not computed.
    """

    profile: np.ndarray
    total: np.ndarray
    value: float
    is_global: bool
    boundary: bool
    hessian_pd: bool | None
    hessian_min_eig: float | None
    stability: np.ndarray | None


def _iterate_to_fixed_point(model, pi, nu, fp_tol, max_iter):
    damped = False
    prev_delta = np.inf
    for _ in range(max_iter):
        nxt = self_consistent_map(model, pi, nu)
        delta = np.max(np.abs(nxt - nu))
        if delta < fp_tol:
            return nxt
        if delta > prev_delta * (1.0 + 1e-12):
            damped = True
        prev_delta = delta
        nu = 0.5 * (nu + nxt) if damped else nxt
    raise NonConvergence("fixed-point iteration did not converge")


def find_minimizers(
    model: ModelSpec,
    pi: np.ndarray,
    grid_resolution: int = 11,
    tol: float = 1e-9,
    fp_tol: float = 1e-12,
    max_iter: int = 50_000,
    dedup_tol: float = 1e-6,
) -> list[MinimizerRecord]:
    """Enumerate critical profiles by multistart fixed-point iteration.

    Starts on a simplex grid of ``grid_resolution`` points per edge (on
    total measures; profiles are recovered through the tilted kernels).
    Converged totals are deduplicated at l-infinity distance ``dedup_tol``;
    records within ``tol`` of the smallest free energy are flagged global.
    Starts that fail to converge are dropped with a counter; EmptyResult is
    raised if none converge.  Results are sorted by free energy, then
    lexicographically by total measure.
    """
    pi = np.asarray(pi, dtype=float)
    totals: list[np.ndarray] = []
    failures = 0
    for start in simplex_grid(model.spin_size, grid_resolution):
        try:
            fixed = _iterate_to_fixed_point(model, pi, start, fp_tol, max_iter)
        except NonConvergence:
            failures += 1
            continue
        if not any(np.max(np.abs(fixed - t)) <= dedup_tol for t in totals):
            totals.append(fixed)
    if failures:
        logger.info("find_minimizers: %d starts did not converge", failures)
    if not totals:
        raise EmptyResult("no fixed-point start converged")

    draft = []
    for total in totals:
        profile = gamma_profile(model, total)
        value = free_energy(model, pi, profile)
        draft.append((value, tuple(total), profile, total))
    draft.sort(key=lambda rec: (rec[0], rec[1]))
    best = draft[0][0]

    records = []
    for value, _, profile, total in draft:
        boundary = bool(profile.min() < BOUNDARY_EPS)
        hess_pd = min_eig = stability = None
        if not boundary:
            hess_pd, min_eig = hessian_pd(model, pi, profile)
            stability = stability_vector(model, pi, profile)
        records.append(
            MinimizerRecord(
                profile=profile,
                total=total,
                value=value,
                is_global=bool(value <= best + tol),
                boundary=boundary,
                hessian_pd=hess_pd,
                hessian_min_eig=min_eig,
                stability=stability,
            )
        )
    return records


def hessian_pd(
    model: ModelSpec, pi: np.ndarray, profile: np.ndarray, tol: float = 1e-8
) -> tuple[bool, float]:
    """Positive-definiteness of the free-energy Hessian at a profile.

    The Hessian is taken in orthonormal tangent coordinates of the product
    of spin simplices by central differences with one Richardson
    refinement.  Returns (verdict, minimum eigenvalue); the verdict is
    min_eig > tol.  Raises BoundaryPoint for profiles with entries below
    1e-8, where symmetric steps would leave the simplex.
    """
    pi = np.asarray(pi, dtype=float)
    profile = np.asarray(profile, dtype=float)
    if profile.min() < BOUNDARY_EPS:
        raise BoundaryPoint("profile too close to a simplex face")
    qp, q = profile.shape
    basis = tangent_basis(q)
    dim = qp * (q - 1)

    def lift(t):
        return profile + (t.reshape(qp, q - 1) @ basis)

    def value(t):
        return free_energy(model, pi, lift(t))

    h = min(1e-4, 0.25 * profile.min())

    def hessian_at(step):
        hess = np.empty((dim, dim))
        f0 = value(np.zeros(dim))
        for i in range(dim):
            ei = np.zeros(dim)
            ei[i] = step
            fpp = value(ei)
            fmm = value(-ei)
            hess[i, i] = (fpp - 2.0 * f0 + fmm) / step**2
            for j in range(i + 1, dim):
                ej = np.zeros(dim)
                ej[j] = step
                fpq = value(ei + ej)
                fpm = value(ei - ej)
                fmp = value(-ei + ej)
                fmq = value(-ei - ej)
                hess[i, j] = hess[j, i] = (fpq - fpm - fmp + fmq) / (4.0 * step**2)
        return hess

    coarse = hessian_at(h)
    fine = hessian_at(h / 2.0)
    hess = (4.0 * fine - coarse) / 3.0
    hess = 0.5 * (hess + hess.T)
    min_eig = float(np.linalg.eigvalsh(hess).min())
    return min_eig > tol, min_eig


def stability_vector(model: ModelSpec, pi: np.ndarray, record) -> np.ndarray:
    """Negative free-energy gradient in the type frequencies, on the tangent space.

    Coordinate b before projection is
        -( <dF_nu, nu_hat(b)> + S(nu_hat(b) | alpha[b]) )
    with nu the total measure of the record; the mean is subtracted so the
    result pairs with zero-sum frequency fluctuations.
    """
    pi = np.asarray(pi, dtype=float)
    profile = np.asarray(getattr(record, "profile", record), dtype=float)
    total = record.total if hasattr(record, "total") else pi @ profile
    grad = np.asarray(model.energy_grad(total), dtype=float)
    g = np.array(
        [
            float(profile[b] @ grad) + rel_entropy(profile[b], model.alphas[b])
            for b in range(model.field_size)
        ]
    )
    return project_tangent(-g)


def check_condition2(records) -> tuple[bool, float]:
    """Pairwise distinctness of stability vectors among global minimizers.

    Returns (ok, min pairwise distance); ok requires every pairwise
    Euclidean distance to exceed 1e-8.  Vacuously true for a single record.
    """
    vecs = [r.stability for r in records if getattr(r, "is_global", True)]
    vecs = [v for v in vecs if v is not None]
    if len(vecs) < 2:
        return True, float("inf")
    dmin = min(
        float(np.linalg.norm(vecs[i] - vecs[j]))
        for i in range(len(vecs))
        for j in range(i + 1, len(vecs))
    )
    return dmin > 1e-8, dmin
