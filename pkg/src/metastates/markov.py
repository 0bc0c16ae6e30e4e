"""Finite-state ergodic Markov chains.

Stationary laws, seeded path sampling, occupation statistics, and the
occupation-time covariance of the standardized frequency vector
sqrt(n) * (pi_hat_n - pi), both at finite volume n and in the n -> infinity
limit.  State spaces are indexed 0..q'-1 internally; string labels are kept
only for I/O.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EigenFailure, NonConvergence, NotErgodic, NotStochastic, SolverFailure
from .geometry import tangent_basis

ROW_SUM_TOL = 1e-12
SYMMETRY_TOL = 1e-10
ROW_ZERO_TOL = 1e-9
PSD_SLACK = 1e-9


def validate_chain(matrix) -> int:
    """Certify ergodicity; return the smallest r with (M^r)_{ij} > 0 for all i, j.

    Positivity of powers is tracked with boolean reachability rather than
    floating-point products, so tiny transition probabilities cannot
    underflow into a false negative.  The search stops at the Wielandt bound
    (q-1)^2 + 1.

    Raises NotStochastic for bad rows and NotErgodic when no power up to the
    bound is positive.
    """
    m = np.asarray(getattr(matrix, "rows", matrix), dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotStochastic("transition matrix must be square")
    q = m.shape[0]
    if np.any(m < 0.0) or np.any(m > 1.0 + ROW_SUM_TOL):
        raise NotStochastic("entries must lie in [0, 1]")
    bad = np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        raise NotStochastic(f"rows {np.flatnonzero(bad).tolist()} do not sum to 1")
    adj = (m > 0.0).astype(np.uint8)
    power = adj.copy()
    bound = (q - 1) ** 2 + 1
    r = 1
    while not power.all():
        if r >= bound:
            raise NotErgodic(f"no positive power up to the Wielandt bound {bound}")
        power = ((power @ adj) > 0).astype(np.uint8)
        r += 1
    return r


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix on the disorder alphabet, certified ergodic.

    ``positivity_power`` is the ergodicity certificate: the smallest r with
    M^r entrywise positive.  Construct through :meth:`from_rows`.
    """

    rows: np.ndarray
    states: tuple[str, ...]
    positivity_power: int

    @classmethod
    def from_rows(cls, rows, states=None) -> "TransitionMatrix":
        m = np.array(rows, dtype=float)
        r = validate_chain(m)
        if states is None:
            states = tuple(str(i + 1) for i in range(m.shape[0]))
        elif len(states) != m.shape[0]:
            raise NotStochastic("state label count does not match matrix size")
        m.setflags(write=False)
        return cls(rows=m, states=tuple(states), positivity_power=r)

    @property
    def size(self) -> int:
        return self.rows.shape[0]


def degenerate_chain(p: float) -> TransitionMatrix:
    """Three-state doubly stochastic chain with one deterministic transition.

    Rows: state 0 always moves to state 1; states 1 and 2 move to 0 with
    probability p resp. 1-p, never to 1.  Requires 0 < p < 1.
    """
    if not 0.0 < p < 1.0:
        raise NotStochastic("degenerate chain parameter must lie in (0, 1)")
    rows = [[0.0, 1.0, 0.0], [p, 0.0, 1.0 - p], [1.0 - p, 0.0, p]]
    return TransitionMatrix.from_rows(rows)


def iid_chain(pi) -> TransitionMatrix:
    """Chain with all rows equal to ``pi`` (independent symbols)."""
    pi = np.asarray(pi, dtype=float)
    return TransitionMatrix.from_rows(np.tile(pi, (pi.size, 1)))


def doubly_stochastic_chain(a: float, b: float, c: float, d: float) -> TransitionMatrix:
    """General 3x3 doubly stochastic chain parametrized by its upper-left block."""
    rows = [
        [a, b, 1.0 - a - b],
        [c, d, 1.0 - c - d],
        [1.0 - a - c, 1.0 - b - d, -1.0 + a + b + c + d],
    ]
    return TransitionMatrix.from_rows(rows)


def load_transition_matrix(source) -> TransitionMatrix:
    """Read a matrix from JSON: {"states": [...], "rows": [[...], ...]}."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            record = json.load(fh)
    else:
        record = source
    return TransitionMatrix.from_rows(record["rows"], states=record.get("states"))


def matrix_record(matrix: TransitionMatrix) -> dict:
    """JSON-serializable round-trip record."""
    return {"states": list(matrix.states), "rows": matrix.rows.tolist()}


def stationary(matrix: TransitionMatrix) -> np.ndarray:
    """Unique stationary distribution pi with pi^t M = pi^t.

    Solves the singular system with the normalization row appended; the
    residual must meet 1e-12 in the max norm or SolverFailure is raised.
    """
    m = np.asarray(getattr(matrix, "rows", matrix), dtype=float)
    q = m.shape[0]
    a = np.vstack([m.T - np.eye(q), np.ones(q)])
    rhs = np.zeros(q + 1)
    rhs[-1] = 1.0
    try:
        pi, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - lstsq rarely raises
        raise SolverFailure(str(exc)) from exc
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = np.max(np.abs(pi @ m - pi))
    if residual > ROW_SUM_TOL:
        raise SolverFailure(f"stationary residual {residual:.3e} exceeds 1e-12")
    pi.setflags(write=False)
    return pi


@dataclass(frozen=True)
class ChainPath:
    """A sampled trajectory, reproducible from (matrix, start, n, seed)."""

    states: np.ndarray
    start: int | str
    seed: int

    @property
    def n(self) -> int:
        return self.states.size


def sample_path(matrix: TransitionMatrix, start, n: int, seed: int) -> ChainPath:
    """Sample one path of length n.

    ``start`` is a 0-based state index or "stationary", in which case the
    first symbol is drawn from the invariant distribution.  The result is a
    pure function of (matrix, start, n, seed).
    """
    if n < 1:
        raise ValueError("path length must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = matrix.rows
    q = rows.shape[0]
    cum = np.cumsum(rows, axis=1)
    states = np.empty(n, dtype=np.int64)
    if start == "stationary":
        pi = stationary(matrix)
        states[0] = min(int(np.searchsorted(np.cumsum(pi), rng.random(), side="right")), q - 1)
    else:
        states[0] = int(start)
        if not 0 <= states[0] < q:
            raise ValueError("start state out of range")
    u = rng.random(n - 1)
    for i in range(1, n):
        states[i] = min(int(np.searchsorted(cum[states[i - 1]], u[i - 1], side="right")), q - 1)
    states.setflags(write=False)
    return ChainPath(states=states, start=start, seed=seed)


def sample_occupation_batch(
    matrix: TransitionMatrix, start, n: int, replicas: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Occupation counts and final states for many independent paths.

    Vectorized over replicas so the paths themselves are never stored.
    Returns (counts, finals) with counts of shape (replicas, q').  The
    result is a pure function of (matrix, start, n, replicas, seed).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = matrix.rows
    q = rows.shape[0]
    cum = np.cumsum(rows, axis=1)
    if start == "stationary":
        pi_cum = np.cumsum(stationary(matrix))
        s = np.minimum(np.searchsorted(pi_cum, rng.random(replicas), side="right"), q - 1)
    else:
        s = np.full(replicas, int(start), dtype=np.int64)
    counts = np.zeros((replicas, q), dtype=np.int64)
    idx = np.arange(replicas)
    counts[idx, s] += 1
    for _ in range(n - 1):
        u = rng.random(replicas)
        s = np.minimum((cum[s] <= u[:, None]).sum(axis=1), q - 1)
        counts[idx, s] += 1
    return counts, s


@dataclass(frozen=True)
class OccupationStats:
    """Counts, frequencies, and the standardized fluctuation of one path."""

    counts: np.ndarray
    frequencies: np.ndarray
    fluctuation: np.ndarray


def occupation(path: ChainPath, pi: np.ndarray) -> OccupationStats:
    """Exact occupation statistics of a path relative to equilibrium ``pi``."""
    pi = np.asarray(pi, dtype=float)
    counts = np.bincount(path.states, minlength=pi.size)
    n = path.n
    freq = counts / n
    fluct = np.sqrt(n) * (freq - pi)
    return OccupationStats(counts=counts, frequencies=freq, fluctuation=fluct)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Occupation-time covariance on the tangent space.

    ``kind`` is "finite" (with the volume ``n``) or "limit".  Rows sum to
    zero because frequencies sum to one; the matrix is positive
    semidefinite on zero-sum vectors.
    """

    matrix: np.ndarray
    kind: str
    n: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
            raise SolverFailure("covariance not symmetric within 1e-10")
        if np.max(np.abs(m.sum(axis=1))) > ROW_ZERO_TOL:
            raise SolverFailure("covariance rows do not sum to 0 within 1e-9")
        v = tangent_basis(m.shape[0])
        w = np.linalg.eigvalsh(v @ m @ v.T)
        if w.min() < -PSD_SLACK:
            raise SolverFailure(f"covariance not PSD on tangent space (min {w.min():.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def covariance_finite(matrix: TransitionMatrix, pi: np.ndarray, n: int) -> CovarianceMatrix:
    """Exact covariance of sqrt(n) * (pi_hat_n - pi) at volume n.

    Entry (i, j) is
        pi(i) 1{i=j} - pi(i) pi(j)
        + pi(i)/n * sum_{r=1}^{n-1} (n-r) [M^r(i,j) - pi(j)]
        + pi(j)/n * sum_{r=1}^{n-1} (n-r) [M^r(j,i) - pi(i)],
    accumulated through iterated matrix powers.  Terms are dropped once the
    deviation M^r - 1 pi^t underflows below any double-precision
    contribution of the remaining sum (the deviation norm is nonincreasing
    in r, so the tail is rigorously negligible).
    """
    if n < 1:
        raise ValueError("volume must be >= 1")
    m = matrix.rows
    pi = np.asarray(pi, dtype=float)
    base = np.diag(pi) - np.outer(pi, pi)
    s = np.zeros_like(base)
    dev = m - pi[None, :]
    for r in range(1, n):
        s += ((n - r) / n) * dev
        if n * np.max(np.abs(dev)) < 1e-18:
            break
        dev = dev @ m
    cov = base + pi[:, None] * s + (pi[:, None] * s).T
    cov = 0.5 * (cov + cov.T)
    return CovarianceMatrix(matrix=cov, kind="finite", n=n)


def _series_deviation_sum(m: np.ndarray, pi: np.ndarray, tol: float, max_terms: int) -> np.ndarray:
    """sum_{r>=1} (M^r - 1 pi^t), truncated via the observed geometric decay.

    The tail after R terms is bounded by C mu^(R+1) / (1 - mu) with mu the
    subdominant eigenvalue modulus and C refitted on a sliding window of
    observed deviation norms (a priori constants are loose when mu has
    multiplicity > 1).  All bookkeeping is done in logs to survive underflow.
    """
    mu = spectral_info(m).modulus
    growth = min(max(mu, 1e-3), 1.0 - 1e-12)
    log_growth = np.log(growth)
    log_tol = np.log(tol)
    dev = m - pi[None, :]
    s = np.zeros_like(dev)
    probe, norms = 64, []
    r = 0
    while True:
        r += 1
        if r > max_terms:
            raise NonConvergence(f"series exceeded {max_terms} terms")
        s += dev
        norm = np.max(np.abs(dev))
        if norm == 0.0:
            break
        norms.append((r, norm))
        if r >= probe:
            log_c = max(np.log(nm) - k * log_growth for k, nm in norms[-probe:])
            log_tail = log_c + (r + 1) * log_growth - np.log1p(-growth)
            if log_tail <= log_tol:
                break
        dev = dev @ m
    return s


def covariance_limit(
    matrix: TransitionMatrix,
    pi: np.ndarray,
    method: str = "fundamental-matrix",
    tol: float = 1e-12,
    max_terms: int = 1_000_000,
) -> CovarianceMatrix:
    """Limiting occupation-time covariance Sigma_M.

    ``method`` selects the power-series summation of M^r - 1 pi^t or the
    fundamental matrix Z = (I - M + 1 pi^t)^{-1} with
        Sigma(i,j) = pi(i) Z(i,j) + pi(j) Z(j,i) - pi(i) 1{i=j} - pi(i) pi(j).
    Both routes are always computed and must agree within 10*tol.
    """
    if method not in ("series", "fundamental-matrix"):
        raise ValueError(f"unknown method {method!r}")
    m = matrix.rows
    pi = np.asarray(pi, dtype=float)
    q = m.shape[0]

    s = _series_deviation_sum(m, pi, tol, max_terms)
    cov_series = np.diag(pi) - np.outer(pi, pi) + pi[:, None] * s + (pi[:, None] * s).T

    try:
        z = np.linalg.inv(np.eye(q) - m + np.outer(np.ones(q), pi))
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"fundamental matrix is singular: {exc}") from exc
    piz = pi[:, None] * z
    cov_fund = piz + piz.T - np.diag(pi) - np.outer(pi, pi)

    gap = np.max(np.abs(cov_series - cov_fund))
    if gap > 10.0 * tol:
        raise NonConvergence(f"series and fundamental-matrix covariances differ by {gap:.3e}")
    cov = cov_series if method == "series" else cov_fund
    cov = 0.5 * (cov + cov.T)
    return CovarianceMatrix(matrix=cov, kind="limit")


def tangent_rank(cov: CovarianceMatrix, tol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Rank of the covariance restricted to zero-sum vectors.

    Returns (rank, null_directions); null directions are orthonormal rows
    spanning the kernel within the tangent space.
    """
    m = np.asarray(getattr(cov, "matrix", cov), dtype=float)
    v = tangent_basis(m.shape[0])
    w, e = np.linalg.eigh(v @ m @ v.T)
    rank = int(np.sum(w > tol))
    null = (v.T @ e[:, w <= tol]).T
    return rank, null


@dataclass(frozen=True)
class SpectralInfo:
    """Second-largest eigenvalue modulus and its algebraic multiplicity."""

    modulus: float
    multiplicity: int


def spectral_info(matrix) -> SpectralInfo:
    """Spectral gap data: modulus of the subdominant eigenvalue of M.

    Complex eigenvalues are reported by modulus only.  For an ergodic chain
    the modulus is < 1.
    """
    m = np.asarray(getattr(matrix, "rows", matrix), dtype=float)
    try:
        eig = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    mods = np.abs(eig)
    lead = int(np.argmin(np.abs(eig - 1.0)))
    rest = np.delete(mods, lead)
    if rest.size == 0:
        return SpectralInfo(modulus=0.0, multiplicity=0)
    mu = float(rest.max())
    mult = int(np.sum(np.abs(rest - mu) <= 1e-9 * max(1.0, mu)))
    return SpectralInfo(modulus=mu, multiplicity=mult)
