"""Exact finite-volume Gibbs computations for a frozen disorder string.

The Boltzmann weight of a spin configuration depends on it only through the
vector K of total spin counts, so the law of K is computed exactly by a
dynamic program: one site at a time, the log-law of the running count
vector under the a-priori product measure is convolved with the site's
kernel, and the result is tilted by exp(-n F(K/n)) and normalized.  All
accumulation is in log space because the tilt spans hundreds of orders of
magnitude.

Count vectors K with sum(K) = n are stored on a dense grid over their
first q-1 coordinates; the last coordinate is implied.  For q = 3 the DP
costs O(n^3) time and O(n^2) memory, which keeps n of a few hundred exact.

Neighborhoods of minimizer totals use the l1 norm: exact summation over
lattice points is then trivial and the minimizers are well separated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import VolumeTooLarge, ZeroMass
from .meanfield import ModelSpec

DEFAULT_CAP = 400
LOG_ZERO_MASS = np.log(1e-300)


@dataclass(frozen=True)
class DisorderString:
    """A frozen string of field symbols (0-based indices)."""

    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.int64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("disorder string must be a nonempty 1-d sequence")
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    @property
    def n(self) -> int:
        return self.symbols.size

    def counts(self, field_size: int) -> np.ndarray:
        return np.bincount(self.symbols, minlength=field_size)


@dataclass(frozen=True)
class NeighborhoodSpec:
    """An l1 ball around a target total spin measure."""

    center: np.ndarray
    epsilon: float


def _symbols(eta) -> np.ndarray:
    return np.asarray(getattr(eta, "symbols", eta), dtype=np.int64)


def _log_count_law(model: ModelSpec, type_counts, n: int) -> np.ndarray:
    """Log-law of the count vector under the a-priori product measure.

    Grid axes are counts of spins 0..q-2; sites of equal field type are
    interchangeable so only the type counts matter.
    """
    q = model.spin_size
    shape = (n + 1,) * (q - 1)
    lp = np.full(shape, -np.inf)
    lp[(0,) * (q - 1)] = 0.0
    log_alpha = np.log(model.alphas)
    for b, n_b in enumerate(type_counts):
        la = log_alpha[b]
        for _ in range(int(n_b)):
            acc = lp + la[q - 1]
            for axis in range(q - 1):
                hi = [slice(None)] * (q - 1)
                lo = [slice(None)] * (q - 1)
                hi[axis] = slice(1, None)
                lo[axis] = slice(0, -1)
                hi, lo = tuple(hi), tuple(lo)
                np.logaddexp(acc[hi], lp[lo] + la[axis], out=acc[hi])
            lp = acc
    return lp


def _count_grid(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Count vectors on the DP grid: (K array of shape grid+(q,), validity mask)."""
    axes = np.indices((n + 1,) * (q - 1))
    last = n - axes.sum(axis=0)
    k = np.concatenate([np.moveaxis(axes, 0, -1), last[..., None]], axis=-1)
    return k.astype(float), last >= 0


@dataclass(frozen=True)
class CountDistribution:
    """Exact law of the total spin-count vector for one disorder string."""

    n: int
    spin_size: int
    log_probs: np.ndarray
    log_z: float

    def l1_from(self, center) -> np.ndarray:
        """Grid of l1 distances between K/n and the given center."""
        k, _ = _count_grid(self.n, self.spin_size)
        return np.abs(k / self.n - np.asarray(center, dtype=float)).sum(axis=-1)

    @property
    def valid(self) -> np.ndarray:
        return _count_grid(self.n, self.spin_size)[1]

    def total_mass(self) -> float:
        return float(np.exp(logsumexp(self.log_probs[self.valid])))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Count vectors carrying positive probability, with the probabilities."""
        k, valid = _count_grid(self.n, self.spin_size)
        mask = valid & (self.log_probs > -np.inf)
        return k[mask].astype(np.int64), np.exp(self.log_probs[mask])


def count_distribution(model: ModelSpec, eta, cap: int = DEFAULT_CAP) -> CountDistribution:
    """Exact distribution of the total count vector under the Gibbs measure.

    ``eta`` is a DisorderString or a plain index sequence; ``cap`` bounds
    the exactly solvable volume (VolumeTooLarge beyond it).
    """
    symbols = _symbols(eta)
    n = symbols.size
    if n > cap:
        raise VolumeTooLarge(f"n = {n} exceeds the exact-DP cap {cap}")
    counts = np.bincount(symbols, minlength=model.field_size)
    if counts.size > model.field_size:
        raise ValueError("disorder symbol out of range")
    lw = _log_count_law(model, counts, n)
    k, valid = _count_grid(n, model.spin_size)
    logits = np.full_like(lw, -np.inf)
    logits[valid] = lw[valid] - n * np.asarray(model.energy(k[valid] / n), dtype=float)
    log_z = float(logsumexp(logits[valid]))
    log_probs = logits - log_z
    log_probs.setflags(write=False)
    return CountDistribution(n=n, spin_size=model.spin_size, log_probs=log_probs, log_z=log_z)


def neighborhood_mass(dist: CountDistribution, spec: NeighborhoodSpec) -> float:
    """Probability of the l1 ball {K : |K/n - center|_1 <= epsilon}."""
    mask = dist.valid & (dist.l1_from(spec.center) <= spec.epsilon + 1e-12)
    if not mask.any():
        return 0.0
    return float(np.exp(logsumexp(dist.log_probs[mask])))


def _log_mass(dist: CountDistribution, center, epsilon: float) -> float:
    mask = dist.valid & (dist.l1_from(center) <= epsilon + 1e-12)
    if not mask.any():
        return -np.inf
    return float(logsumexp(dist.log_probs[mask]))


def gibbs_ratio(model: ModelSpec, eta, center1, center2, epsilon: float,
                cap: int = DEFAULT_CAP) -> float:
    """Ratio of neighborhood masses around two centers for the same string.

    Raises ZeroMass when the denominator neighborhood carries less than
    1e-300 of the mass.
    """
    dist = count_distribution(model, eta, cap=cap)
    log_num = _log_mass(dist, center1, epsilon)
    log_den = _log_mass(dist, center2, epsilon)
    if log_den < LOG_ZERO_MASS:
        raise ZeroMass("denominator neighborhood has vanishing probability")
    return float(np.exp(log_num - log_den))


def site_marginals_conditional(model: ModelSpec, eta, spec: NeighborhoodSpec,
                               cap: int = DEFAULT_CAP) -> np.ndarray:
    """Conditional law of the last site's spin given the neighborhood event.

    The last site is split out of the dynamic program: the count law of the
    remaining sites is built exactly, the last site's kernel and energy
    tilt are attached for each candidate spin, and the event is evaluated
    on the shifted totals.  Returns the length-q probability vector.
    """
    symbols = _symbols(eta)
    n = symbols.size
    if n > cap:
        raise VolumeTooLarge(f"n = {n} exceeds the exact-DP cap {cap}")
    if n < 1:
        raise ValueError("need at least one site")
    q = model.spin_size
    rest = np.bincount(symbols[:-1], minlength=model.field_size)
    lw = _log_count_law(model, rest, n - 1)
    k_rest, valid_rest = _count_grid(n - 1, q)
    center = np.asarray(spec.center, dtype=float)
    log_alpha_last = np.log(model.alphas[symbols[-1]])

    log_masses = np.full(q, -np.inf)
    for a in range(q):
        shift = np.zeros(q)
        shift[a] = 1.0
        k_full = k_rest + shift
        dist_l1 = np.abs(k_full / n - center).sum(axis=-1)
        mask = valid_rest & (dist_l1 <= spec.epsilon + 1e-12)
        if not mask.any():
            continue
        tilt = -n * np.asarray(model.energy(k_full[mask] / n), dtype=float)
        log_masses[a] = logsumexp(lw[mask] + tilt) + log_alpha_last[a]
    log_total = logsumexp(log_masses)
    if log_total < LOG_ZERO_MASS:
        raise ZeroMass("conditioning event has vanishing probability")
    return np.exp(log_masses - log_total)


def site_marginal_conditional(model: ModelSpec, eta, spin: int, spec: NeighborhoodSpec,
                              cap: int = DEFAULT_CAP) -> float:
    """Conditional probability that the last site carries ``spin``."""
    return float(site_marginals_conditional(model, eta, spec, cap=cap)[spin])


def default_epsilon(totals) -> float:
    """0.4 times the minimum pairwise l1 distance between minimizer totals.

    Keeps classification neighborhoods disjoint with margin.
    """
    totals = [np.asarray(t, dtype=float) for t in totals]
    if len(totals) < 2:
        raise ValueError("need at least two minimizer totals")
    dmin = min(
        float(np.abs(totals[i] - totals[j]).sum())
        for i in range(len(totals))
        for j in range(i + 1, len(totals))
    )
    return 0.4 * dmin
