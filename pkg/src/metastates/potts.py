"""Mean-field Potts model in a local random field: closed forms.

The model has q spin states, quadratic energy density
F(nu) = -(beta/2) sum_a nu(a)^2, and field kernels
alpha[b](a) = exp(B 1{a=b}) / (exp(B) + q - 1) on a matching field
alphabet.  With equidistributed field frequencies the critical totals are
parametrized by a scalar order parameter u in [0, 1],

    nu_{j,u}(j) = (1 + (q-1) u) / q,    nu_{j,u}(i) = (1 - u) / q  (i != j),

and u solves a one-dimensional consistency equation.  This module solves
that equation, evaluates the reduced free energy, locates the
order/disorder coexistence curve in (beta, B), and provides the closed-form
stability vectors and the state-1 bias p(beta, B) used by the
degenerate-chain metastate.

Exponentials are arranged so arguments are never positive, keeping beta
scans overflow-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoBracket
from .meanfield import ModelSpec, gamma_profile

ROOT_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class PottsParams:
    """Inverse temperature, field strength, and number of states."""

    beta: float
    field: float
    q: int = 3

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ValueError("q must be an integer >= 2")
        if not (np.isfinite(self.beta) and np.isfinite(self.field)):
            raise ValueError("beta and field must be finite")
        if self.beta < 0 or self.field < 0:
            raise ValueError("beta and field must be nonnegative")


def potts_model(params: PottsParams) -> ModelSpec:
    """ModelSpec for the quadratic Potts energy with delta-coupled fields."""
    beta, b_field, q = params.beta, params.field, int(params.q)
    alphas = np.full((q, q), 1.0, dtype=float)
    alphas[np.arange(q), np.arange(q)] = np.exp(b_field)
    alphas /= np.exp(b_field) + q - 1
    return ModelSpec(
        spin_size=q,
        field_size=q,
        energy=lambda nu: -0.5 * beta * np.sum(np.square(np.asarray(nu, dtype=float)), axis=-1),
        energy_grad=lambda nu: -beta * np.asarray(nu, dtype=float),
        alphas=alphas,
        name="potts-quadratic",
        params={"beta": beta, "field": b_field, "q": q},
    )


def ordered_total(params: PottsParams, u: float, j: int = 0) -> np.ndarray:
    """Total spin measure nu_{j,u} ordered in direction j."""
    q = params.q
    nu = np.full(q, (1.0 - u) / q)
    nu[j] = (1.0 + (q - 1) * u) / q
    return nu


def lifted_profile(params: PottsParams, u: float, j: int = 0) -> np.ndarray:
    """Type profile obtained by tilting the kernels at nu_{j,u}."""
    return gamma_profile(potts_model(params), ordered_total(params, u, j))


def mfe_residual(params: PottsParams, u) -> np.ndarray | float:
    """Residual of the scalar consistency equation at u (vectorized).

    Zero residual means u reproduces itself under the mean-field map along
    the ordered direction.  u = 0 is a root for every (beta, B, q).
    """
    u = np.asarray(u, dtype=float)
    beta, b_field, q = params.beta, params.field, params.q
    bu = beta * u
    # First term e^{bu} / (e^{bu} + e^B + q-2), written with non-positive exponents.
    t1 = 1.0 / (1.0 + np.exp(b_field - bu) + (q - 2) * np.exp(-bu))
    # Second term 1 / (e^{bu+B} + q-1).
    e = np.exp(-(bu + b_field))
    t2 = e / (1.0 + (q - 1) * e)
    out = u - (t1 - t2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class OrderParameter:
    """An accepted root of the consistency equation."""

    u: float
    residual: float

    def __post_init__(self):
        if abs(self.residual) > ROOT_RESIDUAL_TOL:
            raise ValueError(f"residual {self.residual:.3e} exceeds {ROOT_RESIDUAL_TOL}")


def solve_order_parameters(params: PottsParams, step: float = 1e-4) -> list[OrderParameter]:
    """All roots of the consistency equation in [0, 1], sorted ascending.

    Roots are located by a sign-change scan with the given step and
    refined by bisection to ~1e-12; grid points with vanishing residual
    (in particular u = 0) are kept directly.
    """
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    res = mfe_residual(params, grid)
    roots: list[float] = []
    for u0, r0 in zip(grid, res):
        if abs(r0) < 1e-14:
            roots.append(float(u0))
    sign_change = np.flatnonzero((res[:-1] * res[1:]) < 0.0)
    for i in sign_change:
        lo, hi = float(grid[i]), float(grid[i + 1])
        flo = float(res[i])
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fmid = float(mfe_residual(params, mid))
            if fmid == 0.0 or hi - lo < 1e-15:
                lo = hi = mid
                break
            if (flo < 0) == (fmid < 0):
                lo, flo = mid, fmid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    roots.sort()
    unique: list[float] = []
    for u in roots:
        if not unique or u - unique[-1] > 1e-9:
            unique.append(u)
    return [OrderParameter(u=u, residual=float(mfe_residual(params, u))) for u in unique]


def _lse(*args) -> float:
    out = args[0]
    for a in args[1:]:
        out = np.logaddexp(out, a)
    return out


def potts_free_energy_u(params: PottsParams, u) -> np.ndarray | float:
    """Reduced free energy along the ordered direction, as a function of u.

    Normalized so the value at u = 0 is exactly zero; its stationary points
    in u are the roots of the consistency equation.
    """
    u = np.asarray(u, dtype=float)
    beta, b_field, q = params.beta, params.field, params.q
    bu = beta * u
    log_qm1 = np.log(q - 1)
    log_c = _lse(np.full_like(u, b_field), np.full_like(u, log_qm1))
    if q > 2:
        log_d0 = _lse(bu, np.full_like(u, b_field), np.full_like(u, np.log(q - 2.0)))
    else:
        log_d0 = _lse(bu, np.full_like(u, b_field))
    log_d1 = _lse(bu + b_field, np.full_like(u, log_qm1))
    out = (
        (log_c - log_d0)
        + beta * (q - 1) * u**2 / (2.0 * q)
        + beta * u / q
        - (log_d1 - log_d0) / q
    )
    return out if out.ndim else float(out)


def global_order_parameter(params: PottsParams, tol: float = 1e-9) -> OrderParameter | None:
    """The largest root that attains the minimal reduced free energy.

    Returns None when the symmetric root u = 0 is the strict global
    minimum, i.e. when no ordered branch is globally stable within tol.
    """
    roots = solve_order_parameters(params)
    values = np.array([potts_free_energy_u(params, r.u) for r in roots])
    best = float(values.min())
    candidates = [r for r, v in zip(roots, values) if v <= best + tol and r.u > 1e-7]
    if not candidates:
        return None
    return candidates[-1]


@dataclass(frozen=True)
class CoexistencePoint:
    """A point on the order/disorder coexistence curve."""

    beta: float
    field: float
    u: float
    gap: float


def coexistence(beta: float, q: int, field_window: tuple[float, float], tol: float = 1e-12
                ) -> CoexistencePoint:
    """Field strength B*(beta) with equal-depth ordered and symmetric minima.

    Bisection on the free-energy gap phi(u*) - phi(0), with u* the deepest
    nonzero root; the window must bracket a sign change or NoBracket is
    raised.
    """

    def gap(b_field: float) -> float:
        params = PottsParams(beta=beta, field=b_field, q=q)
        roots = [r for r in solve_order_parameters(params) if r.u > 1e-7]
        if not roots:
            return float("inf")
        return float(min(potts_free_energy_u(params, r.u) for r in roots))

    lo, hi = field_window
    glo, ghi = gap(lo), gap(hi)
    if not (glo < 0 < ghi or ghi < 0 < glo):
        raise NoBracket(f"gap has signs ({glo:+.3e}, {ghi:+.3e}) on the window")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gmid = gap(mid)
        if abs(gmid) <= tol or hi - lo < 1e-15:
            break
        if (gmid < 0) == (glo < 0):
            lo, glo = mid, gmid
        else:
            hi = mid
    params = PottsParams(beta=beta, field=mid, q=q)
    u_star = max(r.u for r in solve_order_parameters(params) if r.u > 1e-7)
    return CoexistencePoint(beta=beta, field=mid, u=u_star, gap=gmid)


def stability_vector_closed(params: PottsParams, u: float, j: int) -> np.ndarray:
    """Closed-form stability vector of the state ordered in direction j.

    Coordinate j is (q-1)/q * L and the others -L/q with
    L = log[(e^{beta u + B} + q - 1) / (e^{beta u} + e^B + q - 2)].
    """
    beta, b_field, q = params.beta, params.field, params.q
    bu = beta * u
    if q > 2:
        log_d0 = _lse(bu, b_field, np.log(q - 2.0))
    else:
        log_d0 = _lse(bu, b_field)
    log_d1 = _lse(bu + b_field, np.log(q - 1.0))
    level = float(log_d1 - log_d0)
    vec = np.full(q, -level / q)
    vec[j] = (q - 1) * level / q
    return vec


def p1(params: PottsParams, u: float) -> float:
    """Partition-ratio bias p1 = (2 + e^{beta u + B}) / (e^B + e^{beta u} + 1).

    Defined for q = 3.  Always >= 1, with equality iff u = 0 (for B > 0);
    it is the limiting Gibbs-mass ratio between the two nearly degenerate
    ordered states on a path carrying one extra 1-type field.
    """
    if params.q != 3:
        raise ValueError("the bias p1 is defined for q = 3")
    bu = params.beta * u
    b_field = params.field
    # Divide through by e^{bu + B} so every exponent is non-positive.
    num = 2.0 * np.exp(-(bu + b_field)) + 1.0
    den = np.exp(-bu) + np.exp(-b_field) + np.exp(-(bu + b_field))
    val = float(num / den)
    if val < 1.0 - 1e-12:
        raise ValueError(f"p1 = {val} < 1; inputs outside the valid regime")
    return val


def p_of(params: PottsParams, u: float) -> float:
    """Mixture coefficient p = p1 / (1 + p1) in [1/2, 1)."""
    r = p1(params, u)
    return r / (1.0 + r)


def phase_scan(betas, fields, q: int = 3) -> list[dict]:
    """Root structure, free energies, and bias across a (beta, B) grid."""
    rows = []
    for beta in betas:
        for b_field in fields:
            params = PottsParams(beta=float(beta), field=float(b_field), q=q)
            roots = solve_order_parameters(params)
            values = [float(potts_free_energy_u(params, r.u)) for r in roots]
            star = global_order_parameter(params)
            row = {
                "beta": float(beta),
                "field": float(b_field),
                "roots": [r.u for r in roots],
                "free_energies": values,
                "u_star": star.u if star is not None else 0.0,
            }
            if q == 3:
                row["p"] = p_of(params, star.u) if star is not None else 0.5
            rows.append(row)
    return rows
