"""Convex joint estimation of a shared sparse magnitude spectrum.

For records ``y_m`` with wideband dictionaries ``D_m`` over positive bands,
the solver minimizes

    sum_m ||y_m - 2 Re(D_m beta_m)||^2
      + sum_m zeta_m ||q * (phi - alpha_m)||_1 + lam ||phi||_1

subject to ``alpha_m >= |beta_m|`` and ``phi >= 0``. Only positive bands
are materialized: the negative-band coefficients of a real series are the
conjugates of the positive ones, which is where the factor 2 in the
reconstruction comes from. Atoms are scaled to unit norm by default so
that the penalty weights act on a noise-standard-deviation scale,
independent of record length and band width.

The algorithm is a two-block ADMM on the split ``beta = z``. The
``beta`` block is a ridge-regularized least-squares solve, diagonalized
once per record by an eigendecomposition. The ``(z, alpha, phi)`` block is
solved exactly per band: for fixed ``phi`` each ``(z_mc, alpha_mc)`` pair
is a radial shrink clamped to the modulus cone ``alpha >= |z|``, and the
optimal ``phi`` is the root of a monotone piecewise-linear derivative,
found by breakpoint search.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import RecordSet
from .dictionary import BandGrid, WidebandDictionary
from .exceptions import SolverConvergenceError

logger = logging.getLogger(__name__)

PAPER_LAMBDA = 15.0
PAPER_ZETA = 10.0


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights.

    ``zeta`` is a scalar or one value per record. ``q`` is ``None`` (all
    ones), an array with one weight per band, or a callable mapping band
    centers (rad/kyr) to weights; callables let the weights follow a grid
    that changes between zoom levels.
    """

    zeta: Union[float, Sequence[float]] = PAPER_ZETA
    lam: float = PAPER_LAMBDA
    q: Union[None, Sequence[float], Callable] = None

    def resolve(self, n_records: int, grid: BandGrid):
        zeta = np.broadcast_to(np.asarray(self.zeta, dtype=float), (n_records,)).copy()
        if np.any(zeta < 0):
            raise ValueError("zeta must be non-negative")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.q is None:
            q = np.ones(grid.count)
        elif callable(self.q):
            q = np.asarray(self.q(grid.centers), dtype=float)
        else:
            q = np.asarray(self.q, dtype=float)
        if q.shape != (grid.count,):
            raise ValueError(f"q has shape {q.shape}, expected ({grid.count},)")
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("q entries must lie in [0, 1]")
        return zeta, float(self.lam), q


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    objective_rtol: float = 1e-10
    objective_window: int = 50
    feastol: float = 1e-8
    max_iter: int = 50_000
    rho: Optional[float] = None
    over_relaxation: float = 1.6
    adapt_every: int = 10
    adapt_until: int = 20_000
    normalize_atoms: str = "unit"


@dataclass(frozen=True)
class ObjectiveTerms:
    fit: float
    coupling: float
    sparsity: float
    infeasibility: float = 0.0

    @property
    def total(self):
        return self.fit + self.coupling + self.sparsity


@dataclass
class JointPoint:
    betas: np.ndarray
    alphas: np.ndarray
    phi: np.ndarray


@dataclass
class JointSolution:
    """Solver output. ``betas`` is ``(M, C)`` complex, ``alphas`` ``(M, C)``."""

    betas: np.ndarray
    alphas: np.ndarray
    phi: np.ndarray
    grid: BandGrid
    terms: ObjectiveTerms
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    rho: float
    history: list = field(default_factory=list, repr=False)

    @property
    def objective(self):
        return self.terms.total


def _atoms(dictionaries, normalize):
    if normalize in ("unit", True):
        return [d.unit_normalized() for d in dictionaries]
    if normalize == "width":
        return [d.normalized() for d in dictionaries]
    if normalize in ("none", False, None):
        return [d.matrix for d in dictionaries]
    raise ValueError(f"unknown atom normalization {normalize!r}")


def _check_inputs(records, dictionaries):
    if len(dictionaries) != len(records):
        raise ValueError("one dictionary per record required")
    grid = dictionaries[0].grid
    for r, d in zip(records, dictionaries):
        if d.grid is not grid and not (
            np.array_equal(d.grid.starts, grid.starts) and np.array_equal(d.grid.ends, grid.ends)
        ):
            raise ValueError("dictionaries must share a BandGrid")
        if d.matrix.shape != (len(r), grid.count):
            raise ValueError(f"dictionary for {r.id!r} has shape {d.matrix.shape}")
    return grid


def objective(records: RecordSet, dictionaries, penalties: PenaltyConfig, point,
              normalize_atoms="unit") -> ObjectiveTerms:
    """Evaluate the folded joint objective at ``point``.

    Infeasible envelopes (``alpha < |beta|``) are raised to ``|beta|`` before
    evaluation and the largest violation is reported as ``infeasibility``.
    """
    grid = _check_inputs(records, dictionaries)
    zeta, lam, q = penalties.resolve(len(records), grid)
    betas = np.asarray(point.betas, dtype=complex)
    alphas = np.asarray(point.alphas, dtype=float)
    phi = np.maximum(np.asarray(point.phi, dtype=float), 0.0)
    mags = np.abs(betas)
    infeas = float(max(0.0, np.max(mags - alphas)))
    alphas = np.maximum(alphas, mags)
    fit = 0.0
    for r, D, b in zip(records, _atoms(dictionaries, normalize_atoms), betas):
        res = r.values - 2 * (D @ b).real
        fit += float(res @ res)
    coupling = float(np.sum(zeta[:, None] * q[None, :] * np.abs(phi[None, :] - alphas)))
    sparsity = lam * float(np.sum(phi))
    return ObjectiveTerms(fit, coupling, sparsity, infeas)


def band_power(solution) -> np.ndarray:
    """Power per positive band, ``phi(-w)^2 + phi(w)^2 = 2 phi^2``."""
    phi = np.asarray(solution.phi, dtype=float)
    return 2 * phi**2


def _prox_shared(w, kappa, L, rho):
    """Exact prox of the coupling + sparsity block.

    Solves, independently per band c,

        min_{phi>=0, z, alpha>=|z|}  rho/2 sum_m |z_m - w_m|^2
                                     + sum_m kappa_mc |phi - alpha_m| + L phi.

    Returns ``(z, alpha, phi)``.
    """
    a = np.abs(w)  # (M, C)
    k = kappa / rho  # (M, C)
    lo = a - k
    # candidate evaluation points: 0 and all breakpoints, per band
    pts = np.concatenate([np.zeros((1, a.shape[1])), lo, a], axis=0)  # (2M+1, C)
    pts = np.sort(np.maximum(pts, 0.0), axis=0)

    def deriv(p):
        # p: (P, C); derivative of total cost w.r.t. phi at p
        pe = p[:, None, :]
        d = np.where(pe >= a[None], 0.0, np.where(pe >= lo[None], -rho * (a[None] - pe), -kappa[None]))
        return L + d.sum(axis=1)

    g = deriv(pts)  # (P, C), nondecreasing down axis 0
    nonneg = g >= 0
    first = np.argmax(nonneg, axis=0)  # first index with g >= 0 (exists: g(max a) = L >= 0)
    cols = np.arange(a.shape[1])
    p1 = pts[first, cols]
    g1 = g[first, cols]
    prev = np.maximum(first - 1, 0)
    p0 = pts[prev, cols]
    g0 = g[prev, cols]
    # g is linear on [p0, p1]; interpolate the root where it crosses zero
    denom = g1 - g0
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where((first > 0) & (denom > 0), p0 - g0 * (p1 - p0) / denom, p1)
    phi = np.where(first == 0, pts[0, cols], root)
    phi = np.maximum(phi, 0.0)

    r = np.where(a <= phi[None], a, np.maximum(phi[None], lo))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(a > 0, r / a, 0.0)
    z = w * scale
    alpha = np.maximum(np.abs(z), phi[None])
    return z, alpha, phi


class _Problem:
    """Cached per-record factorizations for the beta block."""

    def __init__(self, records, dictionaries, penalties, normalize):
        self.grid = _check_inputs(records, dictionaries)
        self.M = len(records)
        self.C = self.grid.count
        self.zeta, self.lam, self.q = penalties.resolve(self.M, self.grid)
        self.kappa = self.zeta[:, None] * self.q[None, :]
        self.L = self.lam
        self.atoms = _atoms(dictionaries, normalize)
        self.y = [r.values for r in records]
        C = self.C
        V = np.empty((self.M, 2 * C, 2 * C))
        ev = np.empty((self.M, 2 * C))
        gty = np.empty((self.M, 2 * C))
        self.G = []
        for m, (D, y) in enumerate(zip(self.atoms, self.y)):
            G = 2 * np.hstack([D.real, -D.imag])
            self.G.append(G)
            lam_, vec = np.linalg.eigh(G.T @ G)
            V[m] = vec
            ev[m] = np.maximum(lam_, 0.0)
            gty[m] = G.T @ y
        self.V = V
        self.ev = ev
        self.Vt_gty = np.einsum("mji,mj->mi", V, gty)
        self.yy = sum(float(y @ y) for y in self.y)

    def to_complex(self, x):
        return x[:, : self.C] + 1j * x[:, self.C :]

    def to_real(self, z):
        return np.concatenate([z.real, z.imag], axis=1)

    def solve_x(self, v, rho):
        # (2 G^T G + rho I) x = 2 G^T y + rho v
        rhs = 2 * self.Vt_gty + rho * np.einsum("mji,mj->mi", self.V, v)
        return np.einsum("mij,mj->mi", self.V, rhs / (2 * self.ev + rho))

    def terms(self, z, alpha, phi):
        fit = 0.0
        for G, y, x in zip(self.G, self.y, self.to_real(z)):
            res = y - G @ x
            fit += float(res @ res)
        coupling = float(np.sum(self.kappa * np.abs(phi[None] - alpha)))
        sparsity = self.L * float(np.sum(phi))
        return ObjectiveTerms(fit, coupling, sparsity, float(max(0.0, np.max(np.abs(z) - alpha))))


def solve_joint(records: RecordSet, dictionaries: Sequence[WidebandDictionary],
                penalties: PenaltyConfig = PenaltyConfig(),
                settings: SolverSettings = SolverSettings()) -> JointSolution:
    """Solve the joint program on a fixed band grid.

    Raises
    ------
    SolverConvergenceError
        When ``settings.max_iter`` is reached; ``exc.best`` holds the last
        (feasible) iterate as a :class:`JointSolution`.
    """
    P = _Problem(records, dictionaries, penalties, settings.normalize_atoms)
    M, C = P.M, P.C
    n = M * 2 * C
    rho = settings.rho
    if rho is None:
        rho = max(float(np.mean(2 * P.ev)), 1e-6)
    relax = settings.over_relaxation

    x = np.zeros((M, 2 * C))
    zc = np.zeros((M, C), dtype=complex)
    z = np.zeros((M, 2 * C))
    u = np.zeros((M, 2 * C))
    alpha = np.zeros((M, C))
    phi = np.zeros(C)
    obj_marks = []
    r_norm = s_norm = np.inf
    converged = False
    it = 0
    for it in range(1, settings.max_iter + 1):
        x = P.solve_x(z - u, rho)
        x_hat = relax * x + (1 - relax) * z
        z_old = z
        zc, alpha, phi = _prox_shared(P.to_complex(x_hat + u), P.kappa, P.L, rho)
        z = P.to_real(zc)
        u = u + x_hat - z

        r_norm = float(np.linalg.norm(x - z))
        s_norm = float(rho * np.linalg.norm(z - z_old))
        eps_pri = settings.tol * (np.sqrt(n) + max(np.linalg.norm(x), np.linalg.norm(z)))
        eps_dual = settings.tol * (np.sqrt(n) + rho * np.linalg.norm(u))

        if it % settings.objective_window == 0:
            obj_marks.append(P.terms(zc, alpha, phi).total)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            if len(obj_marks) >= 2:
                prev, last = obj_marks[-2], obj_marks[-1]
                if abs(last - prev) <= settings.objective_rtol * max(1.0, abs(last)):
                    converged = True
                    break
            elif it > 2 * settings.objective_window:
                converged = True
                break

        if it % settings.adapt_every == 0 and it <= settings.adapt_until:
            if r_norm > 10 * s_norm:
                rho *= 2
                u /= 2
            elif s_norm > 10 * r_norm:
                rho /= 2
                u *= 2

    sol = JointSolution(
        betas=zc,
        alphas=alpha,
        phi=phi,
        grid=P.grid,
        terms=P.terms(zc, alpha, phi),
        iterations=it,
        primal_residual=r_norm,
        dual_residual=s_norm,
        converged=converged,
        rho=rho,
        history=obj_marks,
    )
    if not converged:
        raise SolverConvergenceError(
            f"joint solver did not converge in {settings.max_iter} iterations "
            f"(primal {r_norm:.3g}, dual {s_norm:.3g})",
            best=sol,
        )
    return sol


def term_magnitudes(solution: JointSolution) -> dict:
    """The three objective terms at a solution, for penalty balancing."""
    t = solution.terms
    return {"fit": t.fit, "coupling": t.coupling, "sparsity": t.sparsity, "total": t.total}
