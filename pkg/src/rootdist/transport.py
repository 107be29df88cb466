"""Discrete optimal transport between small weighted point sets.

Three solvers share one result type:

* ``exact_ot``: the transport linear program, solved exactly by successive
  shortest augmenting paths (a min-cost-flow method) compiled with numba.
* ``sinkhorn``: entropy-regularized transport, log-domain alternating scaling.
* ``unbalanced_sinkhorn``: soft marginals penalized by KL divergence.

Atoms may be real (frequency bins) or complex (poles); the ground cost is
``|x - y|^p`` with the complex modulus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.typing import ArrayLike, NDArray


class ConvergenceError(RuntimeError):
    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3g})")
        self.iterations = iterations
        self.residual = residual


class MassMismatchError(ValueError):
    """Balanced transport between measures of different total mass."""


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: NDArray
    masses: NDArray[np.float64]

    def __post_init__(self):
        atoms = np.atleast_1d(np.asarray(self.atoms))
        if not np.iscomplexobj(atoms):
            atoms = atoms.astype(float)
        masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if atoms.ndim != 1 or masses.ndim != 1 or atoms.size != masses.size:
            raise ValueError("atoms and masses must be 1-d and of equal length")
        if atoms.size == 0:
            raise ValueError("empty measure")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise ValueError("masses must be finite and nonnegative")
        if masses.sum() <= 0:
            raise ValueError("total mass must be positive")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    def __len__(self):
        return self.atoms.size

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def normalized(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.atoms, self.masses / self.masses.sum())

    @classmethod
    def uniform(cls, atoms: ArrayLike, total: float = 1.0) -> "DiscreteMeasure":
        atoms = np.atleast_1d(np.asarray(atoms))
        return cls(atoms, np.full(atoms.size, total / atoms.size))


@dataclass(frozen=True)
class TransportConfig:
    """Solver settings.  ``regularization`` is the Sinkhorn lambda (entropy weight 1/lambda)."""

    p: float = 2.0
    regularization: float = 100.0
    max_iterations: int = 10_000
    tolerance: float = 1e-8
    marginal_penalty: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if not self.regularization > 0:
            raise ValueError("regularization must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.marginal_penalty > 0:
            raise ValueError("marginal_penalty must be positive")


@dataclass
class TransportPlan:
    coupling: NDArray[np.float64]
    cost_matrix: NDArray[np.float64]
    objective: float
    iterations: int = 0
    marginal_residual: float = 0.0
    converged: bool = True
    # dual potentials of the row / column marginal constraints (exact solver only)
    source_potential: NDArray[np.float64] | None = None
    target_potential: NDArray[np.float64] | None = None
    history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "coupling": self.coupling.tolist(),
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "marginal_residual": float(self.marginal_residual),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "TransportPlan":
        coupling = np.asarray(d["coupling"], dtype=float)
        return cls(
            coupling=coupling,
            cost_matrix=np.full_like(coupling, np.nan),
            objective=float(d["objective"]),
            iterations=int(d.get("iterations", 0)),
            marginal_residual=float(d.get("marginal_residual", 0.0)),
        )


def cost_matrix(source: DiscreteMeasure, target: DiscreteMeasure, p: float = 2.0):
    """``D[i, j] = |x_i - y_j|^p``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    x = _atoms(source)
    y = _atoms(target)
    return np.abs(x[:, None] - y[None, :]) ** p


def _atoms(m):
    return m.atoms if isinstance(m, DiscreteMeasure) else np.atleast_1d(np.asarray(m))


def _check_balanced(source, target, rtol=1e-9):
    ma, mb = source.total_mass, target.total_mass
    if abs(ma - mb) > rtol * max(ma, mb):
        raise MassMismatchError(f"total masses differ: {ma!r} vs {mb!r}")
    return ma


@numba.njit(cache=True, nogil=True)
def _min_cost_flow(a, b, D, tiny):
    """Successive shortest paths on the bipartite transport network.

    Dijkstra runs on reduced costs ``c + h(u) - h(v)`` with explicit super
    source (potential fixed at 0) and super sink ``T``.
    """
    n, m = D.shape
    inf = np.inf
    flow = np.zeros((n, m))
    sa = a.copy()
    sb = b.copy()
    hr = np.zeros(n)
    hc = np.zeros(m)
    ht = 0.0
    dr = np.empty(n)
    dc = np.empty(m)
    done_r = np.empty(n, dtype=np.bool_)
    done_c = np.empty(m, dtype=np.bool_)
    par_r = np.empty(n, dtype=np.int64)
    par_c = np.empty(m, dtype=np.int64)
    n_aug = 0
    max_aug = 50 * (n + m) * (n + m) + 100
    while True:
        # leftovers below ``tiny`` on every source or every sink are rounding dust
        if sa.max() <= tiny or sb.max() <= tiny:
            break
        if n_aug >= max_aug:
            return flow, hr, hc, n_aug, False
        for i in range(n):
            dr[i] = -hr[i] if sa[i] > tiny else inf
            if dr[i] < 0.0:
                dr[i] = 0.0
            par_r[i] = -1
            done_r[i] = False
        for j in range(m):
            dc[j] = inf
            par_c[j] = -1
            done_c[j] = False
        dt = inf
        par_t = -1
        while True:
            best = inf
            kind = -1
            idx = -1
            for i in range(n):
                if not done_r[i] and dr[i] < best:
                    best = dr[i]
                    kind = 0
                    idx = i
            for j in range(m):
                if not done_c[j] and dc[j] < best:
                    best = dc[j]
                    kind = 1
                    idx = j
            if kind == -1 or dt <= best:
                break
            if kind == 0:
                i = idx
                done_r[i] = True
                for j in range(m):
                    if done_c[j]:
                        continue
                    rc = D[i, j] + hr[i] - hc[j]
                    if rc < 0.0:
                        rc = 0.0
                    nd = dr[i] + rc
                    if nd < dc[j]:
                        dc[j] = nd
                        par_c[j] = i
            else:
                j = idx
                done_c[j] = True
                if sb[j] > tiny:
                    rc = hc[j] - ht
                    if rc < 0.0:
                        rc = 0.0
                    nd = dc[j] + rc
                    if nd < dt:
                        dt = nd
                        par_t = j
                for i in range(n):
                    if done_r[i] or flow[i, j] <= tiny:
                        continue
                    rc = -D[i, j] + hc[j] - hr[i]
                    if rc < 0.0:
                        rc = 0.0
                    nd = dc[j] + rc
                    if nd < dr[i]:
                        dr[i] = nd
                        par_r[i] = j
        if par_t < 0:
            return flow, hr, hc, n_aug, False
        for i in range(n):
            hr[i] += min(dr[i], dt)
        for j in range(m):
            hc[j] += min(dc[j], dt)
        ht += dt
        # bottleneck along T <- j <- i <- (j' <- i')* <- S
        delta = sb[par_t]
        j = par_t
        while True:
            i = par_c[j]
            jb = par_r[i]
            if jb < 0:
                if sa[i] < delta:
                    delta = sa[i]
                break
            if flow[i, jb] < delta:
                delta = flow[i, jb]
            j = jb
        j = par_t
        sb[j] -= delta
        while True:
            i = par_c[j]
            flow[i, j] += delta
            jb = par_r[i]
            if jb < 0:
                sa[i] -= delta
                break
            flow[i, jb] -= delta
            if flow[i, jb] < 0.0:
                flow[i, jb] = 0.0
            j = jb
        n_aug += 1
    return flow, hr, hc, n_aug, True


def _solve_exact(a, b, D):
    flow, hr, hc, n_aug, ok = _min_cost_flow(
        np.ascontiguousarray(a, dtype=float),
        np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(D, dtype=float),
        1e-15,
    )
    if not ok:
        raise ConvergenceError("exact transport did not terminate", n_aug, float("nan"))
    return flow, -hr, hc, n_aug


def exact_ot(
    source: DiscreteMeasure, target: DiscreteMeasure, config: TransportConfig | None = None
) -> TransportPlan:
    """Optimal coupling of the transport linear program."""
    config = config or TransportConfig()
    mass = _check_balanced(source, target)
    D = cost_matrix(source, target, config.p)
    a = source.masses / source.total_mass
    b = target.masses / target.total_mass
    flow, u, v, n_aug = _solve_exact(a, b, D)
    coupling = flow * mass
    residual = np.abs(coupling.sum(1) - source.masses).sum() + np.abs(
        coupling.sum(0) - target.masses
    ).sum()
    return TransportPlan(
        coupling=coupling,
        cost_matrix=D,
        objective=float(np.sum(flow * D) * mass),
        iterations=n_aug,
        marginal_residual=float(residual),
        source_potential=u,
        target_potential=v,
    )


def _support(m: DiscreteMeasure):
    keep = m.masses > 0
    return keep, np.log(m.masses[keep])


def _embed(plan_small, keep_a, keep_b):
    out = np.zeros((keep_a.size, keep_b.size))
    out[np.ix_(keep_a, keep_b)] = plan_small
    return out


def _round_to_marginals(plan, a, b):
    """Project a nearly feasible plan onto exact marginals, keeping it nonnegative."""
    rows = plan.sum(1)
    plan = plan * np.minimum(1.0, a / np.where(rows > 0, rows, 1.0))[:, None]
    cols = plan.sum(0)
    plan = plan * np.minimum(1.0, b / np.where(cols > 0, cols, 1.0))[None, :]
    ea = a - plan.sum(1)
    eb = b - plan.sum(0)
    if ea.sum() > 0:
        plan = plan + np.outer(ea, eb) / ea.sum()
    return plan


@numba.njit(cache=True, nogil=True)
def _lse_rows(M):
    out = np.empty(M.shape[0])
    for i in range(M.shape[0]):
        mx = -np.inf
        for j in range(M.shape[1]):
            if M[i, j] > mx:
                mx = M[i, j]
        acc = 0.0
        for j in range(M.shape[1]):
            acc += np.exp(M[i, j] - mx)
        out[i] = mx + np.log(acc)
    return out


@numba.njit(cache=True, nogil=True)
def _scaling_loop(la, lb, C, eps, f, g, damp, max_iterations, tolerance, balanced, history):
    """Log-domain (generalized) Sinkhorn updates.

    Balanced runs stop on the row-marginal L1 residual, unbalanced runs
    (``damp < 1``) on the largest potential change.  Writes one value per
    iteration into ``history`` and returns the iteration count.
    """
    n, m = C.shape
    a = np.exp(la)
    Ct = np.ascontiguousarray(C.T)
    for it in range(max_iterations):
        f_new = damp * eps * (la - _lse_rows((g[None, :] - C) / eps))
        g_new = damp * eps * (lb - _lse_rows((f_new[None, :] - Ct) / eps))
        if balanced:
            rows = np.exp(_lse_rows((f_new[:, None] + g_new[None, :] - C) / eps))
            err = np.abs(rows - a).sum()
        else:
            err = max(np.max(np.abs(f_new - f)), np.max(np.abs(g_new - g)))
        f[:] = f_new
        g[:] = g_new
        history[it] = err
        if err < tolerance:
            return it + 1
    return max_iterations


def _run_scaling(la, lb, C, eps, f, g, max_iterations, tolerance, damp=1.0, balanced=True):
    history = np.empty(max_iterations)
    it = _scaling_loop(la, lb, C, eps, f, g, damp, max_iterations, tolerance, balanced, history)
    return it, history[:it]


def sinkhorn(
    source: DiscreteMeasure, target: DiscreteMeasure, config: TransportConfig | None = None
) -> TransportPlan:
    """Entropy-regularized transport, ``min <g, D> - h(g) / lambda``.

    Works in the log domain and anneals the entropy weight geometrically down
    to ``1 / lambda``, warm-starting each stage.  Both measures are rescaled
    to unit mass and the result scaled back.  ``history`` holds the row
    marginal L1 residual per iteration of the final stage; the returned plan
    is rounded onto the exact marginals and ``objective = <g, D>``.
    """
    config = config or TransportConfig()
    mass = _check_balanced(source, target)
    D = cost_matrix(source, target, config.p)
    a, b = source.normalized(), target.normalized()
    keep_a, la = _support(a)
    keep_b, lb = _support(b)
    C = D[np.ix_(keep_a, keep_b)]
    eps_final = 1.0 / config.regularization
    f = np.zeros(la.size)
    g = np.zeros(lb.size)
    used = 0
    eps = max(float(C.max()), eps_final)
    while eps > eps_final:
        it, _ = _run_scaling(la, lb, C, eps, f, g, 200, 1e-3)
        used += it
        eps = max(eps / 4.0, eps_final)
    budget = max(config.max_iterations - used, 1)
    it, history = _run_scaling(la, lb, C, eps_final, f, g, budget, config.tolerance)
    used += it
    residual = float(history[-1])
    if not residual < config.tolerance:
        raise ConvergenceError("sinkhorn did not converge", used, residual)
    small = _round_to_marginals(np.exp((f[:, None] + g[None, :] - C) / eps_final), np.exp(la), np.exp(lb))
    coupling = _embed(small, keep_a, keep_b) * mass
    return TransportPlan(
        coupling=coupling,
        cost_matrix=D,
        objective=float(np.sum(coupling * D)),
        iterations=used,
        marginal_residual=float(
            np.abs(coupling.sum(1) - source.masses).sum() + np.abs(coupling.sum(0) - target.masses).sum()
        ),
        history=history.tolist(),
    )


def _kl(x, y):
    pos = x > 0
    return float(np.sum(x[pos] * np.log(x[pos] / y[pos])) - x.sum() + y.sum())


def unbalanced_sinkhorn(
    source: DiscreteMeasure, target: DiscreteMeasure, config: TransportConfig | None = None
) -> TransportPlan:
    """Transport with KL-relaxed marginals.

    Minimizes ``<g, D> - h(g) / lambda + rho KL(g 1 | a) + rho KL(g^T 1 | b)``
    with ``rho = config.marginal_penalty``; masses are used as given.  The
    reported objective is the penalized transport cost without the entropy.
    """
    config = config or TransportConfig()
    rho = config.marginal_penalty
    D = cost_matrix(source, target, config.p)
    keep_a, la = _support(source)
    keep_b, lb = _support(target)
    C = D[np.ix_(keep_a, keep_b)]
    eps = 1.0 / config.regularization
    damp = 1.0 if np.isinf(rho) else rho / (rho + eps)
    f = np.zeros(la.size)
    g = np.zeros(lb.size)
    it, history = _run_scaling(
        la, lb, C, eps, f, g, config.max_iterations, config.tolerance, damp, balanced=False
    )
    if not history[-1] < config.tolerance:
        raise ConvergenceError("unbalanced sinkhorn did not converge", it, float(history[-1]))
    coupling = _embed(np.exp((f[:, None] + g[None, :] - C) / eps), keep_a, keep_b)
    rows, cols = coupling.sum(1), coupling.sum(0)
    penalty = 0.0 if np.isinf(rho) else rho * (_kl(rows, source.masses) + _kl(cols, target.masses))
    return TransportPlan(
        coupling=coupling,
        cost_matrix=D,
        objective=float(np.sum(coupling * D) + penalty),
        iterations=it,
        marginal_residual=float(
            np.abs(rows - source.masses).sum() + np.abs(cols - target.masses).sum()
        ),
        history=history.tolist(),
    )
