"""Displacement interpolation, barycenters and barycentric coordinates.

Under the root distances the geometry is Euclidean in pole space, so geodesics
are straight lines between matched poles and barycenters are pole averages.
Under transport distances between pole measures the barycenter is a
free-support problem, solved here for a local minimizer by alternating support
and weight updates.  The closed-form 1-d Wasserstein geodesic is provided for
comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import nnls

from .metrics import (
    Assignment,
    _require_normalized,
    assignment,
    quantile_functions,
    quantile_levels,
    sort_poles,
)
from .model import DiscreteSpectrum, RationalModel, residues, spectrum_at
from .transport import DiscreteMeasure, TransportConfig, exact_ot

# relative tolerance on the coordinate sum
SIMPLEX_ATOL = 1e-9


@dataclass(frozen=True)
class BarycentricCoordinates:
    """Weights over a dictionary.

    ``objective`` is the distance achieved by the weights (optimizer output);
    ``signed`` admits negative weights, as returned by the unconstrained-sign
    least-squares variant; ``rank_deficient`` flags a non-unique solution.
    """

    weights: NDArray[np.float64]
    objective: float = float("nan")
    converged: bool = True
    rank_deficient: bool = False
    signed: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("empty coordinate vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("coordinates must be finite")
        if abs(w.sum() - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"coordinates sum to {w.sum()!r}, not 1")
        if not self.signed and np.any(w < 0):
            raise ValueError("coordinates must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def dictionary_size(self) -> int:
        return self.weights.size

    @classmethod
    def vertex(cls, k: int, size: int) -> "BarycentricCoordinates":
        w = np.zeros(size)
        w[k] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, size: int) -> "BarycentricCoordinates":
        return cls(np.full(size, 1.0 / size))

    def to_dict(self) -> dict:
        return {"lambda": self.weights.tolist(), "objective": float(self.objective)}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _coordinates(lam, size: int) -> NDArray[np.float64]:
    if isinstance(lam, BarycentricCoordinates):
        w = lam.weights
    else:
        w = BarycentricCoordinates(np.asarray(lam, dtype=float)).weights
    if w.size != size:
        raise ValueError(f"{w.size} coordinates for {size} inputs")
    return w


@dataclass(frozen=True)
class InterpolationPath:
    """Samples of a geodesic at increasing ``t`` in [0, 1]."""

    t_values: NDArray[np.float64]
    models: tuple

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float).ravel()
        if t.size == 0 or np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > 1:
            raise ValueError("t values must increase within [0, 1]")
        if len(self.models) != t.size:
            raise ValueError("one model per t value")
        object.__setattr__(self, "t_values", t)
        object.__setattr__(self, "models", tuple(self.models))

    def __len__(self):
        return self.t_values.size


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t = {t} outside [0, 1]")
    return t


def interpolate_rd(
    m1: RationalModel, m2: RationalModel, t: float, assignment_mode: Assignment = "sorted", p: float = 2.0
) -> RationalModel:
    """Point at ``t`` on the straight pole path from ``m1`` to ``m2``.

    Poles keep the order of ``m1``; the gain moves geometrically.
    """
    t = _check_t(t)
    if m1.order != m2.order:
        raise ValueError(f"model orders differ: {m1.order} vs {m2.order}")
    perm = assignment(m1.poles, m2.poles, assignment_mode, p)
    poles = (1.0 - t) * m1.poles + t * m2.poles[perm]
    # convex combinations of left half-plane points stay there
    assert np.all(poles.real < 0)
    gain = m1.gain ** (1.0 - t) * m2.gain**t
    return RationalModel(poles, gain, m1.sample_rate)


def rd_path(m1, m2, t_values: ArrayLike, assignment_mode: Assignment = "sorted") -> InterpolationPath:
    t = np.asarray(t_values, dtype=float)
    return InterpolationPath(t, [interpolate_rd(m1, m2, ti, assignment_mode) for ti in t])


def interpolate_w2(m1: RationalModel, m2: RationalModel, t: float, grid: ArrayLike) -> DiscreteSpectrum:
    """Displacement interpolant of two unit-energy spectra, as a density on ``grid``.

    The interpolant's quantile function is ``(1 - t) F1^-1 + t F2^-1``; its
    density at ``x(e)`` is ``1 / x'(e)``, with ``x'`` obtained exactly from the
    endpoint spectra.  The returned density uses the same convention as
    ``evaluate_spectrum``: for real-coefficient models the mass over the
    positive half-line is twice its integral.
    """
    t = _check_t(t)
    _require_normalized(m1)
    _require_normalized(m2)
    grid = np.asarray(grid, dtype=float).ravel()
    one_sided = m1.is_conjugate_symmetric() and m2.is_conjugate_symmetric()
    levels = np.union1d(quantile_levels(), np.linspace(0.0, 1.0, 20001))
    levels = levels[(levels > 0) & (levels < 1)]
    q1, q2 = quantile_functions(m1, m2, levels)
    fold = 2.0 if one_sided else 1.0
    d1 = fold * spectrum_at(m1, q1)
    d2 = fold * spectrum_at(m2, q2)
    x = (1.0 - t) * q1 + t * q2
    dx = (1.0 - t) / d1 + t / d2
    density = np.interp(grid, x, 1.0 / dx, left=0.0, right=0.0) / fold
    return DiscreteSpectrum(grid, density)


def barycenter_rd(
    models: Sequence[RationalModel], lam, weighted: bool = False
) -> RationalModel:
    """Pole-wise average of sorted models.

    The weighted form averages each pole position with the product of the
    coordinate and the pole's residue weight.  The gain is the
    coordinate-weighted geometric mean.
    """
    models = [sort_poles(m) for m in models]
    if not models:
        raise ValueError("no models to average")
    n = models[0].order
    if any(m.order != n for m in models):
        raise ValueError("all models must have the same order")
    lam = _coordinates(lam, len(models))
    P = np.stack([m.poles for m in models])
    if weighted:
        W = lam[:, None] * np.stack([residues(m).weights for m in models])
        poles = (W * P).sum(0) / W.sum(0)
    else:
        poles = lam @ P
    gain = float(np.exp(lam @ np.log([m.gain for m in models])))
    return RationalModel(poles, gain, models[0].sample_rate)


@dataclass
class BarycenterResult:
    measure: DiscreteMeasure
    objective: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def _sorted_atoms(m: DiscreteMeasure):
    order = np.lexsort((m.atoms.real, np.imag(m.atoms)))
    return m.atoms[order], m.masses[order]


def _initial_support(measures, lam, size):
    """lambda-weighted average of sorted atoms, resampled by mass when sizes differ."""
    if all(len(m) == size for m in measures):
        atoms = sum(l * _sorted_atoms(m)[0] for l, m in zip(lam, measures))
        masses = sum(l * _sorted_atoms(m)[1] for l, m in zip(lam, measures))
        return np.asarray(atoms), np.asarray(masses)
    levels = (np.arange(size) + 0.5) / size
    atoms = np.zeros(size, dtype=complex)
    for l, m in zip(lam, measures):
        x, a = _sorted_atoms(m)
        k = np.minimum(np.searchsorted(np.cumsum(a), levels), x.size - 1)
        atoms = atoms + l * x[k]
    return atoms, np.full(size, 1.0 / size)


def _reference_support(measures, lam, k, config):
    """Atoms of input ``k`` moved to the lambda-average of their transport images.

    Exact for two inputs whose optimal plan is a matching (p = 2).
    """
    ref = measures[k]
    keep = ref.masses > 0
    atoms = lam[k] * ref.atoms.astype(complex)
    for i, m in enumerate(measures):
        if i != k:
            T = exact_ot(ref, m, config).coupling
            atoms = atoms + lam[i] * (T @ m.atoms) / np.where(keep, ref.masses, 1.0)
    if all(np.isrealobj(m.atoms) for m in measures):
        atoms = atoms.real
    return atoms[keep], ref.masses[keep]


def _starting_support(measures, lam, size, config, explicit_size):
    """Cheapest of the sorted-average start and one reference start per input."""
    candidates = [_initial_support(measures, lam, size)]
    if not explicit_size:
        candidates += [_reference_support(measures, lam, k, config) for k in np.flatnonzero(lam > 0)]
    values = [_objective(a, w / w.sum(), measures, lam, config)[0] for a, w in candidates]
    return candidates[int(np.argmin(values))]


def _objective(atoms, masses, measures, lam, config):
    q = DiscreteMeasure(atoms, masses)
    plans = [exact_ot(q, m, config) for m in measures]
    return float(sum(l * pl.objective for l, pl in zip(lam, plans))), plans


def _support_step(atoms, masses, measures, lam, plans, p, sweeps=20):
    """Minimize sum_i lam_i sum_k T_i[j, k] |x_j - y_ik|^p over x for fixed plans."""
    keep = masses > 0
    Y = [m.atoms for m in measures]
    x = atoms.copy()
    for _ in range(1 if p == 2 else sweeps):
        num = np.zeros(x.size, dtype=complex)
        den = np.zeros(x.size)
        for l, y, pl in zip(lam, Y, plans):
            T = pl.coupling
            if p != 2:
                # reweighted least squares; clamp keeps the Weiszfeld step finite
                T = T * np.maximum(np.abs(x[:, None] - y[None, :]), 1e-12) ** (p - 2)
            num += l * (T @ y)
            den += l * T.sum(1)
        x = np.where(keep & (den > 0), num / np.where(den > 0, den, 1.0), x)
    if np.all(np.isreal(atoms)) and all(np.all(np.isreal(y)) for y in Y):
        x = x.real
    return x


def barycenter_ot(
    measures: Sequence[DiscreteMeasure],
    lam,
    config: TransportConfig | None = None,
    *,
    support_size: int | None = None,
    init: DiscreteMeasure | None = None,
    max_iterations: int = 100,
    tolerance: float = 1e-9,
) -> BarycenterResult:
    """Free-support transport barycenter ``argmin_Q sum_i lam_i W_p^p(mu_i, Q)``.

    Alternates a support update (closed form for p = 2, reweighted least
    squares otherwise) with a mirror-descent step on the weights along the
    dual potentials.  A step is kept only if it lowers the objective, so the
    history is nonincreasing.  Without ``init`` the start is the cheapest of
    the sorted-atom average and, for each input, that input's atoms pushed to
    the lambda-average of their transport images.  The problem is
    non-convex; the result is a local minimizer.  Masses are normalized internally and the result is
    scaled back to the common input mass.
    """
    config = config or TransportConfig()
    if not measures:
        raise ValueError("no measures to average")
    lam = _coordinates(lam, len(measures))
    total = measures[0].total_mass
    for m in measures:
        if abs(m.total_mass - total) > 1e-9 * max(total, m.total_mass):
            raise ValueError("barycenter inputs must carry equal total mass")
    measures = [m.normalized() for m in measures]
    p = config.p
    if init is not None:
        atoms, masses = np.asarray(init.atoms), init.masses / init.total_mass
    else:
        size = support_size or max(len(m) for m in measures)
        atoms, masses = _starting_support(measures, lam, size, config, support_size is not None)
    masses = masses / masses.sum()
    obj, plans = _objective(atoms, masses, measures, lam, config)
    history = [obj]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        previous = obj
        # support: the fixed-plan minimizer cannot increase the objective for p = 2
        new_atoms = _support_step(atoms, masses, measures, lam, plans, p)
        new_obj, new_plans = _objective(new_atoms, masses, measures, lam, config)
        if new_obj < obj:
            atoms, obj, plans = new_atoms, new_obj, new_plans
        # weights: exponentiated gradient on the simplex, backtracking on the step
        grad = sum(l * pl.source_potential for l, pl in zip(lam, plans))
        grad = grad - masses @ grad
        scale = np.max(np.abs(grad))
        if scale > 0:
            for _ in range(30):
                trial = masses * np.exp(-step * grad / scale)
                trial /= trial.sum()
                t_obj, t_plans = _objective(atoms, trial, measures, lam, config)
                if t_obj < obj:
                    masses, obj, plans = trial, t_obj, t_plans
                    step *= 2.0
                    break
                step *= 0.5
        history.append(obj)
        if previous - obj <= tolerance * max(abs(previous), 1e-300):
            converged = True
            break
    return BarycenterResult(DiscreteMeasure(atoms, masses * total), obj * total, it, converged, history)


def _outer_objective(query, dictionary, lam, config):
    bary = barycenter_ot(dictionary, lam, config).measure
    return exact_ot(query, bary, config).objective


def barycentric_coordinates(
    query: DiscreteMeasure,
    dictionary: Sequence[DiscreteMeasure],
    config: TransportConfig | None = None,
    *,
    iterations: int = 200,
    step: float = 1.0,
    fd_step: float = 1e-3,
) -> BarycentricCoordinates:
    """Coordinates whose barycenter best matches ``query`` under transport.

    Mirror descent on the simplex with directional finite-difference
    gradients of ``lam -> W_p^p(query, barycenter(lam))``.  The search starts
    from the best of the uniform weights and the simplex vertices, adapts its
    step by success/failure and returns the best iterate seen.  ``converged``
    is False when the iteration budget ran out before the step collapsed.
    """
    config = config or TransportConfig()
    if not dictionary:
        raise ValueError("empty dictionary")
    query = query.normalized()
    dictionary = [m.normalized() for m in dictionary]
    N = len(dictionary)
    J = lambda w: _outer_objective(query, dictionary, w, config)  # noqa: E731
    if N == 1:
        return BarycentricCoordinates(np.ones(1), J(np.ones(1)))
    starts = [np.full(N, 1.0 / N)] + [np.eye(N)[k] for k in range(N)]
    values = [J(w) for w in starts]
    k = int(np.argmin(values))
    # keep the iterate strictly inside the simplex so multiplicative steps can move it
    lam = 0.98 * starts[k] + 0.02 / N
    obj = J(lam)
    best, best_obj = starts[k], values[k]
    if obj < best_obj:
        best, best_obj = lam, obj
    converged = False
    for _ in range(iterations):
        g = np.empty(N)
        for j in range(N):
            probe = lam + fd_step * (np.eye(N)[j] - lam)
            g[j] = (J(probe) - obj) / fd_step
        scale = np.max(np.abs(g - lam @ g))
        if scale == 0:
            converged = True
            break
        trial = lam * np.exp(-step * (g - lam @ g) / scale)
        trial /= trial.sum()
        t_obj = J(trial)
        if t_obj < obj:
            lam, obj = trial, t_obj
            step *= 1.5
            if obj < best_obj:
                best, best_obj = lam, obj
        else:
            step *= 0.5
            if step < 1e-6:
                converged = True
                break
    best = np.clip(best, 0.0, None)
    return BarycentricCoordinates(best / best.sum(), best_obj, converged)


def root_vector(model: RationalModel) -> NDArray[np.float64]:
    """Sorted poles stacked as ``[Re p; Im p]``."""
    poles = sort_poles(model).poles
    return np.concatenate([poles.real, poles.imag])


def coordinates_rd_leastsquares(
    query: RationalModel, dictionary: Sequence[RationalModel], nonnegative: bool = True
) -> BarycentricCoordinates:
    """Affine (or convex) combination of dictionary root vectors closest to the query.

    Minimizes ``||D lam - q||`` subject to ``sum(lam) = 1``; with
    ``nonnegative`` also ``lam >= 0`` (active-set nonnegative least squares
    with the sum constraint as a heavily weighted extra row).  Without it the
    minimum-norm solution is returned and ``rank_deficient`` flags
    non-uniqueness.
    """
    if not dictionary:
        raise ValueError("empty dictionary")
    n = query.order
    if any(m.order != n for m in dictionary):
        raise ValueError("query and dictionary must share one model order")
    D = np.stack([root_vector(m) for m in dictionary], axis=1)
    q = root_vector(query)
    N = D.shape[1]
    rank = np.linalg.matrix_rank(np.vstack([D, np.ones((1, N))]))
    deficient = bool(rank < N)
    if nonnegative:
        heavy = 1e3 * max(1.0, np.abs(D).max(), np.abs(q).max())
        lam, _ = nnls(np.vstack([D, heavy * np.ones((1, N))]), np.append(q, heavy))
        lam = lam / lam.sum()
    else:
        # parametrize the affine hull: lam = 1/N + Z mu with Z spanning sum-zero vectors
        Z = np.linalg.qr(np.eye(N) - 1.0 / N, mode="reduced")[0][:, : N - 1]
        base = np.full(N, 1.0 / N)
        mu = np.linalg.lstsq(D @ Z, q - D @ base, rcond=None)[0] if N > 1 else np.zeros(0)
        lam = base + Z @ mu
        lam = lam + (1.0 - lam.sum()) / N
    residual = float(np.linalg.norm(D @ lam - q))
    return BarycentricCoordinates(lam, residual, True, deficient, signed=not nonnegative)
