"""All-pole rational spectra: estimation, residues, energy and cumulative spectra.

A model is ``G(s) = gain / prod_i (s - p_i)`` with poles in the open left
half-plane (continuous time, rad/s).  Spectra are ``Phi(w) = |G(iw)|^2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import quad

# Discrete roots are kept strictly inside the unit circle and away from zero.
MAX_ROOT_RADIUS = 1.0 - 1e-6
MIN_ROOT_RADIUS = 1e-8
# Poles closer than this times (1 + max|p|) count as repeated.
REPEATED_POLE_RTOL = 1e-8
# Relative spectral mass allowed beyond the automatic cumulative-spectrum cutoff.
TAIL_MASS = 1e-9


class UnstableModelError(ValueError):
    """A pole lies on or to the right of the imaginary axis."""


class RepeatedPoleError(ValueError):
    """Two poles coincide within tolerance; residues are undefined."""


class FitError(ValueError):
    """Autoregressive estimation failed."""


def _as_poles(poles: ArrayLike) -> NDArray[np.complex128]:
    arr = np.atleast_1d(np.asarray(poles, dtype=np.complex128)).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Signal:
    samples: NDArray[np.float64]
    sample_rate: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("signal needs at least two samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("signal contains non-finite samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class RationalModel:
    """Stable all-pole transfer function ``gain / prod(s - p_i)``.

    Poles are continuous-time (rad/s).  ``sample_rate`` records the rate of the
    signal the model was estimated from and is carried along for provenance.
    """

    poles: NDArray[np.complex128]
    gain: float = 1.0
    sample_rate: float = 1.0

    def __post_init__(self):
        poles = _as_poles(self.poles)
        if poles.size == 0:
            raise ValueError("a model needs at least one pole")
        if not np.all(np.isfinite(poles)):
            raise ValueError("poles must be finite")
        if np.any(poles.real >= 0):
            raise UnstableModelError(f"unstable poles: {poles[poles.real >= 0]}")
        if not (np.isfinite(self.gain) and self.gain > 0):
            raise ValueError("gain must be positive and finite")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "gain", float(self.gain))
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def order(self) -> int:
        return self.poles.size

    def is_conjugate_symmetric(self, rtol: float = 1e-9) -> bool:
        """True when the pole set is closed under complex conjugation."""
        return _conjugate_closed(self.poles, rtol)

    def replace(self, **changes) -> "RationalModel":
        kw = dict(poles=self.poles, gain=self.gain, sample_rate=self.sample_rate)
        kw.update(changes)
        return RationalModel(**kw)

    def __eq__(self, other):
        if not isinstance(other, RationalModel):
            return NotImplemented
        return (
            np.array_equal(self.poles, other.poles)
            and self.gain == other.gain
            and self.sample_rate == other.sample_rate
        )

    def __hash__(self):
        return hash((self.poles.tobytes(), self.gain, self.sample_rate))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "poles": [[float(p.real), float(p.imag)] for p in self.poles],
            "gain": self.gain,
            "sample_rate": self.sample_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RationalModel":
        try:
            poles = np.array([complex(re, im) for re, im in d["poles"]])
            model = cls(poles, float(d["gain"]), float(d.get("sample_rate", 1.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"invalid model record: {e}") from e
        if "order" in d and int(d["order"]) != model.order:
            raise ValueError(f"order field {d['order']} does not match {model.order} poles")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "RationalModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ResidueWeights:
    """Partial-fraction residues and the spectral mass carried by each pole.

    ``weights[i] = -pi |residues[i]|^2 / Re(p_i)`` is the energy of the single
    term ``r_i / (s - p_i)``; ``beta = (1 - p) / 2`` for metric order ``p``.
    """

    residues: NDArray[np.complex128]
    weights: NDArray[np.float64]
    beta: float


@dataclass(frozen=True)
class DiscreteSpectrum:
    """Nonnegative spectral density sampled on an increasing frequency grid (rad/s)."""

    frequencies: NDArray[np.float64]
    density: NDArray[np.float64]

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float).ravel()
        d = np.asarray(self.density, dtype=float).ravel()
        if f.shape != d.shape:
            raise ValueError("frequencies and density differ in length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("density must be finite and nonnegative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "density", d)

    @property
    def total(self) -> float:
        return float(self.density.sum())


@dataclass(frozen=True)
class CumulativeSpectrum:
    """Cumulative spectrum sampled on a grid.

    One-sided spectra (real-coefficient models) use ``F(w) = 2 int_0^w Phi``
    on ``w >= 0``.  Models without conjugate symmetry have asymmetric spectra;
    those use the two-sided ``F(w) = int_{-inf}^w Phi`` on a symmetric grid.
    """

    grid: NDArray[np.float64]
    values: NDArray[np.float64]
    energy: float
    one_sided: bool = True

    def __call__(self, w: ArrayLike) -> NDArray[np.float64]:
        return np.interp(w, self.grid, self.values)


def _conjugate_closed(poles: NDArray, rtol: float) -> bool:
    scale = 1.0 + np.max(np.abs(poles))
    d = np.abs(poles[:, None] - np.conj(poles)[None, :])
    # greedy matching is enough: poles are simple in practice
    used = np.zeros(poles.size, dtype=bool)
    for i in range(poles.size):
        cand = np.where(~used & (d[i] <= rtol * scale))[0]
        if cand.size == 0:
            return False
        used[cand[0]] = True
    return True


def polynomial_roots(coefficients: ArrayLike) -> NDArray[np.complex128]:
    """Roots of ``c[0] x^n + ... + c[n]`` from the companion-matrix eigenvalues."""
    c = np.atleast_1d(np.asarray(coefficients))
    if c.ndim != 1 or c.size == 0 or not np.any(c):
        raise ValueError("zero polynomial has no well-defined roots")
    if c[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    n = c.size - 1
    if n < 1:
        raise ValueError("polynomial of degree 0 has no roots")
    monic = c[1:] / c[0]
    companion = np.zeros((n, n), dtype=np.result_type(monic, float))
    companion[0, :] = -monic
    companion[np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(companion).astype(np.complex128)


def _symmetrize(roots: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Snap nearly-real roots onto the real axis and make conjugate pairs exact."""
    roots = roots.copy()
    scale = 1.0 + np.abs(roots)
    near_real = np.abs(roots.imag) <= 1e-12 * scale
    roots[near_real] = roots[near_real].real
    upper = roots[roots.imag > 0]
    lower = roots[roots.imag < 0]
    if upper.size != lower.size:
        return roots
    out = [roots[roots.imag == 0]]
    remaining = list(lower)
    for u in upper:
        k = int(np.argmin(np.abs(np.array(remaining) - np.conj(u))))
        partner = remaining.pop(k)
        mid = 0.5 * (u + np.conj(partner))
        out.append(np.array([mid, np.conj(mid)]))
    return np.concatenate(out)


def discrete_to_continuous(z: ArrayLike, sample_rate: float) -> NDArray[np.complex128]:
    """Map discrete-time roots to continuous-time poles, ``p = fs * log(z)``.

    Roots outside the unit circle are reflected to ``1 / conj(z)`` and every
    radius is clipped to ``[MIN_ROOT_RADIUS, MAX_ROOT_RADIUS]``.  Negative real
    roots map onto the negative real axis (``fs * log|z|``) so that real roots
    stay real.
    """
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    outside = r >= 1.0
    z = np.where(outside, 1.0 / np.conj(np.where(outside, z, 1.0)), z)
    r = np.clip(np.abs(z), MIN_ROOT_RADIUS, MAX_ROOT_RADIUS)
    angle = np.angle(z)
    angle = np.where(z.imag == 0, 0.0, angle)
    return sample_rate * (np.log(r) + 1j * angle)


def fit_ar(signal: Signal, order: int) -> RationalModel:
    """Least-squares AR(order) fit, mapped to a stable, energy-normalized model."""
    if not isinstance(signal, Signal):
        signal = Signal(np.asarray(signal, dtype=float))
    order = int(order)
    if order < 1:
        raise FitError("order must be at least 1")
    x = signal.samples
    if x.size <= 2 * order:
        raise FitError(f"signal of length {x.size} too short for order {order}")
    if not np.any(x):
        raise FitError("signal is identically zero")
    # x[t] = sum_k a_k x[t-k] + e[t]
    regressors = np.column_stack([x[order - k : x.size - k] for k in range(1, order + 1)])
    target = x[order:]
    coeffs, _, rank, _ = np.linalg.lstsq(regressors, target, rcond=None)
    if rank < order:
        raise FitError(f"normal equations are singular (rank {rank} < order {order})")
    roots = _symmetrize(polynomial_roots(np.concatenate([[1.0], -coeffs])))
    poles = _symmetrize(discrete_to_continuous(roots, signal.sample_rate))
    model = RationalModel(poles, 1.0, signal.sample_rate)
    return normalize_energy(model)


def scale_poles(model: RationalModel, alpha: float) -> RationalModel:
    """Scale every pole by ``alpha > 0``, keeping the gain."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return model.replace(poles=alpha * model.poles)


def _check_simple(poles: NDArray) -> None:
    if poles.size < 2:
        return
    tol = REPEATED_POLE_RTOL * (1.0 + np.max(np.abs(poles)))
    d = np.abs(poles[:, None] - poles[None, :])
    np.fill_diagonal(d, np.inf)
    if d.min() <= tol:
        i, j = np.unravel_index(np.argmin(d), d.shape)
        raise RepeatedPoleError(f"poles {poles[i]} and {poles[j]} coincide")


def residues(model: RationalModel, p: float = 2.0) -> ResidueWeights:
    """Residues ``r_i = gain / prod_{j != i}(p_i - p_j)`` and residue weights."""
    poles = model.poles
    _check_simple(poles)
    diff = poles[:, None] - poles[None, :]
    np.fill_diagonal(diff, 1.0)
    r = model.gain / np.prod(diff, axis=1)
    w = -np.pi * np.abs(r) ** 2 / poles.real
    return ResidueWeights(r, w, (1.0 - p) / 2.0)


def _spectral_coefficients(model: RationalModel) -> NDArray[np.complex128]:
    """Coefficients ``c_i`` with ``Phi(w) = 2 Re sum_i c_i / (iw - p_i)``."""
    poles = model.poles
    r = residues(model).residues
    cross = np.conj(r)[None, :] / (-poles[:, None] - np.conj(poles)[None, :])
    return r * cross.sum(axis=1)


def spectral_energy(model: RationalModel) -> float:
    """Total energy ``int_R |G(iw)|^2 dw``, from residue cross terms."""
    if np.any(model.poles.real >= 0):
        raise UnstableModelError("spectral energy diverges for unstable poles")
    try:
        c = _spectral_coefficients(model)
    except RepeatedPoleError:
        return _energy_quadrature(model)
    return float(2.0 * np.pi * np.sum(c).real)


def _energy_quadrature(model: RationalModel) -> float:
    f = lambda w: float(spectrum_at(model, w))
    # split at the resonances so narrow peaks are not stepped over
    peaks = np.unique(np.concatenate([model.poles.imag, -model.poles.imag]))
    edges = np.concatenate([[-np.inf], peaks, [np.inf]])
    return float(sum(quad(f, a, b, limit=500)[0] for a, b in zip(edges[:-1], edges[1:])))


def normalize_energy(model: RationalModel) -> RationalModel:
    """Rescale the gain so that the spectrum integrates to one."""
    energy = spectral_energy(model)
    if not (np.isfinite(energy) and energy > 0):
        raise ValueError(f"cannot normalize a model with energy {energy}")
    if energy == 1.0:
        return model
    return model.replace(gain=model.gain / np.sqrt(energy))


def spectrum_at(model: RationalModel, frequencies: ArrayLike) -> NDArray[np.float64]:
    """``Phi(w) = gain^2 / prod |iw - p_i|^2`` at arbitrary frequencies (rad/s)."""
    w = np.asarray(frequencies, dtype=float)
    z = 1j * w[..., None] - model.poles
    logden = np.sum(np.log(np.abs(z)), axis=-1)
    return np.exp(2.0 * (np.log(model.gain) - logden))


def evaluate_spectrum(model: RationalModel, frequencies: ArrayLike) -> DiscreteSpectrum:
    """The spectrum sampled on an increasing frequency grid."""
    w = np.asarray(frequencies, dtype=float).ravel()
    return DiscreteSpectrum(w, spectrum_at(model, w))


def _antiderivative(c: NDArray, poles: NDArray, w: NDArray) -> NDArray[np.float64]:
    # d/dw [-i c log(iw - p)] = c / (iw - p); Re(iw - p) > 0 keeps the log continuous
    z = 1j * w[:, None] - poles[None, :]
    return 2.0 * (np.log(np.abs(z)) @ c.imag + np.angle(z) @ c.real)


def _cumulative_values(model, c, w, one_sided):
    a = _antiderivative(c, model.poles, w)
    if one_sided:
        return 2.0 * (a - _antiderivative(c, model.poles, np.zeros(1))[0])
    return a + np.pi * np.sum(c.real)


def default_omega_max(model: RationalModel, one_sided: bool | None = None) -> float:
    """Smallest doubling of ``4 max|Im p| + 10 max|Re p|`` leaving < TAIL_MASS outside."""
    if one_sided is None:
        one_sided = model.is_conjugate_symmetric()
    c = _spectral_coefficients(model)
    energy = 2.0 * np.pi * np.sum(c).real
    w = 4.0 * np.max(np.abs(model.poles.imag)) + 10.0 * np.max(np.abs(model.poles.real))
    for _ in range(200):
        if one_sided:
            inside = _cumulative_values(model, c, np.array([w]), True)[0]
        else:
            v = _cumulative_values(model, c, np.array([-w, w]), False)
            inside = v[1] - v[0]
        if energy - inside <= TAIL_MASS * energy:
            return float(w)
        w *= 2.0
    return float(w)


def _default_grid(model, omega_max, one_sided, n_points, per_pole=255):
    poles = model.poles
    lo = 1e-3 * max(np.min(np.abs(poles)), 1e-12)
    base = np.geomspace(min(lo, omega_max / 10), omega_max, n_points - 1)
    theta = np.linspace(-np.pi / 2, np.pi / 2, per_pole + 2)[1:-1]
    centers = np.abs(poles.imag) if one_sided else poles.imag
    local = (centers[:, None] + np.abs(poles.real)[:, None] * np.tan(theta)[None, :]).ravel()
    if one_sided:
        pts = np.concatenate([[0.0], base, local])
        pts = pts[(pts >= 0) & (pts <= omega_max)]
    else:
        pts = np.concatenate([-base, [0.0], base, local])
        pts = pts[np.abs(pts) <= omega_max]
    return np.unique(pts)


def cumulative_spectrum(
    model: RationalModel,
    grid: ArrayLike | None = None,
    *,
    omega_max: float | None = None,
    one_sided: bool | None = None,
    n_points: int = 4096,
    atol: float = 1e-3,
) -> CumulativeSpectrum:
    """Cumulative spectrum, evaluated in closed form at the grid points.

    The default grid is log-dense on ``[0, omega_max]`` and adds, around every
    pole, the quantile points of that pole's Lorentzian peak so that narrow
    resonances are resolved.  ``omega_max`` defaults to ``default_omega_max``.
    """
    if one_sided is None:
        one_sided = model.is_conjugate_symmetric()
    c = _spectral_coefficients(model)
    energy = float(2.0 * np.pi * np.sum(c).real)
    if grid is None:
        if omega_max is None:
            omega_max = default_omega_max(model, one_sided)
        grid = _default_grid(model, omega_max, one_sided, n_points)
    else:
        grid = np.asarray(grid, dtype=float).ravel()
        if grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        if one_sided and grid[0] < 0:
            raise ValueError("one-sided grids start at or above zero")
    values = _cumulative_values(model, c, grid, one_sided)
    if one_sided:
        values[grid == 0.0] = 0.0
    values = np.maximum.accumulate(np.clip(values, 0.0, None))
    if abs(values[-1] - energy) > atol * energy:
        raise ValueError(
            f"grid ends at {grid[-1]:.4g} with F = {values[-1]:.6g}; "
            f"expected total energy {energy:.6g} within {atol}"
        )
    return CumulativeSpectrum(grid, values, energy, one_sided)


def inverse_cumulative(
    F: CumulativeSpectrum,
    eps: ArrayLike,
    *,
    clip: bool = False,
    model: RationalModel | None = None,
    iterations: int = 40,
):
    """Smallest grid-interpolated ``w`` with ``F(w) >= eps``.

    With ``clip=True`` levels outside ``[F(grid[0]), F(grid[-1])]`` map to the
    grid ends instead of raising.  Passing the ``model`` that produced ``F``
    polishes each interpolated quantile by safeguarded Newton steps on the
    closed-form cumulative spectrum, which matters in the far tails where the
    grid is coarse.
    """
    e = np.asarray(eps, dtype=float)
    lo, hi = F.values[0], F.values[-1]
    if not clip and np.any((e < min(lo, 0.0)) | (e > hi)):
        raise ValueError(f"levels must lie in [0, {hi}]")
    flat = np.atleast_1d(e).ravel()
    k = np.searchsorted(F.values, flat, side="left")
    out = np.empty_like(flat)
    at_start = k == 0
    past_end = k >= F.values.size
    mid = ~(at_start | past_end)
    out[at_start] = F.grid[0]
    out[past_end] = F.grid[-1]
    km = k[mid]
    v0, v1 = F.values[km - 1], F.values[km]
    g0, g1 = F.grid[km - 1], F.grid[km]
    out[mid] = g0 + (flat[mid] - v0) / (v1 - v0) * (g1 - g0)
    if model is not None and np.any(mid):
        out[mid] = _polish_quantiles(model, F.one_sided, flat[mid], out[mid], g0, g1, iterations)
    return out.reshape(e.shape) if e.ndim else float(out[0])


def _polish_quantiles(model, one_sided, levels, w, lo, hi, iterations):
    c = _spectral_coefficients(model)
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iterations):
        r = _cumulative_values(model, c, w, one_sided) - levels
        below = r < 0
        lo = np.where(below, w, lo)
        hi = np.where(below, hi, w)
        step = w - r / np.maximum(spectrum_at(model, w), np.finfo(float).tiny)
        # fall back to bisection whenever Newton leaves the bracket
        bad = ~((step > lo) & (step < hi))
        new = np.where(bad, 0.5 * (lo + hi), step)
        done = np.abs(new - w) <= 4 * np.finfo(float).eps * np.maximum(np.abs(w), 1.0)
        w = new
        if np.all(done):
            break
    return w
