"""Distances between rational spectra.

Root metrics act on pole locations:

* ``rd``   - root distance, sum of ``|q_i - z_i|^p`` over matched poles.
* ``wrd``  - weighted root distance, matched poles scaled by residue weights.
* ``otrd`` - transport between poles carrying their residue weights as mass.

Reference distances act on the spectra themselves:

* ``w_closed``   - 1-d Wasserstein distance via inverse cumulative spectra.
* ``w_discrete`` - 1-d Wasserstein distance between sampled spectra.

Every distance returns a ``DistanceResult`` holding the order-p objective
(``raw``) and its p-th root (``value``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy import signal as sps
from scipy.optimize import linear_sum_assignment

from .model import (
    DiscreteSpectrum,
    RationalModel,
    Signal,
    cumulative_spectrum,
    default_omega_max,
    inverse_cumulative,
    residues,
    spectral_energy,
)
from .transport import (
    DiscreteMeasure,
    TransportConfig,
    TransportPlan,
    exact_ot,
    sinkhorn,
    unbalanced_sinkhorn,
)

Assignment = Literal["sorted", "optimal"]
Variant = Literal["rd", "wrd", "otrd", "w_closed", "w_discrete"]
VARIANTS = ("rd", "wrd", "otrd", "w_closed", "w_discrete")

# energy deviation tolerated by the closed-form Wasserstein distance
NORMALIZATION_RTOL = 1e-6
# quadrature points over the quantile levels in [0, 1]
QUANTILE_POINTS = 2000
# extra geometric levels toward 0 and 1, where heavy spectral tails live;
# they span [1e-10, QUANTILE_END_SPAN] from each end
QUANTILE_END_POINTS = 800
QUANTILE_END_SPAN = 0.1


def quantile_levels() -> NDArray[np.float64]:
    """Uniform levels on [0, 1] plus geometric refinement near both ends."""
    end = np.geomspace(1e-10, QUANTILE_END_SPAN, QUANTILE_END_POINTS)
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, QUANTILE_POINTS), end, 1.0 - end]))


@dataclass(frozen=True)
class MetricConfig:
    """Metric selection.

    ``solver`` picks the transport routine for ``otrd``: ``"exact"`` (linear
    program), ``"sinkhorn"`` or ``"unbalanced"`` (KL-relaxed marginals on the
    raw residue weights).
    """

    p: float = 2.0
    assignment: Assignment = "sorted"
    variant: Variant = "otrd"
    transport: TransportConfig = field(default_factory=TransportConfig)
    solver: Literal["exact", "sinkhorn", "unbalanced"] = "exact"

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.assignment not in ("sorted", "optimal"):
            raise ValueError(f"unknown assignment {self.assignment!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.solver not in ("exact", "sinkhorn", "unbalanced"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class DistanceResult:
    value: float
    raw: float
    plan: TransportPlan | None = None

    @classmethod
    def from_raw(cls, raw: float, p: float, plan=None) -> "DistanceResult":
        raw = max(float(raw), 0.0)
        return cls(raw ** (1.0 / p), raw, plan)


def _config(config, **overrides):
    config = config or MetricConfig()
    if overrides:
        config = replace(config, **overrides)
    return config


def _check_orders(m1: RationalModel, m2: RationalModel):
    if m1.order != m2.order:
        raise ValueError(f"model orders differ: {m1.order} vs {m2.order}")


def _sort_order(poles: NDArray) -> NDArray[np.intp]:
    return np.lexsort((poles.real, poles.imag))


def sort_poles(model: RationalModel) -> RationalModel:
    """Reorder poles by imaginary part, ties broken by real part."""
    return model.replace(poles=model.poles[_sort_order(model.poles)])


def optimal_assignment(q, z, p: float = 2.0) -> NDArray[np.intp]:
    """Permutation ``s`` minimizing ``sum_i |q_i - z_s(i)|^p`` (Hungarian method)."""
    q = np.asarray(q)
    z = np.asarray(z)
    if q.shape != z.shape:
        raise ValueError(f"pole sets differ in size: {q.size} vs {z.size}")
    return _assign(np.abs(q[:, None] - z[None, :]) ** p)


def _assign(cost):
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.intp)
    perm[rows] = cols
    return perm


def sorted_assignment(q, z) -> NDArray[np.intp]:
    """Permutation pairing the k-th smallest pole of ``q`` with that of ``z``."""
    q = np.asarray(q)
    z = np.asarray(z)
    if q.shape != z.shape:
        raise ValueError(f"pole sets differ in size: {q.size} vs {z.size}")
    perm = np.empty(q.size, dtype=np.intp)
    perm[_sort_order(q)] = _sort_order(z)
    return perm


def assignment(q, z, mode: Assignment = "sorted", p: float = 2.0) -> NDArray[np.intp]:
    if mode == "sorted":
        return sorted_assignment(q, z)
    if mode == "optimal":
        return optimal_assignment(q, z, p)
    raise ValueError(f"unknown assignment {mode!r}")


def rd(m1: RationalModel, m2: RationalModel, config: MetricConfig | None = None) -> DistanceResult:
    config = _config(config)
    _check_orders(m1, m2)
    q, z = m1.poles, m2.poles
    perm = assignment(q, z, config.assignment, config.p)
    raw = np.sum(np.abs(q - z[perm]) ** config.p)
    return DistanceResult.from_raw(raw, config.p)


def _wrd_terms(q, wq, z, wz, p):
    beta = (1.0 - p) / 2.0
    return (wq * wz) ** beta * np.abs(wq * q - wz * z) ** p


def wrd(m1: RationalModel, m2: RationalModel, config: MetricConfig | None = None) -> DistanceResult:
    """Weighted root distance; optimal assignment minimizes the weighted sum itself."""
    config = _config(config)
    _check_orders(m1, m2)
    p = config.p
    q, z = m1.poles, m2.poles
    wq = residues(m1, p).weights
    wz = residues(m2, p).weights
    if config.assignment == "sorted":
        perm = sorted_assignment(q, z)
    else:
        cost = _wrd_terms(q[:, None], wq[:, None], z[None, :], wz[None, :], p)
        perm = _assign(cost)
    raw = np.sum(_wrd_terms(q, wq, z[perm], wz[perm], p))
    return DistanceResult.from_raw(raw, p)


def pole_measure(model: RationalModel, normalize: bool = True) -> DiscreteMeasure:
    """Poles as atoms carrying their residue weights as mass."""
    w = residues(model).weights
    return DiscreteMeasure(model.poles, w / w.sum() if normalize else w)


def otrd(m1: RationalModel, m2: RationalModel, config: MetricConfig | None = None) -> DistanceResult:
    """Transport distance between residue-weighted pole sets (orders may differ)."""
    config = _config(config)
    tconf = _transport_config(config)
    if config.solver == "unbalanced":
        plan = unbalanced_sinkhorn(pole_measure(m1, False), pole_measure(m2, False), tconf)
    else:
        solve = exact_ot if config.solver == "exact" else sinkhorn
        plan = solve(pole_measure(m1), pole_measure(m2), tconf)
    return DistanceResult.from_raw(plan.objective, config.p, plan)


def _transport_config(config: MetricConfig) -> TransportConfig:
    if config.transport.p == config.p:
        return config.transport
    return replace(config.transport, p=config.p)


def _require_normalized(model: RationalModel):
    e = spectral_energy(model)
    if abs(e - 1.0) > NORMALIZATION_RTOL:
        raise ValueError(f"model energy is {e:.8g}; normalize the model first")


def quantile_functions(m1: RationalModel, m2: RationalModel, levels):
    """Inverse cumulative spectra of both models on a shared frequency range."""
    one_sided = m1.is_conjugate_symmetric() and m2.is_conjugate_symmetric()
    wmax = max(default_omega_max(m1, one_sided), default_omega_max(m2, one_sided))
    F1 = cumulative_spectrum(m1, omega_max=wmax, one_sided=one_sided)
    F2 = cumulative_spectrum(m2, omega_max=wmax, one_sided=one_sided)
    return (
        inverse_cumulative(F1, levels, clip=True, model=m1),
        inverse_cumulative(F2, levels, clip=True, model=m2),
    )


def w_closed(m1: RationalModel, m2: RationalModel, config: MetricConfig | None = None) -> DistanceResult:
    """Wasserstein distance between unit-energy spectra from their quantile functions.

    Real-coefficient models are compared on the positive half-line with the
    mirrored mass folded in; otherwise the full frequency axis is used.
    """
    config = _config(config)
    _require_normalized(m1)
    _require_normalized(m2)
    levels = quantile_levels()
    w1, w2 = quantile_functions(m1, m2, levels)
    raw = np.trapezoid(np.abs(w1 - w2) ** config.p, levels)
    return DistanceResult.from_raw(raw, config.p)


def w_discrete(
    s1: DiscreteSpectrum, s2: DiscreteSpectrum, p: float = 2.0, normalize: bool = True
) -> DistanceResult:
    """1-d transport between histograms by coupling their quantiles in one pass.

    Density values are taken as the masses of the grid atoms.  Without
    ``normalize`` both spectra must already carry the same total mass.
    """
    x, a = s1.frequencies, s1.density
    y, b = s2.frequencies, s2.density
    ta, tb = a.sum(), b.sum()
    if ta <= 0 or tb <= 0:
        raise ValueError("spectrum has zero total mass")
    if normalize:
        a, b, total = a / ta, b / tb, 1.0
    else:
        if abs(ta - tb) > 1e-9 * max(ta, tb):
            raise ValueError(f"total masses differ: {ta!r} vs {tb!r}")
        total = ta
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca[-1] = cb[-1] = total
    # merged breakpoints of both cumulative mass functions
    levels = np.union1d(ca, cb)
    widths = np.diff(levels, prepend=0.0)
    mids = levels - 0.5 * widths
    keep = widths > 0
    ia = np.minimum(np.searchsorted(ca, mids[keep], side="right"), x.size - 1)
    ib = np.minimum(np.searchsorted(cb, mids[keep], side="right"), y.size - 1)
    raw = np.sum(widths[keep] * np.abs(x[ia] - y[ib]) ** p)
    return DistanceResult.from_raw(raw, p)


def welch_periodogram(signal: Signal, window_length: int = 128) -> DiscreteSpectrum:
    """Averaged Hann-windowed periodogram with 50% overlap, one-sided, per rad/s."""
    window_length = int(window_length)
    if window_length < 2:
        raise ValueError("window_length must be at least 2")
    if window_length > len(signal):
        raise ValueError(f"window of {window_length} exceeds signal length {len(signal)}")
    f, pxx = sps.welch(
        signal.samples,
        fs=signal.sample_rate,
        window="hann",
        nperseg=window_length,
        noverlap=window_length // 2,
        scaling="density",
    )
    return DiscreteSpectrum(2.0 * np.pi * f, pxx / (2.0 * np.pi))


def distance(m1: RationalModel, m2: RationalModel, config: MetricConfig | None = None) -> DistanceResult:
    """Dispatch on ``config.variant`` for model inputs."""
    config = _config(config)
    if config.variant == "w_discrete":
        raise ValueError("w_discrete compares sampled spectra; use w_discrete() directly")
    return {"rd": rd, "wrd": wrd, "otrd": otrd, "w_closed": w_closed}[config.variant](
        m1, m2, config
    )
