"""Synthetic experiments comparing root distances with Wasserstein distances.

Each experiment generates its own data from a fixed seed, returns the numbers
that would be plotted and a ``Check`` stating whether the expected behaviour
was observed.  The CLI ``reproduce`` command and the acceptance tests call
these functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import signal as sps
from scipy.spatial.distance import pdist, squareform

from .interpolation import barycentric_coordinates
from .learning import (
    ClusterConfig,
    EmbeddingIndex,
    RootEmbedding,
    kbarycenter_cluster,
    knn_classify,
    label_agreement,
    pca_embed,
    silhouette,
)
from .metrics import (
    MetricConfig,
    otrd,
    pole_measure,
    rd,
    w_closed,
    w_discrete,
    welch_periodogram,
    wrd,
)
from .model import RationalModel, Signal, fit_ar, normalize_energy
from .transport import DiscreteMeasure, TransportConfig, unbalanced_sinkhorn


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.detail})"


def conjugate_model(half_poles, sample_rate: float = 1.0) -> RationalModel:
    """Unit-energy model with the given upper-half-plane poles and their conjugates."""
    p = np.atleast_1d(np.asarray(half_poles, dtype=complex))
    return normalize_energy(RationalModel(np.concatenate([p, p.conj()]), 1.0, sample_rate))


def simulate_ar(model: RationalModel, length: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """White noise through the sampled all-pole filter, scaled to unit variance."""
    a = np.real(np.poly(np.exp(model.poles / model.sample_rate)))
    x = sps.lfilter([1.0], a, rng.standard_normal(length))
    return x / x.std()


def count_inversions(x, d, center) -> int:
    """Decreases of ``d`` as ``|x - center|`` grows, counted on each side of ``center``."""
    x = np.asarray(x)
    d = np.asarray(d)
    total = 0
    for side in (x < center, x > center):
        idx = np.flatnonzero(side)
        order = idx[np.argsort(np.abs(x[idx] - center))]
        total += int(np.sum(np.diff(d[order]) < 0))
    return total


def _corr(a, b) -> float:
    return float(np.corrcoef(a, b)[0, 1])


# -- sinusoid sweep ---------------------------------------------------------


@dataclass
class SweepResult:
    parameter: NDArray[np.float64]
    columns: dict[str, NDArray[np.float64]]
    check: Check

    def rescaled(self) -> dict[str, NDArray[np.float64]]:
        """Every column divided by its maximum."""
        return {k: v / v.max() for k, v in self.columns.items()}


def fig4_sinusoids(f0: float = 0.1, n_points: int = 40, length: int = 1000, window: int = 128) -> SweepResult:
    """Order-2 fits of ``sin(2 pi f t)`` against a fixed ``f0`` for f in [0.02, 0.3]."""
    t = np.arange(length)
    sig = lambda f: Signal(np.sin(2 * np.pi * f * t))  # noqa: E731
    ref = fit_ar(sig(f0), 2)
    ref_welch = welch_periodogram(sig(f0), window)
    freqs = np.linspace(0.02, 0.3, n_points)
    cols: dict[str, list] = {"w_closed": [], "w_welch": [], "wrd": [], "otrd": []}
    for f in freqs:
        m = fit_ar(sig(f), 2)
        cols["w_closed"].append(w_closed(ref, m).raw)
        cols["w_welch"].append(w_discrete(ref_welch, welch_periodogram(sig(f), window)).raw)
        cols["wrd"].append(wrd(ref, m).raw)
        cols["otrd"].append(otrd(ref, m).raw)
    cols = {k: np.array(v) for k, v in cols.items()}
    inv = {k: count_inversions(freqs, cols[k], f0) for k in ("wrd", "otrd")}
    corr = {k: _corr(cols[k], cols["w_closed"]) for k in ("wrd", "otrd")}
    ok = all(v == 0 for v in inv.values()) and all(v >= 0.99 for v in corr.values())
    detail = ", ".join(f"{k}: inversions={inv[k]} r={corr[k]:.4f}" for k in inv)
    return SweepResult(freqs, cols, Check("fig4", ok, detail, {"inversions": inv, "pearson": corr}))


# -- filtered-noise sweep ---------------------------------------------------


def fig5_filtered_noise(
    kind: str = "lowpass",
    f0: float = 0.1,
    n_points: int = 30,
    length: int = 20000,
    order: int = 6,
    seed: int = 0,
) -> SweepResult:
    """Order-6 fits of one noise realization through 4th-order Butterworth filters.

    The reference uses cutoff ``f0``; the sweep spans cutoffs in [0.02, 0.4]
    (cycles per sample).  Sampling noise is allowed one inversion per distance.
    """
    btype = {"lowpass": "low", "highpass": "high"}[kind]
    e = np.random.default_rng(seed).standard_normal(length)

    def fit(c):
        b, a = sps.butter(4, c / 0.5, btype=btype)
        return fit_ar(Signal(sps.lfilter(b, a, e)), order)

    ref = fit(f0)
    cutoffs = np.linspace(0.02, 0.4, n_points)
    cols: dict[str, list] = {"rd": [], "wrd": [], "otrd": [], "w_closed": []}
    for c in cutoffs:
        m = fit(c)
        cols["rd"].append(rd(ref, m).raw)
        cols["wrd"].append(wrd(ref, m).raw)
        cols["otrd"].append(otrd(ref, m).raw)
        cols["w_closed"].append(w_closed(ref, m).raw)
    cols = {k: np.array(v) for k, v in cols.items()}
    inv = {k: count_inversions(cutoffs, cols[k], f0) for k in ("rd", "wrd", "otrd")}
    ok = all(v <= 1 for v in inv.values())
    detail = f"{kind} inversions " + ", ".join(f"{k}={v}" for k, v in inv.items())
    return SweepResult(cutoffs, cols, Check(f"fig5-{kind}", ok, detail, {"inversions": inv}))


# -- approximation quality on random pairs -----------------------------------


def random_resonant_model(rng: np.random.Generator, order: int = 10) -> RationalModel:
    """Conjugate pairs with imaginary parts in [0.1, 3] and damping ratio |Re|/Im in [0.01, 0.1]."""
    im = rng.uniform(0.1, 3.0, order // 2)
    return conjugate_model(-rng.uniform(0.01, 0.1, im.size) * im + 1j * im)


@dataclass
class CorrelationResult:
    columns: dict[str, NDArray[np.float64]]
    pearson: dict[str, float]
    check: Check


def fig6_correlations(n_pairs: int = 100, order: int = 10, seed: int = 0) -> CorrelationResult:
    """Log-log agreement of root distances with the closed-form Wasserstein distance."""
    rng = np.random.default_rng(seed)
    cols: dict[str, list] = {k: [] for k in ("w2", "otrd2", "wrd2", "w1", "otrd1", "wrd1")}
    for _ in range(n_pairs):
        m1, m2 = random_resonant_model(rng, order), random_resonant_model(rng, order)
        for p in (1, 2):
            cfg = MetricConfig(p=p)
            cols[f"w{p}"].append(w_closed(m1, m2, cfg).raw)
            cols[f"otrd{p}"].append(otrd(m1, m2, cfg).raw)
            cols[f"wrd{p}"].append(wrd(m1, m2, cfg).raw)
    cols = {k: np.array(v) for k, v in cols.items()}
    L = np.log
    pearson = {
        k: _corr(L(cols[k]), L(cols[f"w{k[-1]}"])) for k in ("otrd2", "wrd2", "otrd1", "wrd1")
    }
    ok_ot = pearson["otrd2"] >= 0.9
    ok_wrd = pearson["wrd1"] >= 0.85
    detail = f"log-otrd vs log-W2 r={pearson['otrd2']:.3f} (>=0.9), log-wrd p=1 vs log-W1 r={pearson['wrd1']:.3f} (>=0.85)"
    return CorrelationResult(
        cols, pearson, Check("fig6", ok_ot and ok_wrd, detail, {"otrd": ok_ot, "wrd_p1": ok_wrd})
    )


# -- root embeddings of bandpass systems -------------------------------------


@dataclass
class EmbeddingResult:
    embeddings: list[RootEmbedding]
    labels: NDArray[np.intp]
    pca: object
    welch_pca: object
    check: Check


def fig7_bandpass(
    n_systems: int = 50, per_system: int = 50, length: int = 500, order: int = 6, seed: int = 0
) -> EmbeddingResult:
    """Root vectors of noise filtered by random bandpass systems, and their 2-d PCA.

    Welch spectra (window 128) of the same signals are embedded likewise for
    comparison.
    """
    rng = np.random.default_rng(seed)
    emb, welch, labels = [], [], []
    for s in range(n_systems):
        lo = rng.uniform(0.02, 0.4)
        hi = min(lo + rng.uniform(0.02, 0.1), 0.48)
        b, a = sps.butter(2, [lo / 0.5, hi / 0.5], btype="band")
        for _ in range(per_system):
            x = Signal(sps.lfilter(b, a, rng.standard_normal(length)))
            emb.append(RootEmbedding.from_model(fit_ar(x, order), s))
            spec = welch_periodogram(x, 128)
            welch.append(spec.density / spec.density.sum())
            labels.append(s)
    labels = np.array(labels)
    X = np.stack([e.vector for e in emb])
    D = squareform(pdist(X))
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(labels.size, dtype=bool)
    within = float(D[same & off].mean())
    between = float(D[~same].mean())
    pca = pca_embed(emb, 2)
    sil = silhouette(pca.coordinates, labels)
    welch_pca = pca_embed(welch, 2)
    ok = within < between and sil > 0
    detail = f"mean RD within={within:.4g} between={between:.4g}, silhouette={sil:.3f}"
    values = {"within": within, "between": between, "silhouette": sil}
    return EmbeddingResult(emb, labels, pca, welch_pca, Check("fig7", ok, detail, values))


# -- dictionary projection and unbalanced transport ---------------------------

SIGNATURE_SAMPLE_RATE = 10.0
SIGNATURES = ((1.0, 2.0), (3.5, 4.5), (9.0, 10.0))
SIGNATURE_DAMPING = -0.1
NOISE_POLE = -0.1 + 6.5j


def signature_models() -> list[RationalModel]:
    """Three resonance signatures of two pole pairs each."""
    return [
        conjugate_model(SIGNATURE_DAMPING + 1j * np.array(ims), SIGNATURE_SAMPLE_RATE)
        for ims in SIGNATURES
    ]


@dataclass
class ProjectionResult:
    query: RationalModel
    coordinates: object
    check: Check


def fig10_projection(length: int = 20000, order: int = 12, seed: int = 0) -> ProjectionResult:
    """Coordinates of a model fit to signal 1 + signal 2 over the signature dictionary."""
    rng = np.random.default_rng(seed)
    sigs = signature_models()
    x = simulate_ar(sigs[0], length, rng) + simulate_ar(sigs[1], length, rng)
    query = fit_ar(Signal(x, SIGNATURE_SAMPLE_RATE), order)
    coords = barycentric_coordinates(pole_measure(query), [pole_measure(m) for m in sigs])
    lam = coords.weights
    ok = lam[0] + lam[1] >= 0.8 and lam[2] <= 0.2
    detail = f"lambda={np.round(lam, 3).tolist()}, l1+l2={lam[0] + lam[1]:.3f}"
    return ProjectionResult(query, coords, Check("fig10", ok, detail, {"lambda": lam.tolist()}))


@dataclass
class UnbalancedResult:
    source: DiscreteMeasure
    target: DiscreteMeasure
    plan: object
    source_groups: NDArray[np.intp]
    check: Check


def fig11_unbalanced(rho: float = 1.0, regularization: float = 100.0) -> UnbalancedResult:
    """Unbalanced transport from the three signatures onto signatures 1, 2 plus a noise pole.

    Every signature and the noise pair carry unit mass.
    """
    dic = [pole_measure(m) for m in signature_models()]
    source = DiscreteMeasure(
        np.concatenate([d.atoms for d in dic]), np.concatenate([d.masses for d in dic])
    )
    noise = np.array([NOISE_POLE, np.conj(NOISE_POLE)])
    target = DiscreteMeasure(
        np.concatenate([dic[0].atoms, dic[1].atoms, noise]),
        np.concatenate([dic[0].masses, dic[1].masses, [0.5, 0.5]]),
    )
    groups = np.repeat(np.arange(len(dic)), [len(d) for d in dic])
    config = TransportConfig(p=2, regularization=regularization, marginal_penalty=rho, max_iterations=100000)
    plan = unbalanced_sinkhorn(source, target, config)
    total = source.total_mass
    to_noise = float(plan.coupling[:, -2:].sum() / total)
    from_unused = float(plan.coupling[groups == 2].sum() / total)
    ok = to_noise < 0.05 and from_unused < 0.05
    detail = f"to noise={to_noise:.2%}, from signature 3={from_unused:.2%} of total mass"
    values = {"to_noise": to_noise, "from_unused": from_unused}
    return UnbalancedResult(source, target, plan, groups, Check("fig11", ok, detail, values))


# -- classification and clustering --------------------------------------------


def signature_corpus(
    per_class: int = 40, length: int = 2000, order: int = 4, jitter: float = 0.03, seed: int = 0
):
    """Models fit to noise-driven realizations of jittered signatures; returns (models, labels)."""
    rng = np.random.default_rng(seed)
    models, labels = [], []
    for c, ims in enumerate(SIGNATURES):
        for _ in range(per_class):
            im = np.array(ims) * (1 + jitter * rng.standard_normal(len(ims)))
            truth = conjugate_model(SIGNATURE_DAMPING + 1j * im, SIGNATURE_SAMPLE_RATE)
            x = simulate_ar(truth, length, rng)
            models.append(fit_ar(Signal(x, SIGNATURE_SAMPLE_RATE), order))
            labels.append(c)
    return models, np.array(labels)


@dataclass
class LearningResult:
    knn_accuracy: float
    agreements: list[float]
    histories: list[list[float]]
    check: Check


def classification_and_clustering(seed: int = 0, cluster_seeds=(0, 1, 2)) -> LearningResult:
    """1-NN on root vectors (even/odd split) and K-barycenter clustering on 20 per class."""
    models, labels = signature_corpus(seed=seed)
    train = np.arange(labels.size) % 2 == 0
    index = EmbeddingIndex([RootEmbedding.from_model(m, l) for m, l in zip(models[::2], labels[::2])])
    pred = np.array([knn_classify(RootEmbedding.from_model(m), index, 1) for m in models[1::2]])
    acc = float(np.mean(pred == labels[~train]))
    sel = np.concatenate([np.flatnonzero(labels == c)[:20] for c in range(len(SIGNATURES))])
    measures = [pole_measure(models[i]) for i in sel]
    agreements, histories = [], []
    for s in cluster_seeds:
        res = kbarycenter_cluster(measures, ClusterConfig(len(SIGNATURES), 10, s))
        agreements.append(label_agreement(res.labels, labels[sel]))
        histories.append(res.history)
    monotone = all(np.all(np.diff(h) <= 1e-12 * max(h[0], 1.0)) for h in histories)
    ok = acc == 1.0 and min(agreements) >= 0.95 and monotone
    detail = f"knn accuracy={acc:.3f}, cluster agreement min={min(agreements):.3f}, monotone={monotone}"
    return LearningResult(acc, agreements, histories, Check("learning", ok, detail))
