"""Batch command-line front end.

Inputs are model JSON files, single-channel 16-bit PCM WAV files or CSV files
with one sample per line.  Signals are fitted on the fly with ``--order``.
Every numeric output names the metric, p and assignment mode: CSV files in a
leading ``#`` comment line, JSON files in a ``meta`` object.  Floats are
written with round-trip precision.

The thread count for pairwise work is read from ``ROOTDIST_THREADS``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import wave
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments
from .interpolation import (
    barycenter_ot,
    barycenter_rd,
    barycentric_coordinates,
    coordinates_rd_leastsquares,
    interpolate_rd,
    interpolate_w2,
)
from .learning import ClusterConfig, EmbeddingIndex, RootEmbedding, kbarycenter_cluster, knn_classify
from .metrics import MetricConfig, distance, pole_measure, w_discrete, welch_periodogram
from .model import RationalModel, Signal, fit_ar, normalize_energy
from .transport import ConvergenceError, DiscreteMeasure, TransportConfig

METRICS = ("rd", "wrd", "otrd", "w-closed", "w-welch")
THREADS_ENV = "ROOTDIST_THREADS"


class CliError(Exception):
    """Input or usage problem reported with exit status 1."""


# -- input ----------------------------------------------------------------


def read_wav(path) -> Signal:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise CliError(f"{path}: {w.getnchannels()} channels; only mono WAV is supported")
        if w.getsampwidth() != 2:
            raise CliError(f"{path}: {8 * w.getsampwidth()}-bit samples; only 16-bit PCM is supported")
        if w.getcomptype() != "NONE":
            raise CliError(f"{path}: compressed WAV is not supported")
        frames = w.readframes(w.getnframes())
        rate = w.getframerate()
    return Signal(np.frombuffer(frames, dtype="<i2").astype(float) / 32768.0, float(rate))


def write_wav(path, signal: Signal) -> None:
    x = np.clip(np.round(np.asarray(signal.samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(signal.sample_rate)))
        w.writeframes(x.tobytes())


def read_csv_signal(path, sample_rate: float) -> Signal:
    values = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line.split(",")[0]))
            except ValueError:
                if not values:  # tolerate one header row
                    continue
                raise CliError(f"{path}:{lineno}: not a number: {line!r}")
    return Signal(np.array(values), sample_rate)


def read_signal(path, sample_rate: float) -> Signal:
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path)
    return read_csv_signal(path, sample_rate)


def read_model(path) -> RationalModel:
    try:
        return RationalModel.load(path)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: invalid JSON: {e}") from e
    except ValueError as e:
        raise CliError(f"{path}: {e}") from e


def load_model(path, args) -> RationalModel:
    """Model JSON as stored, or a signal fitted with ``--order``."""
    path = Path(path)
    if not path.exists():
        raise CliError(f"{path}: no such file")
    if path.suffix.lower() == ".json":
        model = read_model(path)
    else:
        if not args.order:
            raise CliError(f"{path}: signal input needs --order")
        model = fit_ar(read_signal(path, args.sample_rate), args.order)
    return normalize_energy(model) if args.normalize == "on" else model


# -- output ---------------------------------------------------------------


def fmt(x) -> str:
    return repr(float(x))


def metric_meta(args) -> dict:
    return {"metric": args.metric, "p": args.p, "assignment": args.assignment}


def header(meta: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def csv_text(meta: dict, rows) -> str:
    buf = io.StringIO()
    buf.write(header(meta))
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def measure_dict(m: DiscreteMeasure) -> dict:
    atoms = np.asarray(m.atoms, dtype=complex)
    return {
        "atoms": [[float(a.real), float(a.imag)] for a in atoms],
        "masses": [float(x) for x in m.masses],
    }


def model_record(model: RationalModel) -> dict:
    return model.to_dict()


# -- metric configuration -------------------------------------------------


def metric_config(args) -> MetricConfig:
    transport = TransportConfig(p=args.p)
    solver = "exact"
    if args.rho is not None:
        solver = "unbalanced"
        transport = TransportConfig(
            p=args.p,
            regularization=args.sinkhorn_lambda or 100.0,
            marginal_penalty=args.rho,
        )
    elif args.sinkhorn_lambda is not None:
        solver = "sinkhorn"
        transport = TransportConfig(p=args.p, regularization=args.sinkhorn_lambda)
    variant = {"w-closed": "w_closed"}.get(args.metric, args.metric)
    return MetricConfig(p=args.p, assignment=args.assignment, variant=variant, transport=transport, solver=solver)


def pair_distance(a, b, args):
    """Raw distance between two inputs under the selected metric."""
    if args.metric == "w-welch":
        sa = welch_periodogram(read_signal(a, args.sample_rate), args.window)
        sb = welch_periodogram(read_signal(b, args.sample_rate), args.window)
        return w_discrete(sa, sb, args.p)
    return distance(load_model(a, args), load_model(b, args), metric_config(args))


def threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be an integer")


# -- commands -------------------------------------------------------------


def cmd_fit(args):
    if len(args.inputs) > 1 and args.out and Path(args.out).suffix == ".json":
        raise CliError("several inputs need --out to be a directory")
    if not args.order:
        raise CliError("fit needs --order")
    for path in args.inputs:
        model = fit_ar(read_signal(path, args.sample_rate), args.order)
        text = json_text(model_record(model))
        if len(args.inputs) == 1 and (not args.out or Path(args.out).suffix == ".json"):
            emit(text, args.out)
        else:
            emit(text, Path(args.out or ".") / (Path(path).stem + ".json"))


def cmd_dist(args):
    a, b = args.inputs
    res = pair_distance(a, b, args)
    emit(csv_text(metric_meta(args), [["a", "b", "distance", "raw"], [a, b, res.value, res.raw]]), args.out)


def cmd_distmat(args):
    names = args.inputs
    n = len(names)
    if args.metric == "w-welch":
        items = [welch_periodogram(read_signal(p, args.sample_rate), args.window) for p in names]
        dist = lambda i, j: w_discrete(items[i], items[j], args.p)  # noqa: E731
    else:
        items = [load_model(p, args) for p in names]
        cfg = metric_config(args)
        dist = lambda i, j: distance(items[i], items[j], cfg)  # noqa: E731
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    with ThreadPoolExecutor(threads()) as pool:
        values = list(pool.map(lambda ij: dist(*ij).value, pairs))
    D = np.zeros((n, n))
    for (i, j), v in zip(pairs, values):
        D[i, j] = D[j, i] = v
    meta = metric_meta(args)
    if args.out and Path(args.out).suffix == ".json":
        emit(json_text({"meta": meta, "names": names, "distances": D.tolist()}), args.out)
    else:
        rows = [[""] + names] + [[names[i]] + list(D[i]) for i in range(n)]
        emit(csv_text(meta, rows), args.out)


def _t_values(spec: str):
    t = np.array([float(x) for x in spec.split(",")])
    if np.any((t < 0) | (t > 1)):
        raise CliError("t values must lie in [0, 1]")
    return t


def cmd_interp(args):
    a, b = (load_model(p, args) for p in args.inputs)
    ts = _t_values(args.t)
    meta = metric_meta(args)
    if args.metric in ("rd", "wrd"):
        path = [{"t": float(t), "model": model_record(interpolate_rd(a, b, t, args.assignment, args.p))} for t in ts]
        emit(json_text({"meta": meta, "path": path}), args.out)
    elif args.metric == "w-closed":
        grid = np.linspace(0.0, args.grid_max, args.grid_points)
        dens = [interpolate_w2(a, b, t, grid).density for t in ts]
        rows = [["frequency"] + [f"t={fmt(t)}" for t in ts]]
        rows += [[grid[k]] + [d[k] for d in dens] for k in range(grid.size)]
        emit(csv_text(meta, rows), args.out)
    else:
        raise CliError(f"interp supports rd, wrd and w-closed, not {args.metric}")


def _weights(args, n):
    if args.weights is None:
        return np.full(n, 1.0 / n)
    w = np.array([float(x) for x in args.weights.split(",")])
    if w.size != n:
        raise CliError(f"{w.size} weights for {n} inputs")
    if np.any(w < 0) or w.sum() <= 0:
        raise CliError("weights must be nonnegative with a positive sum")
    return w / w.sum()


def cmd_bary(args):
    models = [load_model(p, args) for p in args.inputs]
    lam = _weights(args, len(models))
    meta = metric_meta(args)
    if args.metric in ("rd", "wrd"):
        model = barycenter_rd(models, lam, weighted=args.metric == "wrd")
        emit(json_text({"meta": meta, **model_record(model)}), args.out)
    elif args.metric == "otrd":
        res = barycenter_ot([pole_measure(m) for m in models], lam, TransportConfig(p=args.p))
        record = {"meta": meta, "objective": res.objective, "converged": res.converged,
                  "history": res.history, **measure_dict(res.measure)}
        emit(json_text(record), args.out)
    else:
        raise CliError(f"bary supports rd, wrd and otrd, not {args.metric}")


def cmd_project(args):
    query, *dictionary = (load_model(p, args) for p in args.inputs)
    if not dictionary:
        raise CliError("project needs a query and at least one dictionary entry")
    meta = metric_meta(args)
    if args.metric == "rd":
        coords = coordinates_rd_leastsquares(query, dictionary)
    elif args.metric == "otrd":
        coords = barycentric_coordinates(
            pole_measure(query), [pole_measure(m) for m in dictionary], TransportConfig(p=args.p)
        )
    else:
        raise CliError(f"project supports rd and otrd, not {args.metric}")
    emit(json_text({"meta": meta, **coords.to_dict()}), args.out)


def cmd_cluster(args):
    models = [load_model(p, args) for p in args.inputs]
    cfg = ClusterConfig(args.k, args.iterations, args.seed, TransportConfig(p=args.p))
    res = kbarycenter_cluster([pole_measure(m) for m in models], cfg)
    meta = metric_meta(args)
    rows = [["file", "cluster"]] + [[p, int(l)] for p, l in zip(args.inputs, res.labels)]
    if args.out:
        out = Path(args.out)
        emit(csv_text(meta, rows), out.with_suffix(".csv"))
        emit(json_text({"meta": meta, "objective": res.objective, "history": res.history}), out.with_suffix(".json"))
    else:
        emit(csv_text(meta, rows), None)


def cmd_classify(args):
    base = Path(args.train).parent
    train, labels = [], []
    with open(args.train, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "file":
                continue
            if len(row) < 2:
                raise CliError(f"{args.train}: rows must be 'file,label'")
            path = Path(row[0]) if Path(row[0]).is_absolute() else base / row[0]
            train.append(RootEmbedding.from_model(load_model(path, args), row[1]))
            labels.append(row[1])
    index = EmbeddingIndex(train, labels)
    rows = [["file", "label"]]
    for q in args.inputs:
        rows.append([q, knn_classify(RootEmbedding.from_model(load_model(q, args)), index, args.k)])
    emit(csv_text({"metric": "rd", "p": 2, "assignment": "sorted"}, rows), args.out)


def cmd_welch(args):
    (path,) = args.inputs
    spec = welch_periodogram(read_signal(path, args.sample_rate), args.window)
    rows = [["frequency", "density"]] + list(zip(spec.frequencies, spec.density))
    emit(csv_text({"metric": "w-welch", "window": args.window}, rows), args.out)


def _write(out_dir: Path, name: str, meta: dict, rows):
    emit(csv_text(meta, rows), out_dir / name)


def cmd_reproduce(args):
    out = Path(args.out or ".")
    fig = args.figure
    meta = {"metric": "all", "p": 2, "assignment": "sorted"}
    if fig == "fig4":
        res = experiments.fig4_sinusoids()
        cols = res.rescaled()
        keys = ["w_closed", "w_welch", "wrd", "otrd"]
        _write(out, "fig4.csv", meta, [["f"] + keys] + [[f] + [cols[k][i] for k in keys] for i, f in enumerate(res.parameter)])
        checks = [res.check]
    elif fig == "fig5":
        checks = []
        for kind in ("lowpass", "highpass"):
            res = experiments.fig5_filtered_noise(kind)
            keys = list(res.columns)
            rows = [["cutoff"] + keys] + [[c] + [res.columns[k][i] for k in keys] for i, c in enumerate(res.parameter)]
            _write(out, f"fig5_{kind}.csv", meta, rows)
            checks.append(res.check)
    elif fig == "fig6":
        res = experiments.fig6_correlations()
        keys = list(res.columns)
        n = len(res.columns[keys[0]])
        _write(out, "fig6.csv", {"metric": "all", "p": "1,2", "assignment": "sorted"},
               [keys] + [[res.columns[k][i] for k in keys] for i in range(n)])
        checks = [res.check]
    elif fig == "fig7":
        res = experiments.fig7_bandpass()
        rows = [["system", "pc1", "pc2", "welch_pc1", "welch_pc2"]]
        for i, s in enumerate(res.labels):
            rows.append([int(s), *res.pca.coordinates[i], *res.welch_pca.coordinates[i]])
        _write(out, "fig7.csv", {"metric": "rd", "p": 2, "assignment": "sorted"}, rows)
        checks = [res.check]
    elif fig == "fig10":
        res = experiments.fig10_projection()
        emit(json_text({"meta": {"metric": "otrd", "p": 2, "assignment": "sorted"}, **res.coordinates.to_dict()}),
             out / "fig10.json")
        checks = [res.check]
    elif fig == "fig11":
        res = experiments.fig11_unbalanced()
        G = res.plan.coupling
        tm = res.target.atoms
        rows = [["source_group", "source_pole"] + [_pole(t) for t in tm]]
        for i, s in enumerate(res.source.atoms):
            rows.append([int(res.source_groups[i]), _pole(s)] + list(G[i]))
        _write(out, "fig11.csv", {"metric": "otrd-unbalanced", "p": 2, "assignment": "transport"}, rows)
        checks = [res.check]
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown figure {fig}")
    failed = [c for c in checks if not c.passed]
    for c in checks:
        print(c.line())
    if failed:
        print("criterion violated: " + ", ".join(c.name for c in failed), file=sys.stderr)
        return 3
    return 0


def _pole(z) -> str:
    z = complex(z)
    return f"{z.real!r}{'+' if z.imag >= 0 else '-'}{abs(z.imag)!r}j"


COMMANDS = {
    "fit": cmd_fit,
    "dist": cmd_dist,
    "distmat": cmd_distmat,
    "interp": cmd_interp,
    "bary": cmd_bary,
    "project": cmd_project,
    "cluster": cmd_cluster,
    "classify": cmd_classify,
    "welch": cmd_welch,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=int, help="model order for signal inputs")
    common.add_argument("--metric", choices=METRICS, default="otrd")
    common.add_argument("--p", type=int, choices=(1, 2), default=2)
    common.add_argument("--assignment", choices=("sorted", "optimal"), default="sorted")
    common.add_argument("--sinkhorn-lambda", type=float, help="entropic transport with this lambda")
    common.add_argument("--rho", type=float, help="unbalanced transport with this marginal penalty")
    common.add_argument("--normalize", choices=("on", "off"), default="on")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (or directory)")
    common.add_argument("--sample-rate", type=float, default=1.0, help="sample rate of CSV signals")
    common.add_argument("--window", type=int, default=128, help="Welch window length")

    parser = argparse.ArgumentParser(prog="rootdist", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "dist", "distmat", "interp", "bary", "project", "cluster", "classify", "welch"):
        p = sub.add_parser(name, parents=[common])
        nargs = {"dist": 2, "interp": 2, "welch": 1}.get(name, "+")
        p.add_argument("inputs", nargs=nargs)
        if name == "interp":
            p.add_argument("--t", default="0,0.25,0.5,0.75,1", help="comma-separated t values")
            p.add_argument("--grid-max", type=float, default=np.pi)
            p.add_argument("--grid-points", type=int, default=1024)
        if name == "bary":
            p.add_argument("--weights", help="comma-separated barycentric weights")
        if name == "cluster":
            p.add_argument("--k", type=int, required=True)
            p.add_argument("--iterations", type=int, default=10)
        if name == "classify":
            p.add_argument("--train", required=True, help="CSV of 'file,label' rows")
            p.add_argument("--k", type=int, default=1)
    p = sub.add_parser("reproduce", parents=[common])
    p.add_argument("figure", choices=("fig4", "fig5", "fig6", "fig7", "fig10", "fig11"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        status = COMMANDS[args.command](args)
    except (CliError, ValueError, ConvergenceError, OSError, wave.Error) as e:
        print(f"rootdist {args.command}: error: {e}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
