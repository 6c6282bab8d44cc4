"""Command-line surface: ingestion, config, dispatch, report emission.

Subcommands: score, selective, ood, disentangle, validate, synth.

Two ingestion formats:
  * JSONL: one object per input,
    ``{"id": str?, "label": int?, "samples": [[K floats] x S]}``;
    ids and labels are all-or-nothing across records.
  * binary: magic ``EPUC`` + version byte 1, little-endian u32 N, S, K,
    a flag byte (bit 0: labels present), N*S*K little-endian float64 in
    input-major pass-major order, then N u32 labels if flagged.

All floating-point output is serialised with 9 significant digits, so
emitted files re-ingest to identical in-memory values and golden tests are
byte-stable. Every command is deterministic given its config (seeds
included) and independent of the thread count.

Exit codes: 0 success, 1 validation failure (the validate command found a
failing check), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import disentangle as dis
from . import metrics, moments, ood, selective, synth
from .core import (
    POLICY_NAMES,
    ClassPartition,
    EpucError,
    LabelSet,
    SampleTensor,
    ValidationError,
    make_label_set,
    validate_tensor,
)

_MAGIC = b"EPUC"
_VERSION = 1


class ParseError(EpucError):
    """Input file could not be parsed."""


def fmt(x) -> str:
    """Canonical 9-significant-digit rendering of a float."""
    return format(float(x), ".9g")


def qfloat(x) -> float:
    """Float quantised to its 9-significant-digit serialisation."""
    return float(fmt(x))


# ---------------------------------------------------------------------------
# ingestion and emission
# ---------------------------------------------------------------------------


def _ingest_jsonl(path: Path) -> tuple[SampleTensor, np.ndarray | None]:
    rows, ids, labels = [], [], []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(rec, dict) or "samples" not in rec:
                raise ParseError(f"{path}:{lineno}: record must be an object with 'samples'")
            rows.append(rec["samples"])
            ids.append(rec.get("id"))
            labels.append(rec.get("label"))
    if not rows:
        raise ParseError(f"{path}: no records")
    try:
        values = np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: ragged 'samples' arrays ({exc})") from exc
    if values.ndim != 3:
        raise ParseError(f"{path}: 'samples' must be S x K per record")
    with_id = [i for i, v in enumerate(ids) if v is not None]
    if with_id and len(with_id) != len(ids):
        raise ParseError(f"{path}: 'id' present on some records but not all")
    with_label = [i for i, v in enumerate(labels) if v is not None]
    if with_label and len(with_label) != len(labels):
        raise ParseError(f"{path}: 'label' present on some records but not all")
    tensor = validate_tensor(values, tuple(ids) if with_id else None)
    lab = np.asarray(labels, dtype=np.int64) if with_label else None
    return tensor, lab


def _ingest_binary(path: Path) -> tuple[SampleTensor, np.ndarray | None]:
    blob = path.read_bytes()
    head = struct.calcsize("<4sB3IB")
    if len(blob) < head:
        raise ParseError(f"{path}: truncated header")
    magic, version, n, s, k, flags = struct.unpack_from("<4sB3IB", blob)
    if magic != _MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    has_labels = bool(flags & 1)
    expect = head + 8 * n * s * k + (4 * n if has_labels else 0)
    if len(blob) != expect:
        raise ParseError(
            f"{path}: size {len(blob)} does not match header dimensions "
            f"N={n} S={s} K={k} (expected {expect})"
        )
    values = np.frombuffer(blob, dtype="<f8", count=n * s * k, offset=head)
    values = values.reshape(n, s, k).astype(np.float64)
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="<u4", offset=head + 8 * n * s * k).astype(np.int64)
    return validate_tensor(values), labels


def ingest(path) -> tuple[SampleTensor, np.ndarray | None]:
    """Load a sample tensor (and labels, if present) from either format."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _MAGIC:
        return _ingest_binary(path)
    return _ingest_jsonl(path)


def write_jsonl(path, tensor: SampleTensor, labels=None) -> None:
    path = Path(path)
    ids = tensor.input_ids or [f"i{i:06d}" for i in range(tensor.n_inputs)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(tensor.n_inputs):
            rec = {"id": ids[i]}
            if labels is not None:
                rec["label"] = int(labels[i])
            rec["samples"] = [
                [qfloat(v) for v in row] for row in tensor.values[i]
            ]
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def write_binary(path, tensor: SampleTensor, labels=None) -> None:
    n, s, k = tensor.values.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sB3IB", _MAGIC, _VERSION, n, s, k,
                             1 if labels is not None else 0))
        fh.write(tensor.values.astype("<f8").tobytes(order="C"))
        if labels is not None:
            fh.write(np.asarray(labels, dtype="<u4").tobytes())


def _write_csv(path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a command run depends on.

    Defaults match the reported evaluation settings: 200 coverage levels,
    200 bootstrap resamples, reliability threshold 0.3.
    """

    inputs: tuple[str, ...] = ()
    safe: tuple[int, ...] | None = None
    critical: tuple[int, ...] = ()
    grid_size: int = 200
    n_resamples: int = 200
    seed: int = 0
    threshold: float = 0.3
    out_dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")
    threads: int = 1

    def __post_init__(self):
        if self.grid_size < 1 or self.n_resamples < 1:
            raise ValidationError("grid size and resample count must be >= 1")
        if self.threads < 1:
            raise ValidationError("thread count must be >= 1")
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ValidationError(f"unknown output formats {sorted(bad)}")

    def partition(self, n_classes: int) -> ClassPartition:
        critical = frozenset(self.critical)
        if self.safe is None:
            safe = frozenset(range(n_classes)) - critical
        else:
            safe = frozenset(self.safe)
        part = ClassPartition(safe=safe, critical=critical)
        part.check_classes(n_classes)
        return part


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.strip().split(","))


def _load_config(args) -> dict:
    raw = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ParseError(f"{path}: no such config file")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ParseError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ParseError(f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def _build_config(args, inputs: tuple[str, ...]) -> RunConfig:
    raw = _load_config(args)
    cfg = {}
    cfg["inputs"] = inputs or tuple(raw.get("inputs", ()))
    for key, cast in (
        ("grid_size", int),
        ("n_resamples", int),
        ("seed", int),
        ("threshold", float),
        ("out_dir", str),
        ("threads", int),
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = cast(flag)
        elif key in raw:
            cfg[key] = cast(raw[key])
    for key in ("safe", "critical"):
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = _int_list(flag)
        elif key in raw and raw[key] is not None:
            cfg[key] = tuple(int(i) for i in raw[key])
    flag = getattr(args, "formats", None)
    if flag is not None:
        cfg["formats"] = tuple(t.strip() for t in flag.split(",") if t.strip())
    elif "formats" in raw:
        cfg["formats"] = tuple(raw["formats"])
    if cfg.get("threads", 1) == 0:
        cfg["threads"] = os.cpu_count() or 1
    return RunConfig(**cfg)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def _score_rows(tensor: SampleTensor, partition: ClassPartition,
                labels: np.ndarray | None, threshold: float, threads: int):
    reports = metrics.report_all(tensor, partition, threads=threads)
    summaries = moments.compute_all_moments(tensor)
    means = np.vstack([s.mean for s in summaries])
    predicted = np.argmax(means, axis=1)
    ids = tensor.input_ids or tuple(f"i{i:06d}" for i in range(tensor.n_inputs))
    k = tensor.n_classes
    header = (
        ["id", "label", "predicted", "entropy_mean", "aleatoric", "mi", "c_sum"]
        + [f"c_{j}" for j in range(k)]
        + [f"rho_{j}" for j in range(k)]
        + ["cbec"]
        + [f"policy_{name}" for name in POLICY_NAMES]
        + [f"reliable_{j}" for j in range(k)]
    )
    rows = []
    for i, rep in enumerate(reports):
        row = [
            ids[i],
            str(int(labels[i])) if labels is not None else "",
            str(int(predicted[i])),
            fmt(rep.entropy_of_mean),
            fmt(rep.expected_entropy),
            fmt(rep.mutual_information),
            fmt(rep.c_sum),
        ]
        row += [fmt(v) for v in rep.c_vector]
        row += [fmt(v) for v in rep.rho]
        row.append(fmt(rep.policy_scores["CBEC"]))
        row += [fmt(rep.policy_scores[name]) for name in POLICY_NAMES]
        row += ["1" if v < threshold else "0" for v in rep.rho]
        rows.append(row)
    return header, rows, reports, summaries


def cmd_score(cfg: RunConfig) -> int:
    if len(cfg.inputs) != 1:
        raise ValidationError("score needs exactly one input path")
    tensor, labels = ingest(cfg.inputs[0])
    partition = cfg.partition(tensor.n_classes)
    header, rows, _, _ = _score_rows(tensor, partition, labels,
                                     cfg.threshold, cfg.threads)
    out = _out_dir(cfg)
    if "csv" in cfg.formats:
        _write_csv(out / "scores.csv", header, rows)
    if "json" in cfg.formats:
        payload = {
            "n_inputs": tensor.n_inputs,
            "n_samples": tensor.n_samples,
            "n_classes": tensor.n_classes,
            "threshold": qfloat(cfg.threshold),
            "rows": [dict(zip(header, row)) for row in rows],
        }
        _write_json(out / "scores.json", payload)
    return 0


# ---------------------------------------------------------------------------
# selective
# ---------------------------------------------------------------------------


def cmd_selective(cfg: RunConfig) -> int:
    if len(cfg.inputs) != 1:
        raise ValidationError("selective needs exactly one input path")
    tensor, raw_labels = ingest(cfg.inputs[0])
    if raw_labels is None:
        raise ValidationError("selective evaluation needs labels in the input file")
    partition = cfg.partition(tensor.n_classes)
    reports = metrics.report_all(tensor, partition, threads=cfg.threads)
    summaries = moments.compute_all_moments(tensor)
    means = np.vstack([s.mean for s in summaries])
    labels = make_label_set(raw_labels, means)
    out = _out_dir(cfg)

    scores = {
        name: np.array([r.policy_scores[name] for r in reports])
        for name in POLICY_NAMES
    }
    point_ausc = {}
    for name in POLICY_NAMES:
        order = selective.deferral_order(scores[name])
        curve = selective.risk_curve(order, labels, partition,
                                     grid_size=cfg.grid_size, policy_name=name)
        point_ausc[name] = selective.ausc(curve, "critical_fnr")
        rows = [
            [
                fmt(curve.coverage_grid[g]),
                fmt(curve.critical_fnr[g]),
                fmt(curve.critical_err[g]),
                fmt(curve.accuracy[g]),
                fmt(curve.macro_f1[g]),
                str(int(curve.kept_total[g])),
                str(int(curve.kept_critical[g])),
            ]
            for g in range(cfg.grid_size)
        ]
        _write_csv(
            out / f"curve_{name}.csv",
            ["coverage", "critical_fnr", "critical_err", "accuracy",
             "macro_f1", "kept_total", "kept_critical"],
            rows,
        )

    summary = selective.bootstrap(
        scores, labels, partition, n_resamples=cfg.n_resamples,
        seed=cfg.seed, grid_size=cfg.grid_size, threads=cfg.threads,
    )
    _write_json(out / "bootstrap_summary.json", {
        "seed": summary.seed,
        "n_resamples": summary.n_resamples,
        "risk_field": summary.risk_field,
        "grid_size": cfg.grid_size,
        "policies": list(summary.policies),
        "ausc_point": {n: qfloat(point_ausc[n]) for n in summary.policies},
        "ausc_mean": {n: qfloat(v) for n, v in zip(summary.policies, summary.ausc_mean)},
        "ausc_std": {n: qfloat(v) for n, v in zip(summary.policies, summary.ausc_std)},
        "ausc_ci95": {
            n: [qfloat(lo), qfloat(hi)]
            for n, (lo, hi) in zip(summary.policies, summary.ausc_ci95)
        },
        "win_matrix": [[qfloat(v) for v in row] for row in summary.win_matrix],
    })

    k = tensor.n_classes
    profiles = selective.epistemic_profiles(reports, labels)
    _write_csv(
        out / "profiles.csv",
        ["true_class", "count"] + [f"share_{j}" for j in range(k)],
        [
            [str(i), str(int(profiles.counts[i]))]
            + ([fmt(v) for v in profiles.values[i]] if profiles.counts[i] else [""] * k)
            for i in range(k)
        ],
    )
    signatures = selective.error_signatures(reports, labels)
    _write_csv(
        out / "signatures.csv",
        ["true_class", "predicted_class", "count"] + [f"c_{j}" for j in range(k)],
        [
            [str(i), str(j), str(cell.count)] + [fmt(v) for v in cell.c_mean]
            for (i, j), cell in sorted(signatures.items())
        ],
    )
    confusion = selective.epistemic_confusion(
        [r.c_vector for r in reports], [s.correlation for s in summaries]
    )
    _write_csv(
        out / "confusion.csv",
        ["class"] + [f"e_{j}" for j in range(k)],
        [[str(i)] + [fmt(v) for v in confusion.entries[i]] for i in range(k)],
    )
    reliability = selective.reliability_summary(reports, labels, cfg.threshold)
    _write_csv(
        out / "reliability.csv",
        ["class", "count", "median", "mean", "p90", "fraction_below"],
        [
            [str(i), str(st.count), fmt(st.median), fmt(st.mean),
             fmt(st.p90), fmt(st.fraction_below)]
            if st is not None else [str(i), "0", "", "", "", ""]
            for i, st in enumerate(reliability)
        ],
    )
    return 0


# ---------------------------------------------------------------------------
# ood
# ---------------------------------------------------------------------------


def _ood_per_input(tensor: SampleTensor, threads: int):
    """MI, negative max-probability, variance sum, C vector per input.

    Partition-free: the OoD metrics never target critical classes.
    """

    def one(i):
        samples = tensor.values[i]
        summary = moments.compute_moments(tensor, i)
        c = metrics.c_vector(summary)
        return (
            metrics.mutual_information_exact(samples),
            max(0.0, 1.0 - float(summary.mean.max())),
            float(summary.variance.sum()),
            c,
        )

    idx = range(tensor.n_inputs)
    if threads <= 1 or tensor.n_inputs < 2:
        rows = [one(i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, idx))
    mi = np.array([r[0] for r in rows])
    neg_msp = np.array([r[1] for r in rows])
    euvar = np.array([r[2] for r in rows])
    c = np.vstack([r[3] for r in rows])
    return {"NegMSP": neg_msp, "MI": mi, "EUvar": euvar, "CSum": c.sum(axis=1)}, c


def cmd_ood(cfg: RunConfig) -> int:
    if len(cfg.inputs) != 2:
        raise ValidationError("ood needs an ID input and an OoD input")
    id_tensor, _ = ingest(cfg.inputs[0])
    ood_tensor, _ = ingest(cfg.inputs[1])
    if id_tensor.n_classes != ood_tensor.n_classes:
        raise ValidationError("ID and OoD tensors must share the class count")
    id_scores, id_c = _ood_per_input(id_tensor, cfg.threads)
    ood_scores, ood_c = _ood_per_input(ood_tensor, cfg.threads)

    metric_rows = []
    metric_json = {}
    for name in ("NegMSP", "MI", "EUvar", "CSum"):
        a, b = id_scores[name], ood_scores[name]
        entry = {
            "id_mean": qfloat(a.mean()),
            "ood_mean": qfloat(b.mean()),
            "ratio": None,
            "auroc": qfloat(ood.auroc(a, b)),
        }
        ratio_txt = ""
        try:
            ratio = ood.mean_ratio(a, b)
            entry["ratio"] = qfloat(ratio)
            ratio_txt = fmt(ratio)
        except ValidationError:
            pass
        metric_json[name] = entry
        metric_rows.append([name, fmt(a.mean()), fmt(b.mean()), ratio_txt,
                            fmt(entry["auroc"])])

    class_rows = []
    class_json = {}
    for k in range(id_tensor.n_classes):
        a, b = id_c[:, k], ood_c[:, k]
        entry = {
            "id_mean": qfloat(a.mean()),
            "ood_mean": qfloat(b.mean()),
            "ratio": None,
            "auroc": qfloat(ood.auroc(a, b)),
        }
        ratio_txt = ""
        try:
            ratio = ood.mean_ratio(a, b)
            entry["ratio"] = qfloat(ratio)
            ratio_txt = fmt(ratio)
        except ValidationError:
            pass
        class_json[str(k)] = entry
        class_rows.append([str(k), fmt(a.mean()), fmt(b.mean()), ratio_txt,
                           fmt(entry["auroc"])])

    out = _out_dir(cfg)
    header = ["metric", "id_mean", "ood_mean", "ratio", "auroc"]
    if "csv" in cfg.formats:
        _write_csv(out / "ood_metrics.csv", header, metric_rows)
        _write_csv(out / "ood_per_class.csv",
                   ["class", "id_mean", "ood_mean", "ratio", "auroc"], class_rows)
    if "json" in cfg.formats:
        _write_json(out / "ood_summary.json",
                    {"metrics": metric_json, "per_class": class_json})
    return 0


# ---------------------------------------------------------------------------
# disentangle
# ---------------------------------------------------------------------------


def cmd_disentangle(cfg: RunConfig, manifest_path: str, csum_mode: str = "full",
                    top_k: int | None = None) -> int:
    path = Path(manifest_path)
    if not path.exists():
        raise ParseError(f"{path}: no such manifest")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(manifest, list) or not all(
        isinstance(e, dict) and "alpha" in e and "path" in e for e in manifest
    ):
        raise ParseError(f"{path}: manifest must be a list of {{alpha, path}} entries")
    alphas = [float(e["alpha"]) for e in manifest]
    if alphas.count(0.0) != 1:
        raise ValidationError(
            "sweep manifest must contain exactly one alpha = 0 entry, "
            f"found {alphas.count(0.0)}"
        )
    points = []
    for entry in sorted(manifest, key=lambda e: float(e["alpha"])):
        tensor, _ = ingest(Path(path.parent, entry["path"]))
        points.append(dis.sweep_point(tensor, alpha=float(entry["alpha"]),
                                      csum_mode=csum_mode, top_k=top_k))
    baseline = next(p for p in points if p.alpha == 0.0)

    rows, json_rows = [], []
    for p in points:
        cells = {"r_rel_mi": "", "r_rel_csum": "", "inflation": ""}
        jcells = {"r_rel_mi": None, "r_rel_csum": None, "inflation": None}
        for key, metric in (("r_rel_mi", "mi"), ("r_rel_csum", "c_sum")):
            if p.alpha != 0.0:
                try:
                    v = dis.relative_ratio(baseline, p, metric)
                    cells[key] = fmt(v)
                    jcells[key] = qfloat(v)
                except dis.UndefinedRatioError:
                    pass
        try:
            v = dis.baseline_inflation(p)
            cells["inflation"] = fmt(v)
            jcells["inflation"] = qfloat(v)
        except dis.UndefinedRatioError:
            pass
        rows.append([
            fmt(p.alpha), fmt(p.mean_aleatoric), fmt(p.mean_epistemic_mi),
            fmt(p.mean_epistemic_csum), cells["r_rel_mi"], cells["r_rel_csum"],
            cells["inflation"],
        ])
        json_rows.append({
            "alpha": qfloat(p.alpha),
            "aleatoric": qfloat(p.mean_aleatoric),
            "epistemic_mi": qfloat(p.mean_epistemic_mi),
            "epistemic_csum": qfloat(p.mean_epistemic_csum),
            **jcells,
        })

    out = _out_dir(cfg)
    if "csv" in cfg.formats:
        _write_csv(
            out / "disentangle.csv",
            ["alpha", "aleatoric", "epistemic_mi", "epistemic_csum",
             "r_rel_mi", "r_rel_csum", "inflation"],
            rows,
        )
    if "json" in cfg.formats:
        _write_json(out / "disentangle.json",
                    {"csum_mode": csum_mode, "top_k": top_k, "rows": json_rows})
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _synth_distribution(args) -> synth.AnalyticDistribution:
    kind = args.kind
    if kind == "dirichlet":
        if not args.alpha:
            raise ValidationError("dirichlet needs --alpha")
        return synth.Dirichlet(np.array(_float_list(args.alpha)))
    if kind == "vertex":
        return synth.VertexMixture(args.k)
    if kind == "dirac":
        if not args.theta:
            raise ValidationError("dirac needs --theta")
        return synth.DiracAt(np.array(_float_list(args.theta)))
    if kind == "mixture":
        if not args.points:
            raise ValidationError("mixture needs --points")
        pts = np.array([_float_list(p) for p in args.points.split(";")])
        w = (np.array(_float_list(args.weights)) if args.weights
             else np.full(pts.shape[0], 1.0 / pts.shape[0]))
        return synth.FiniteMixture(pts, w)
    raise ValidationError(f"unknown synth kind {kind!r}")


def cmd_synth(args) -> int:
    """Emit a fixture tensor, deterministically from the seed.

    ``class-dirichlet`` builds a labelled cohort: each input draws a true
    class uniformly, then S passes from a Dirichlet concentrated on it
    (base mass alpha0 spread evenly plus ``boost`` on the true class).
    The other kinds sample one unlabelled distribution for every input.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    n, s, k = args.n, args.s, args.k
    labels = None
    if args.kind == "class-dirichlet":
        labels = rng.integers(0, k, size=n)
        values = np.empty((n, s, k))
        base = np.full(k, args.alpha0 / k)
        for i in range(n):
            alpha = base.copy()
            alpha[labels[i]] += args.boost
            values[i] = synth.Dirichlet(alpha).draw(s, rng)
        if not args.labels:
            labels = None
    else:
        dist = _synth_distribution(args)
        if dist.n_classes != k:
            raise ValidationError(
                f"--k {k} does not match the distribution's {dist.n_classes} classes"
            )
        values = np.stack([dist.draw(s, rng) for _ in range(n)])
    # Quantise through the serialisation format so both formats carry
    # identical values.
    tensor = validate_tensor(np.vectorize(qfloat)(values))
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "bin":
        write_binary(out, tensor, labels)
    else:
        write_jsonl(out, tensor, labels)
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    return _corr(ood._average_ranks(a), ood._average_ranks(b))


def _random_analytic(rng: np.random.Generator):
    """One random analytic distribution for the axiom sweep."""
    k = int(rng.integers(2, 7))
    u = rng.random()
    if u < 0.15:
        theta = rng.dirichlet(np.ones(k))
        return synth.DiracAt(theta)
    if u < 0.35:
        alpha = rng.uniform(0.05, 5.0, size=k)
        return synth.Dirichlet(alpha)
    m = int(rng.integers(1, 6))
    pts = rng.dirichlet(np.ones(k), size=m)
    w = rng.dirichlet(np.ones(m))
    return synth.FiniteMixture(pts, w)


def _axiom_sweep(seed: int, count: int):
    """A0/A1/A3 plus the variance and boundary bounds over random
    analytic distributions and tensors sampled from them."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    failures = []
    for trial in range(count):
        dist = _random_analytic(rng)
        eu = synth.analytic_eu(dist)
        if eu < 0.0:
            failures.append(f"A0 violated at trial {trial}: eu={eu!r}")
            break
        is_dirac = isinstance(dist, synth.DiracAt) or (
            isinstance(dist, synth.FiniteMixture)
            and bool(np.all(dist.points == dist.points[0]))
        )
        if is_dirac and eu != 0.0:
            failures.append(f"A1 forward violated at trial {trial}: eu={eu!r}")
            break
        if eu == 0.0 and not is_dirac and not isinstance(dist, synth.Dirichlet):
            failures.append(f"A1 converse violated at trial {trial}")
            break

        if isinstance(dist, (synth.DiracAt, synth.FiniteMixture)):
            mix = dist if isinstance(dist, synth.FiniteMixture) else None
            pts = mix.points if mix is not None else dist.theta[None, :]
            k = pts.shape[1]
            i, j = rng.choice(k, size=2, replace=False)
            room = min(
                pts[:, i].min(), 1.0 - pts[:, i].max(),
                pts[:, j].min(), 1.0 - pts[:, j].max(),
            )
            if room > 1e-4:
                spread = 0.5 * room
                spread_eu = synth.analytic_eu(
                    synth.mps_transform(dist, spread, (int(i), int(j)))
                )
                if not spread_eu > eu:
                    failures.append(
                        f"A3 violated at trial {trial}: {spread_eu!r} <= {eu!r}"
                    )
                    break

        s = int(rng.integers(3, 33))
        tensor = validate_tensor(dist.draw(s, rng)[None, :, :])
        for bessel in (True, False):
            summ = moments.compute_moments(tensor, 0, bessel=bessel)
            factor = s / (s - 1.0) if bessel else 1.0
            bound = factor * summ.mean * (1.0 - summ.mean) + 1e-12
            if (summ.variance > bound).any():
                failures.append(f"variance bound violated at trial {trial}")
                break
            c = metrics.c_vector(summ)
            cbound = factor * 0.5 * (1.0 - summ.mean) + 1e-9
            if (c > cbound).any():
                failures.append(f"boundary bound violated at trial {trial}")
                break
        if failures:
            break
    return failures


def _taylor_population(seed: int, n: int = 500, s: int = 50, k: int = 4):
    """Seeded cohort of concentrated Dirichlet posteriors (alpha0 >= 50)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    tensors = np.empty((n, s, k))
    for i in range(n):
        a0 = rng.uniform(50.0, 400.0)
        direction = rng.dirichlet(np.full(k, 2.0))
        alpha = np.maximum(a0 * direction, 1e-3)
        tensors[i] = synth.Dirichlet(alpha).draw(s, rng)
    return validate_tensor(tensors)


def _mi_and_csum(tensor: SampleTensor, threads: int):
    def one(i):
        summary = moments.compute_moments(tensor, i)
        c = metrics.c_vector(summary)
        return metrics.mutual_information_exact(tensor.values[i]), float(c.sum())

    idx = range(tensor.n_inputs)
    if threads <= 1:
        pairs = [one(i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(one, idx))
    mi = np.array([p[0] for p in pairs])
    cs = np.array([p[1] for p in pairs])
    return mi, cs


def _validate_checks(seed: int, threads: int):
    checks = []

    def add(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    two_point = synth.FiniteMixture(
        np.array([[0.2, 0.8], [0.4, 0.6]]), np.array([0.5, 0.5])
    )
    eu = synth.analytic_eu(two_point)
    add("appendix-two-point-eu", abs(eu - 5.0 / 210.0) < 1e-7, fmt(eu))

    shifted = synth.location_shift(two_point, np.array([0.15, -0.15]))
    eu_s = synth.analytic_eu(shifted)
    add("appendix-shifted-eu", abs(eu_s - 0.02020202020202020) < 1e-7, fmt(eu_s))

    ok = True
    for k in range(2, 11):
        got = synth.analytic_eu(synth.Dirichlet(np.ones(k)))
        ok = ok and abs(got - (k - 1) / (2.0 * (k + 1))) < 1e-7
    add("appendix-dirichlet-uniform-eu", ok)

    ok = True
    for k in range(2, 11):
        got = synth.analytic_eu(synth.VertexMixture(k))
        ok = ok and abs(got - (k - 1) / 2.0) < 1e-7
    add("appendix-vertex-eu", ok)

    ok = all(
        synth.analytic_eu(synth.VertexMixture(k))
        > synth.analytic_eu(synth.Dirichlet(np.ones(k)))
        for k in range(2, 11)
    )
    add("appendix-vertex-above-uniform", ok)

    # Empirical path (population moments + eps stabilisation) must hit the
    # same two exact values; a corrupted eps constant fails here.
    emp = []
    for mix in (two_point, shifted):
        tensor = synth.replicate_mixture(mix, 1)
        summ = moments.compute_moments(tensor, 0, bessel=False)
        emp.append(float(metrics.c_vector(summ).sum()))
    add(
        "empirical-shift-counterexample",
        abs(emp[0] - 5.0 / 210.0) < 1e-7 and abs(emp[1] - 0.02020202020202020) < 1e-7,
        f"{fmt(emp[0])} {fmt(emp[1])}",
    )

    failures = _axiom_sweep(seed + 1, 1000)
    add("axiom-sweep-1000", not failures, failures[0] if failures else "")

    cohort = _taylor_population(seed + 2)
    mi, cs = _mi_and_csum(cohort, threads)
    pear = _corr(cs, mi)
    spear = _spearman(cs, mi)
    add("taylor-fidelity", pear >= 0.98 and spear >= 0.99,
        f"pearson={fmt(pear)} spearman={fmt(spear)}")

    ok = True
    worst = 0.0
    from .core import EPS

    for i in range(cohort.n_inputs):
        summ = moments.compute_moments(cohort, i)
        c = metrics.c_vector(summ)
        rho = metrics.skewness_rho(summ)
        corr3 = np.abs(summ.third_moment) / (6.0 * (summ.mean + EPS) ** 2)
        active = (summ.variance > 0.0) & (summ.mean > 1e-6)
        lhs = rho[active] * c[active]
        rhs = corr3[active]
        denom = np.maximum(rhs, 1e-300)
        rel = np.abs(lhs - rhs) / denom
        if rel.size:
            worst = max(worst, float(rel.max()))
        ok = ok and (rel <= 1e-10).all()
    add("rho-ratio-identity", ok, f"max-rel={fmt(worst)}")

    grid = np.arange(1, 201) / 200.0
    const = np.full(200, 0.3)
    ramp = grid.copy()
    a_const = float(selective._trapezoid(const, grid))
    a_ramp = float(selective._trapezoid(ramp, grid))
    add("ausc-constant-risk", abs(a_const - 0.3 * 0.995) < 1e-12, fmt(a_const))
    add("ausc-linear-ramp", abs(a_ramp - 0.4999875) < 1e-12, fmt(a_ramp))

    means = np.array([
        [0.8, 0.1, 0.1],
        [0.1, 0.1, 0.8],
        [0.8, 0.1, 0.1],
        [0.8, 0.1, 0.1],
        [0.8, 0.1, 0.1],
    ])
    labels5 = make_label_set(np.array([2, 2, 0, 0, 0]), means)
    part5 = ClassPartition(safe=frozenset({0, 1}), critical=frozenset({2}))
    order5 = selective.deferral_order(np.array([1.0, 0.1, 0.2, 0.3, 0.4]))
    curve5 = selective.risk_curve(order5, labels5, part5, grid_size=200)
    add(
        "ausc-hand-example",
        curve5.critical_fnr[159] == 0.0 and curve5.critical_fnr[199] == 0.5,
        f"fnr@0.8={fmt(curve5.critical_fnr[159])} fnr@1.0={fmt(curve5.critical_fnr[199])}",
    )

    got = ood.auroc([0.1, 0.3], [0.3, 0.5])
    add("auroc-worked-example", got == 0.875, fmt(got))

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed + 3)))
    ok = True
    for _ in range(25):
        n, m = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        a = np.round(rng.random(n) * 10.0) / 10.0
        b = np.round(rng.random(m) * 10.0) / 10.0
        brute = float(
            np.mean([(1.0 if y > x else 0.5 if y == x else 0.0) for x in a for y in b])
        )
        if ood.auroc(a, b) != brute:
            ok = False
            break
    add("auroc-brute-force", ok)

    id_mix = synth.two_point_mixture_for_mi(0.3, 0.0096)
    ood_mix = synth.two_point_mixture_for_mi(0.3, 0.0569)
    id_t = synth.replicate_mixture(id_mix, 50)
    ood_t = synth.replicate_mixture(ood_mix, 50)
    id_mi = [metrics.mutual_information_exact(id_t.values[i]) for i in range(50)]
    ood_mi = [metrics.mutual_information_exact(ood_t.values[i]) for i in range(50)]
    ratio = ood.mean_ratio(id_mi, ood_mi)
    add("ood-mean-ratio-fixture", abs(ratio - 5.927) < 1e-3, fmt(ratio))

    base = dis.NoiseSweepPoint(0.0, 0.5, 0.01, 0.01)
    r0 = dis.relative_ratio(base, dis.NoiseSweepPoint(0.1, 0.6, 0.01, 0.02), "mi")
    r_half = dis.relative_ratio(base, dis.NoiseSweepPoint(0.1, 0.6, 0.011, 0.02), "mi")
    r_one = dis.relative_ratio(base, dis.NoiseSweepPoint(0.1, 0.55, 0.011, 0.02), "mi")
    add(
        "rrel-unit-behaviour",
        r0 == 0.0 and abs(r_half - 0.5) < 1e-12 and abs(r_one - 1.0) < 1e-12,
        f"{fmt(r0)} {fmt(r_half)} {fmt(r_one)}",
    )
    infl = dis.baseline_inflation(dis.NoiseSweepPoint(0.0, 0.5, 0.039, 0.053))
    add("inflation-fixture", abs(infl - 1.359) < 1e-3, fmt(infl))

    ok = True
    detail = []
    for k in (2, 5, 10):
        dist = synth.Dirichlet(np.ones(k))
        draws = synth.sample(dist, 10_000, seed + 10 + k)
        tensor = validate_tensor(draws[None, :, :])
        summ = moments.compute_moments(tensor, 0)
        emp = float(metrics.c_vector(summ).sum())
        target = synth.analytic_eu(dist)
        rel = abs(emp - target) / target
        detail.append(f"K={k}:{fmt(rel)}")
        ok = ok and rel <= 0.05
    add("dirichlet-convergence", ok, " ".join(detail))

    return checks


def cmd_validate(seed: int = 0, threads: int = 1, out_path=None) -> int:
    checks = _validate_checks(seed, threads)
    lines = []
    for name, ok, detail in checks:
        line = f"{'PASS' if ok else 'FAIL'} {name}"
        if detail:
            line += f" [{detail}]"
        lines.append(line)
    n_pass = sum(1 for _, ok, _ in checks if ok)
    lines.append(f"{n_pass}/{len(checks)} checks passed")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    return 0 if n_pass == len(checks) else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p, with_partition=True, with_bootstrap=False):
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default: out)")
    p.add_argument("--formats", help="comma-separated output formats: csv,json")
    p.add_argument("--threads", type=int, help="worker threads; 0 = all cores")
    p.add_argument("--threshold", type=float,
                   help="reliability threshold on rho (default 0.3)")
    if with_partition:
        p.add_argument("--critical", help="comma-separated critical class indices")
        p.add_argument("--safe",
                       help="comma-separated safe class indices "
                            "(default: complement of critical)")
    if with_bootstrap:
        p.add_argument("--grid-size", dest="grid_size", type=int,
                       help="coverage grid size (default 200)")
        p.add_argument("--resamples", dest="n_resamples", type=int,
                       help="bootstrap resamples (default 200)")
        p.add_argument("--seed", type=int, help="bootstrap seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epuc",
        description="Per-class epistemic uncertainty scoring and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="per-input uncertainty report")
    p.add_argument("--input", required=True)
    _add_common(p)

    p = sub.add_parser("selective", help="risk curves, bootstrap, interpretability tables")
    p.add_argument("--input", required=True)
    _add_common(p, with_bootstrap=True)

    p = sub.add_parser("ood", help="AUROC and mean-ratio tables for an ID/OoD pair")
    p.add_argument("--id", dest="id_input", required=True)
    p.add_argument("--ood", dest="ood_input", required=True)
    _add_common(p, with_partition=False)

    p = sub.add_parser("disentangle", help="relative disentanglement ratios over a sweep")
    p.add_argument("--manifest", required=True,
                   help="JSON list of {alpha, path} entries; paths relative to the manifest")
    p.add_argument("--csum-mode", choices=list(dis.CSUM_MODES), default="full")
    p.add_argument("--top-k", dest="top_k", type=int)
    _add_common(p, with_partition=False)

    p = sub.add_parser("validate", help="run the analytic oracle self-test suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", dest="out_path")

    p = sub.add_parser("synth", help="emit a fixture tensor from an analytic distribution")
    p.add_argument("--kind", required=True,
                   choices=["class-dirichlet", "dirichlet", "vertex", "dirac", "mixture"])
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "bin"], default="jsonl")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha0", type=float, default=2.0,
                   help="class-dirichlet: base concentration mass")
    p.add_argument("--boost", type=float, default=6.0,
                   help="class-dirichlet: extra mass on the true class")
    p.add_argument("--alpha", help="dirichlet: comma-separated concentrations")
    p.add_argument("--theta", help="dirac: comma-separated location")
    p.add_argument("--points", help="mixture: semicolon-separated comma vectors")
    p.add_argument("--weights", help="mixture: comma-separated weights")
    p.add_argument("--labels", action="store_true",
                   help="class-dirichlet: write the drawn labels")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "score":
            return cmd_score(_build_config(args, (args.input,)))
        if args.command == "selective":
            return cmd_selective(_build_config(args, (args.input,)))
        if args.command == "ood":
            return cmd_ood(_build_config(args, (args.id_input, args.ood_input)))
        if args.command == "disentangle":
            cfg = _build_config(args, ())
            return cmd_disentangle(cfg, args.manifest, args.csum_mode, args.top_k)
        if args.command == "validate":
            threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
            return cmd_validate(args.seed, threads, args.out_path)
        if args.command == "synth":
            return cmd_synth(args)
        parser.error(f"unknown command {args.command!r}")
    except (EpucError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
