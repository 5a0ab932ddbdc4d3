"""Downstream evaluation: linear probe, classification metrics, FNP audit, embedding export."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .contrast import ContrastConfig, build_pair_structure, random_pair_structure
from .encoder import EncoderConfig, embed
from .numcore import AdamState, Tensor, adam_step

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (1.0, 0.75, 0.5, 0.25, 0.1)


# -- metrics -------------------------------------------------------------

@dataclass
class ProbeResult:
    accuracy: float
    macro_f1: float
    macro_recall: float
    auprc: float | None
    per_class: dict = field(default_factory=dict)
    n_test: int = 0
    extra: dict = field(default_factory=dict)


def average_precision(y_true, score) -> float:
    """Step-wise area under the precision-recall curve (average-precision convention)."""
    y_true = np.asarray(y_true, dtype=bool)
    score = np.asarray(score, dtype=np.float64)
    n_pos = int(y_true.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    order = np.argsort(-score, kind="mergesort")
    y_sorted, s_sorted = y_true[order], score[order]
    # evaluate only at the last position of each tied score block
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), y_sorted.size - 1]
    tp = np.cumsum(y_sorted)[last]
    precision = tp / (last + 1)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def metrics(predictions, labels, scores=None, classes=None) -> ProbeResult:
    """Accuracy, macro F1 / recall and macro one-vs-rest AUPRC.

    Classes with no ground-truth sample in ``labels`` are reported with
    undefined (None) metrics and left out of every macro average.
    ``scores`` is an (N, C) array with columns ordered like ``classes``.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("metrics need at least one sample")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels are not aligned")
    if classes is None:
        classes = np.unique(np.concatenate([labels, predictions]))
    classes = list(np.asarray(classes).tolist())
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (labels.size, len(classes)):
            raise ValueError(f"scores must have shape ({labels.size}, {len(classes)})")

    per_class = {}
    for k, c in enumerate(classes):
        actual, predicted = labels == c, predictions == c
        support = int(actual.sum())
        if support == 0:
            warnings.warn(f"class {c} absent from ground truth; excluded from macro averages",
                          RuntimeWarning, stacklevel=2)
            per_class[c] = {"support": 0, "precision": None, "recall": None, "f1": None, "ap": None}
            continue
        tp = int(np.sum(actual & predicted))
        n_pred = int(predicted.sum())
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        ap = average_precision(actual, scores[:, k]) if scores is not None else None
        per_class[c] = {"support": support, "precision": precision, "recall": recall, "f1": f1, "ap": ap}

    defined = [v for v in per_class.values() if v["support"] > 0]
    return ProbeResult(
        accuracy=float(np.mean(predictions == labels)),
        macro_f1=float(np.mean([v["f1"] for v in defined])),
        macro_recall=float(np.mean([v["recall"] for v in defined])),
        auprc=float(np.mean([v["ap"] for v in defined])) if scores is not None else None,
        per_class=per_class,
        n_test=int(labels.size),
    )


# -- linear probe --------------------------------------------------------

def _softmax_xent(X, W: Tensor, b: Tensor, y_onehot) -> Tensor:
    logits = nc.add_bias(nc.matmul(X, W), b)
    shift = logits.data.max(axis=1, keepdims=True)
    lse = nc.log(nc.sum(nc.exp(logits - shift), axis=1)) + shift[:, 0]
    return nc.mean(lse - nc.sum(logits * y_onehot, axis=1))


def _probs(X, params) -> np.ndarray:
    logits = X @ params["W"] + params["b"]
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(embeddings, labels, split, seed: int = 0, *, epochs: int = 100, lr: float = 1e-3,
                 weight_decay: float = 1e-4, batch_size: int = 64, train_rows=None) -> ProbeResult:
    """Softmax regression on frozen embeddings.

    Trained with Adam on the train split (or ``train_rows``), the epoch with the
    best validation accuracy is kept and scored on the test split.  Features
    are standardised with train statistics.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    split = np.asarray(split)
    train = np.flatnonzero(split == 0) if train_rows is None else np.asarray(train_rows)
    val, test = np.flatnonzero(split == 1), np.flatnonzero(split == 2)
    classes = np.unique(y)
    if np.unique(y[train]).size < 2:
        raise ValueError("the probe needs at least two classes in the training rows")
    if test.size == 0:
        raise ValueError("the test split is empty")
    y_idx = np.searchsorted(classes, y)
    onehot = np.eye(classes.size)[y_idx]

    mu, sd = X[train].mean(axis=0), X[train].std(axis=0)
    Xs = (X - mu) / np.where(sd > 0, sd, 1.0)
    params = {"W": np.zeros((X.shape[1], classes.size)), "b": np.zeros(classes.size)}
    state = AdamState.zeros_like(params)
    select = val if val.size else train
    best = (-1.0, 0, params)
    for epoch in range(epochs):
        order = train[np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(train.size)]
        for start in range(0, order.size, batch_size):
            rows = order[start:start + batch_size]
            W, b = Tensor(params["W"], True), Tensor(params["b"], True)
            nc.backward(_softmax_xent(Xs[rows], W, b, onehot[rows]))
            params, state = adam_step(params, {"W": W.grad, "b": b.grad}, state, lr=lr, beta1=0.9,
                                      beta2=0.999, eps=1e-8, weight_decay=weight_decay)
        acc = float(np.mean(_probs(Xs[select], params).argmax(axis=1) == y_idx[select]))
        if acc > best[0]:
            best = (acc, epoch + 1, params)
    probs = _probs(Xs[test], best[2])
    result = metrics(classes[probs.argmax(axis=1)], y[test], probs, classes)
    result.extra.update({"val_accuracy": best[0], "best_epoch": best[1], "n_train": int(train.size)})
    return result


def stratified_subsample(labels, rows, fraction: float, seed: int = 0):
    """round(fraction * n_c) rows per class (sorted), or None if a class would get zero."""
    labels = np.asarray(labels)
    rows = np.asarray(rows)
    if fraction >= 1.0:
        return rows.copy()
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(round(fraction * 1_000_000))]))
    picked = []
    for c in np.unique(labels[rows]):
        members = rows[labels[rows] == c]
        k = int(round(fraction * members.size))
        if k < 1:
            return None
        picked.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(picked))


def label_fraction_protocol(embeddings, labels, split, fractions=DEFAULT_FRACTIONS, seed: int = 0,
                            **probe_kwargs) -> dict[float, ProbeResult]:
    """Retrain the probe on stratified subsets of the train split; pretraining is untouched."""
    split = np.asarray(split)
    train = np.flatnonzero(split == 0)
    out = {}
    for f in fractions:
        rows = stratified_subsample(labels, train, f, seed)
        if rows is None:
            warnings.warn(f"fraction {f} leaves a class without samples; skipped", RuntimeWarning, stacklevel=2)
            continue
        out[f] = linear_probe(embeddings, labels, split, seed, train_rows=rows, **probe_kwargs)
    return out


def format_label_curve(results: dict[float, ProbeResult]) -> str:
    fracs = sorted(results, reverse=True)
    accs = [results[f].accuracy for f in fracs]
    monotone = all(a >= b - 1e-12 for a, b in zip(accs, accs[1:]))
    lines = ["fraction\tn_train\taccuracy\tmacro_f1\tmacro_recall\tauprc"]
    for f in fracs:
        r = results[f]
        lines.append(f"{f:g}\t{r.extra.get('n_train', '')}\t{r.accuracy:.4f}\t{r.macro_f1:.4f}\t"
                     f"{r.macro_recall:.4f}\t{'NA' if r.auprc is None else f'{r.auprc:.4f}'}")
    lines.append(f"# accuracy non-increasing as labels shrink: {'yes' if monotone else 'no'}")
    return "\n".join(lines) + "\n"


# -- false negative pairs ------------------------------------------------

@dataclass
class FnpReport:
    policy: str
    hard_fnp_rate: float | None
    weighted_fnp_mass: float | None
    combined_rate: float | None
    unweighted_tc_rate: float | None
    per_batch: list[dict] = field(default_factory=list)

    def batch_mean(self, key: str) -> float | None:
        vals = [b[key] for b in self.per_batch if b[key] is not None]
        return float(np.mean(vals)) if vals else None


def _ratio(num: float, den: float):
    return None if den == 0 else num / den


def _tally(structure, same) -> dict:
    w = structure.weights
    counts = {
        "nc_same": float(np.sum(structure.nc_mask & same)),
        "nc_total": float(np.sum(structure.nc_mask)),
        "tc_w_same": float(np.sum(np.where(structure.tc_mask & same, w, 0.0))),
        "tc_w_total": float(np.sum(np.where(structure.tc_mask, w, 0.0))),
        "tc_same": float(np.sum(structure.tc_mask & same)),
        "tc_total": float(np.sum(structure.tc_mask)),
    }
    return counts


def _rates(c: dict) -> dict:
    return {
        "hard_fnp_rate": _ratio(c["nc_same"], c["nc_total"]),
        "weighted_fnp_mass": _ratio(c["tc_w_same"], c["tc_w_total"]),
        "combined_rate": _ratio(c["nc_same"] + c["tc_w_same"], c["nc_total"] + c["tc_w_total"]),
        "unweighted_tc_rate": _ratio(c["tc_same"], c["tc_total"]),
    }


def fnp_audit(class_labels, states, recording, position, contrast_config: ContrastConfig, batches,
              policy: str = "statiocl", horizon: int | None = None) -> FnpReport:
    """Share of negative pairs whose members share a ground-truth class.

    Replays ``batches`` (dataset row indices per batch).  Under ``"statiocl"``
    pairs come from the stationarity states and temporal weights; under
    ``"random"`` every other batch member is a full-weight negative.  Class
    labels are read here only, never during training.
    """
    if policy not in ("statiocl", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    class_labels = np.asarray(class_labels)
    states = np.asarray(states)
    recording = None if recording is None else np.asarray(recording)
    position = None if position is None else np.asarray(position)
    if horizon is None and recording is not None:
        horizon = contrast_config.horizon or int(np.max(np.unique(recording, return_counts=True)[1]))
    totals = dict.fromkeys(("nc_same", "nc_total", "tc_w_same", "tc_w_total", "tc_same", "tc_total"), 0.0)
    per_batch = []
    for idx in batches:
        idx = np.asarray(idx)
        if policy == "random":
            structure = random_pair_structure(idx.size)
        else:
            structure = build_pair_structure(states[idx], None if recording is None else recording[idx],
                                             None if position is None else position[idx], contrast_config, horizon)
        c = _tally(structure, class_labels[idx][:, None] == class_labels[idx][None, :])
        for k in totals:
            totals[k] += c[k]
        per_batch.append(_rates(c))
    return FnpReport(policy=policy, per_batch=per_batch, **_rates(totals))


def format_fnp_comparison(reports: list[FnpReport]) -> str:
    keys = ("hard_fnp_rate", "weighted_fnp_mass", "combined_rate", "unweighted_tc_rate")

    def fmt(v):
        return "NA" if v is None else f"{v:.4f}"

    lines = ["policy\tstat\t" + "\t".join(keys)]
    for r in reports:
        lines.append(f"{r.policy}\tpooled\t" + "\t".join(fmt(getattr(r, k)) for k in keys))
        lines.append(f"{r.policy}\tbatch_mean\t" + "\t".join(fmt(r.batch_mean(k)) for k in keys))
    return "\n".join(lines) + "\n"


# -- embedding export ----------------------------------------------------

def load_encoder(checkpoint) -> tuple[dict, EncoderConfig]:
    ckpt = checkpoint if isinstance(checkpoint, nc.Checkpoint) else nc.load_checkpoint(checkpoint)
    cfg = ckpt.meta.get("encoder")
    if cfg is None:
        raise nc.CheckpointError("checkpoint carries no encoder configuration")
    return ckpt.params, EncoderConfig(**cfg)


def embed_export(checkpoint, dataset, out_path) -> np.ndarray:
    """Write ``id,label,z0..z{D-1}`` rows (dataset order, repr floats); returns the embeddings."""
    params, config = load_encoder(checkpoint)
    z = embed(params, dataset.normalize().values, config)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"z{i}" for i in range(z.shape[1])])
        for i in range(z.shape[0]):
            label = "" if dataset.labels is None else int(dataset.labels[i])
            writer.writerow([int(dataset.segment_id[i]), label] + [repr(float(v)) for v in z[i]])
    return z


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    ids = np.array([int(r[0]) for r in rows])
    labels = np.array([int(r[1]) if r[1] else -1 for r in rows])
    z = np.array([[float(v) for v in r[2:]] for r in rows])
    return ids, labels, z
