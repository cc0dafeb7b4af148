"""Precision/recall/F1, confusion matrices and cascade evaluation reports."""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


def _div(num, den):
    return num / den if den else 0.0


def prf(tp, fp, fn):
    """Precision, recall and F1 from raw counts; every 0/0 is 0.

    >>> prf(0, 0, 0)
    (0.0, 0.0, 0.0)
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    precision = _div(tp, tp + fp)
    recall = _div(tp, tp + fn)
    return precision, recall, f1_score(precision, recall)


def f1_score(precision, recall):
    return _div(2 * precision * recall, precision + recall)


@dataclass
class ConfusionMatrix:
    labels: list
    counts: np.ndarray  # rows gold, columns predicted

    @property
    def total(self):
        return int(self.counts.sum())

    def support(self, label):
        return int(self.counts[self.labels.index(label)].sum())

    def class_prf(self, label):
        i = self.labels.index(label)
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum()) - tp
        fn = int(self.counts[i].sum()) - tp
        return prf(tp, fp, fn)

    def per_class(self):
        return {label: (*self.class_prf(label), self.support(label)) for label in self.labels}

    def macro_f1(self):
        if not self.labels:
            return 0.0
        return float(np.mean([self.class_prf(label)[2] for label in self.labels]))

    def accuracy(self):
        return _div(int(np.trace(self.counts)), self.total)


def confusion(golds, preds, labels=None):
    """Count (gold, predicted) pairs over a declared label inventory.

    With ``labels`` omitted the inventory is the sorted union of both sides.
    """
    golds, preds = list(golds), list(preds)
    if len(golds) != len(preds):
        raise ValueError(f"{len(golds)} gold labels but {len(preds)} predictions")
    if labels is None:
        labels = sorted(set(golds) | set(preds))
    labels = list(labels)
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(golds, preds):
        if g not in index or p not in index:
            bad = g if g not in index else p
            raise ValueError(f"label {bad!r} not in inventory {labels}")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(labels, counts)


def _r4(x):
    return round(float(x), 4)


@dataclass
class EvalReport:
    target_label: str
    per_class: dict
    binary_target: tuple
    stage_removals: list
    label_distribution: dict
    confusion: ConfusionMatrix = None
    accepted: int = 0
    stage_isolation: list = field(default_factory=list)

    def to_dict(self):
        p, r, f1 = self.binary_target
        out = {
            "target_label": self.target_label,
            "per_class": {
                label: {"precision": _r4(cp), "recall": _r4(cr), "f1": _r4(cf), "support": int(support)}
                for label, (cp, cr, cf, support) in self.per_class.items()
            },
            "binary_target": {"precision": _r4(p), "recall": _r4(r), "f1": _r4(f1)},
            "stage_removals": [{"stage": name, "removed": int(n)} for name, n in self.stage_removals],
            "accepted": int(self.accepted),
            "label_distribution": {k: int(v) for k, v in self.label_distribution.items()},
        }
        if self.confusion is not None:
            out["confusion"] = {"labels": list(self.confusion.labels), "counts": self.confusion.counts.tolist()}
        if self.stage_isolation:
            out["stage_isolation"] = [
                {"stage": s["stage"], "rule": s["rule"], "precision": _r4(s["precision"]),
                 "recall": _r4(s["recall"]), "f1": _r4(s["f1"])}
                for s in self.stage_isolation
            ]
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), ensure_ascii=False, **kwargs)


def negative_label(target_label):
    return "non-" + target_label


def _binary(labels, target):
    neg = negative_label(target)
    return [target if label == target else neg for label in labels]


def evaluate_cascade(cascade, corpus, isolated=False):
    """Target-vs-rest report for a cascade over ``(label, text)`` records.

    ``stage_removals[i]`` counts documents rejected at stage ``i``. With
    ``isolated=True`` every stage is also run on every document on its own;
    internal stages are scored under both Argmax and their configured rule.
    """
    from .cascade import Argmax, InternalBackend, decide, run_cascade, run_stage

    corpus = list(corpus)
    target = cascade.target_label
    neg = negative_label(target)
    golds = _binary([label for label, _ in corpus], target)
    removals = Counter()
    preds = []
    for _, text in corpus:
        outcome = run_cascade(cascade, text)
        if outcome.accepted:
            preds.append(target)
        else:
            removals[outcome.rejected_by] += 1
            preds.append(neg)

    cm = confusion(golds, preds, labels=[target, neg])
    per_class = cm.per_class()
    report = EvalReport(
        target_label=target,
        per_class=per_class,
        binary_target=per_class[target][:3],
        stage_removals=[(s.name, removals[s.name]) for s in cascade.stages],
        label_distribution={target: cm.support(target), neg: cm.support(neg)},
        confusion=cm,
        accepted=preds.count(target),
    )
    if isolated:
        for stage in cascade.stages:
            rules = [stage.rule]
            if isinstance(stage.backend, InternalBackend) and not isinstance(stage.rule, Argmax):
                rules.insert(0, Argmax())
            probs = [stage.backend.probs(text) for _, text in corpus] if len(rules) > 1 else None
            for rule in rules:
                if probs is None:
                    accepted = [run_stage(stage, text).accepted for _, text in corpus]
                else:
                    accepted = [decide(rule, p, stage.backend.labels, target) for p in probs]
                bp = binary_prf(golds, accepted, target)
                report.stage_isolation.append(
                    {"stage": stage.name, "rule": rule.to_json(), "precision": bp[0], "recall": bp[1], "f1": bp[2]})
    return report


def binary_prf(golds, accepted, target):
    tp = sum(1 for g, a in zip(golds, accepted) if a and g == target)
    fp = sum(1 for g, a in zip(golds, accepted) if a and g != target)
    fn = sum(1 for g, a in zip(golds, accepted) if not a and g == target)
    return prf(tp, fp, fn)


def evaluate_model(model, corpus):
    """Multi-class confusion matrix of a single model's argmax predictions."""
    from .classifier import predict

    corpus = list(corpus)
    golds = [label for label, _ in corpus]
    preds = [predict(model, text).argmax for _, text in corpus]
    return confusion(golds, preds, labels=sorted(set(model.labels) | set(golds)))
