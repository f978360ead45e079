"""Metrics and run reports: accuracy, boundary energy, class-size audits."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import Graph
from .solver import SolverResult, class_sizes


def accuracy(labels, truth, permute: bool = False) -> float:
    """Fraction of nodes labeled correctly.

    With permute=True (unsupervised runs, where class identities are
    arbitrary) the maximum over all class permutations is returned;
    exhaustive over n <= 6 classes.
    """
    labels = np.asarray(labels, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if labels.shape != truth.shape:
        raise DataError("label vectors differ in length")
    if not permute:
        return float(np.mean(labels == truth))
    n = int(max(labels.max(), truth.max()))
    if n > 6:
        raise ConfigError("permutation search supports at most 6 classes")
    best = 0.0
    for perm in itertools.permutations(range(1, n + 1)):
        mapped = np.asarray(perm, dtype=np.int64)[labels - 1]
        best = max(best, float(np.mean(mapped == truth)))
    return best


def per_class_accuracy(labels, truth) -> np.ndarray:
    """Recall per true class (1-based), nan for absent classes."""
    labels = np.asarray(labels, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if labels.shape != truth.shape:
        raise DataError("label vectors differ in length")
    n = int(truth.max())
    out = np.full(n, np.nan)
    for cls in range(1, n + 1):
        members = truth == cls
        if members.any():
            out[cls - 1] = float(np.mean(labels[members] == cls))
    return out


def tv_energy(g: Graph, labels) -> float:
    """Boundary energy of a hard labeling: sum over classes of the total
    variation of the class indicator, i.e. each undirected boundary edge
    contributes twice its weight (the solver's energy convention with the
    fidelity term dropped)."""
    labels = np.asarray(labels)
    return float(np.sum(g.weight[labels[g.src] != labels[g.dst]]))


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: np.ndarray
    tv_energy: float
    binary_difference_final: float
    class_sizes: np.ndarray
    duality_gap: float
    iterations: int
    converged: bool

    def lines(self):
        yield f"accuracy            {self.accuracy:.6f}"
        per = ",".join(
            "nan" if np.isnan(a) else f"{a:.6f}" for a in self.per_class_accuracy)
        yield f"per_class_accuracy  {per}"
        yield f"tv_energy           {self.tv_energy:.10g}"
        yield f"binary_difference   {self.binary_difference_final:.6e}"
        yield f"class_sizes         {','.join(str(int(s)) for s in self.class_sizes)}"
        yield f"duality_gap         {self.duality_gap:.6e}"
        yield f"iterations          {self.iterations}"
        yield f"converged           {self.converged}"


def report(result: SolverResult, truth, g: Graph) -> EvalReport:
    """Assemble all metrics for a finished solve.  truth may be None for
    unlabeled data (accuracy fields become nan)."""
    n_classes = result.u.shape[1]
    if truth is None:
        acc = float("nan")
        per = np.full(n_classes, np.nan)
    else:
        acc = accuracy(result.labels, truth)
        per = per_class_accuracy(result.labels, truth)
    return EvalReport(
        accuracy=acc,
        per_class_accuracy=per,
        tv_energy=tv_energy(g, result.labels),
        binary_difference_final=result.binary_difference_final,
        class_sizes=class_sizes(result.labels, n_classes),
        duality_gap=result.primal - result.dual,
        iterations=result.iterations,
        converged=result.converged,
    )


def write_report_txt(rep: EvalReport, path) -> None:
    with open(path, "w") as fh:
        for line in rep.lines():
            fh.write(line + "\n")


def write_report_csv(rep: EvalReport, path) -> None:
    """One machine-readable row (nan-safe)."""
    cols = ["accuracy", "tv_energy", "binary_difference", "duality_gap",
            "iterations", "converged", "class_sizes", "per_class_accuracy"]
    sizes = ";".join(str(int(s)) for s in rep.class_sizes)
    per = ";".join("%.6f" % a if not np.isnan(a) else "nan"
                   for a in rep.per_class_accuracy)
    vals = ["%.6f" % rep.accuracy, "%.10g" % rep.tv_energy,
            "%.6e" % rep.binary_difference_final, "%.6e" % rep.duality_gap,
            str(rep.iterations), str(int(rep.converged)), sizes, per]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        fh.write(",".join(vals) + "\n")
