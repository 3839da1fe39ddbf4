"""Kernel ridge regression with a global Gaussian kernel and a
species-matched local Gaussian kernel.

The dual coefficients solve (K + lambda I) alpha = y through a Cholesky
factorization; predictions contract test-kernel columns against alpha.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs
from scipy.spatial.distance import cdist

from .dataset import AtomEnvironments, dumps_17g

KERNEL_KINDS = ("gaussian", "local_gaussian")


class FactorizationError(RuntimeError):
    """The regularized kernel matrix was not positive definite.

    ``pivot`` is the 1-based index of the failing Cholesky pivot, or 0 when
    no single pivot is attributable (e.g. every grid candidate failed).
    """

    def __init__(self, pivot: int):
        where = f" at pivot {pivot}" if pivot else " for every candidate"
        super().__init__(f"factorization failed{where}: matrix is not positive definite")
        self.pivot = pivot


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    sigma: float

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"kind: must be one of {KERNEL_KINDS}")
        if not self.sigma > 0:
            raise ValueError("sigma: must be positive")


def gaussian_kernel(xi, xj, sigma: float) -> float:
    """exp(-||xi - xj||^2 / (2 sigma^2)); 1 exactly when the points coincide."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    d2 = float(np.sum((xi - xj) ** 2))
    return float(np.exp(-d2 / (2.0 * sigma * sigma)))


def local_kernel(a: AtomEnvironments, b: AtomEnvironments, sigma: float) -> float:
    """Sum of Gaussian similarities over species-matched atom pairs of a and b."""
    total = 0.0
    for s in np.intersect1d(np.unique(a.species), np.unique(b.species)):
        va = a.vectors[a.species == s]
        vb = b.vectors[b.species == s]
        d2 = cdist(va, vb, metric="sqeuclidean")
        total += float(np.sum(np.exp(-d2 / (2.0 * sigma * sigma))))
    return total


def gaussian_gram(rows: np.ndarray, cols: np.ndarray, sigma: float) -> np.ndarray:
    """Dense Gaussian kernel matrix between two descriptor stacks."""
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    if rows.size == 0 or cols.size == 0:
        return np.zeros((rows.shape[0], cols.shape[0]))
    d2 = cdist(rows, cols, metric="sqeuclidean")
    return np.exp(-d2 / (2.0 * sigma * sigma))


def assemble_kernel(rows, cols, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix with element (i, j) = k(rows[i], cols[j]).

    Global kernel: rows/cols are descriptor matrices. Local kernel: rows/cols
    are sequences of AtomEnvironments; the square case mirrors the upper
    triangle so the result is exactly symmetric.
    """
    if spec.kind == "gaussian":
        return gaussian_gram(np.atleast_2d(rows), np.atleast_2d(cols), spec.sigma)
    for side in (rows, cols):
        for item in side:
            if not isinstance(item, AtomEnvironments):
                raise ValueError("local_gaussian requires AtomEnvironments with species tags")
    out = np.zeros((len(rows), len(cols)))
    if rows is cols:
        for i in range(len(rows)):
            for j in range(i, len(cols)):
                out[i, j] = out[j, i] = local_kernel(rows[i], cols[j], spec.sigma)
        return out
    for i in range(len(rows)):
        for j in range(len(cols)):
            out[i, j] = local_kernel(rows[i], cols[j], spec.sigma)
    return out


def fit(K_train: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (K + lambda I) alpha = y by Cholesky factorization."""
    K_train = np.asarray(K_train, dtype=float)
    y = np.asarray(y, dtype=float)
    n = K_train.shape[0]
    if K_train.shape != (n, n):
        raise ValueError("K_train must be square")
    if y.shape != (n,):
        raise ValueError("y length must match K_train")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    A = K_train + lam * np.eye(n)
    c, info = dpotrf(A, lower=1)
    if info != 0:
        raise FactorizationError(int(info))
    alpha, info = dpotrs(c, y, lower=1)
    if info != 0:  # pragma: no cover - dpotrs only fails on bad arguments
        raise FactorizationError(int(abs(info)))
    return alpha


def predict(K_test: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Dual contraction: prediction q sums alpha_i * K_test[i, q] over train points."""
    K_test = np.asarray(K_test, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if K_test.ndim != 2 or alpha.ndim != 1 or K_test.shape[0] != alpha.shape[0]:
        raise ValueError(
            f"dimension mismatch: K_test {K_test.shape} vs alpha {alpha.shape}"
        )
    return alpha @ K_test


@dataclass(frozen=True)
class KrrModel:
    """Fitted model: kernel spec, regularizer, training references and duals."""

    kernel: KernelSpec
    lam: float
    train_refs: tuple[str, ...]
    alpha: np.ndarray

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (len(self.train_refs),):
            raise ValueError("alpha length must match train_refs")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "train_refs", tuple(str(r) for r in self.train_refs))

    def to_json(self, indent: int | None = None) -> str:
        doc = {
            "kernel": {"kind": self.kernel.kind, "sigma": self.kernel.sigma},
            "lambda": self.lam,
            "train_refs": list(self.train_refs),
            "alpha": self.alpha,
        }
        return dumps_17g(doc, indent=indent) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "KrrModel":
        doc = json.loads(text)
        return cls(
            kernel=KernelSpec(kind=doc["kernel"]["kind"], sigma=float(doc["kernel"]["sigma"])),
            lam=float(doc["lambda"]),
            train_refs=tuple(doc["train_refs"]),
            alpha=np.asarray(doc["alpha"], dtype=float),
        )


def fit_model(descriptors, y, ids, spec: KernelSpec, lam: float) -> KrrModel:
    """Assemble the training Gram matrix and fit the dual coefficients."""
    K = assemble_kernel(descriptors, descriptors, spec)
    alpha = fit(K, y, lam)
    return KrrModel(kernel=spec, lam=lam, train_refs=tuple(ids), alpha=alpha)
