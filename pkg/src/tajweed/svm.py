"""Binary soft-margin SVM with an RBF kernel.

The dual problem

    max  sum(a) - 1/2 * sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0

is solved by SMO-style two-coordinate ascent with first-order (maximal
violating pair) working-set selection. Ties in the selection are broken
by lowest index, which makes training fully deterministic.

Also provides Platt-style sigmoid calibration of decision values and a
stratified-CV grid search over (C, gamma).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    SingleClass,
    TooFewSamples,
)
from .features import Scaler


@dataclass(frozen=True)
class KernelParams:
    gamma: float
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ValueError("only the rbf kernel is supported")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class TrainingProblem:
    """Standardized sample matrix X (l x d) with labels y in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (l, d) with one label per row")
        if X.shape[0] < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def l(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class SvmModel:
    """Kernel expansion over support vectors plus the feature scaler."""

    support_vectors: np.ndarray
    dual_coefs: np.ndarray          # alpha_i * y_i, one per support vector
    bias: float
    kernel: KernelParams
    C: float
    scaler: Scaler


def rbf_kernel(a, b, gamma: float) -> float:
    """K(a, b) = exp(-gamma * ||a - b||^2); always in (0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix K[i, j] = K(A[i], B[j])."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def train(
    problem: TrainingProblem,
    C: float,
    kernel: KernelParams,
    tol: float = 1e-3,
    max_passes: int = 10_000,
    scaler: Scaler | None = None,
) -> SvmModel:
    """Solve the dual to KKT tolerance `tol`.

    max_passes bounds the number of working-pair updates; exhausting it
    raises NoConvergence carrying the best iterate as .model. Samples with
    a_i > 0 become the support vectors. `scaler` is stored on the model
    for inference-time standardization (identity if omitted).
    """
    if C <= 0:
        raise ValueError("C must be positive")
    y = problem.y
    if np.all(y == y[0]):
        raise SingleClass("training labels contain a single class")

    X = problem.X
    l = problem.l
    K = rbf_gram(X, X, kernel.gamma)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(l)
    grad = -np.ones(l)              # gradient of 1/2 a'Qa - sum(a)

    def select_pair():
        vals = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        up_vals = np.where(up, vals, -np.inf)
        low_vals = np.where(low, vals, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        return i, j, up_vals[i] - low_vals[j]

    converged = False
    for _ in range(max_passes):
        i, j, gap = select_pair()
        if gap <= tol:
            converged = True
            break
        # move along alpha_i += y_i*t, alpha_j -= y_j*t (keeps sum(a*y) fixed)
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t_max_i = C - alpha[i] if y[i] > 0 else alpha[i]
        t_max_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(t_max_i, t_max_j)
        if eta > 1e-12:
            t = min(t, gap / eta)
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        # snap to the box so bound membership tests stay exact
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        grad += t * (y[i] * Q[:, i] - y[j] * Q[:, j])
    else:
        _, _, gap = select_pair()
        converged = gap <= tol

    bias = _solve_bias(alpha, grad, y, C)
    sv = alpha > 0
    model = SvmModel(
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha[sv] * y[sv]).copy(),
        bias=bias,
        kernel=kernel,
        C=float(C),
        scaler=scaler if scaler is not None else Scaler.identity(X.shape[1]),
    )
    if not converged:
        raise NoConvergence(
            f"KKT gap still above tol={tol} after {max_passes} pair updates", model=model
        )
    return model


def _solve_bias(alpha, grad, y, C) -> float:
    vals = -y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        return float(vals[free].mean())
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    hi = vals[up].max() if np.any(up) else 0.0
    lo = vals[low].min() if np.any(low) else 0.0
    return float((hi + lo) / 2.0)


def decision_values(model: SvmModel, X) -> np.ndarray:
    """f(x) for each row of X (raw, unstandardized inputs)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.support_vectors.shape[1]:
        raise DimensionMismatch(
            f"input dim {X.shape[1]} != model dim {model.support_vectors.shape[1]}"
        )
    Xs = model.scaler.apply(X)
    K = rbf_gram(model.support_vectors, Xs, model.kernel.gamma)
    return model.dual_coefs @ K + model.bias


def decision_value(model: SvmModel, x) -> float:
    """Signed distance-like score; sign is the predicted class."""
    return float(decision_values(model, np.atleast_2d(x))[0])


def _prob_pos(z: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(z)), overflow-safe on both tails."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    hi = z >= 0
    e = np.exp(-z[hi])
    out[hi] = e / (1.0 + e)
    e = np.exp(z[~hi])
    out[~hi] = 1.0 / (1.0 + e)
    return out


def platt_fit(scores, labels) -> tuple[float, float]:
    """Fit p(+1|f) = 1 / (1 + exp(A*f + B)) by Newton descent on the
    smoothed-target negative log-likelihood (targets (N+ + 1)/(N+ + 2) and
    1/(N- + 2) regularize against overconfident sigmoids).
    """
    f = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("calibration labels contain a single class")

    hi_t = (n_pos + 1.0) / (n_pos + 2.0)
    lo_t = 1.0 / (n_neg + 2.0)
    t = np.where(pos, hi_t, lo_t)

    def objective(a, b):
        z = a * f + b
        # sum of t*z + log(1 + e^-z), evaluated stably on both tails
        softplus_neg = np.log1p(np.exp(-np.abs(z))) + np.maximum(-z, 0.0)
        return float(np.sum(t * z + softplus_neg))

    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    best = objective(A, B)
    sigma = 1e-12
    for _ in range(100):
        z = A * f + B
        p = _prob_pos(z)
        d1 = t - p                      # dNLL/dz per sample
        d2 = np.maximum(p * (1.0 - p), 1e-300)
        g = np.array([np.dot(d1, f), d1.sum()])
        if np.abs(g).max() < 1e-10:
            break
        h11 = np.dot(d2, f * f) + sigma
        h12 = np.dot(d2, f)
        h22 = d2.sum() + sigma
        det = h11 * h22 - h12 * h12
        dA = -(h22 * g[0] - h12 * g[1]) / det
        dB = -(h11 * g[1] - h12 * g[0]) / det
        step = 1.0
        g_dot_d = g[0] * dA + g[1] * dB
        while step >= 1e-10:
            cand = objective(A + step * dA, B + step * dB)
            if cand <= best + 1e-4 * step * g_dot_d:
                A, B = A + step * dA, B + step * dB
                best = cand
                break
            step /= 2.0
        else:
            break
    return float(A), float(B)


def calibrated_probability(f, calibration: tuple[float, float]):
    """Map decision values to p(+1|x) with fitted (A, B)."""
    A, B = calibration
    return _prob_pos(A * np.asarray(f, dtype=np.float64) + B)


def fit_calibration(model: SvmModel, holdout_X, holdout_y) -> tuple[float, float]:
    """Platt sigmoid over the model's decision values on held-out samples.

    A is negative whenever the holdout labels agree in sign with f.
    """
    f = decision_values(model, holdout_X)
    return platt_fit(f, holdout_y)


def stratified_folds(y, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified k-fold assignment: each class is shuffled
    with the seed and dealt round-robin, so every fold sees both classes.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in sorted(np.unique(y).tolist()):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for pos, sample in enumerate(idx):
            folds[pos % k].append(int(sample))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass(frozen=True)
class GridCell:
    C: float
    gamma: float
    accuracy: float


@dataclass(frozen=True)
class GridSearchResult:
    best_C: float
    best_gamma: float
    table: tuple[GridCell, ...] = field(default_factory=tuple)

    def accuracy(self, C: float, gamma: float) -> float:
        for cell in self.table:
            if cell.C == C and cell.gamma == gamma:
                return cell.accuracy
        raise KeyError((C, gamma))


def grid_search(
    problem: TrainingProblem,
    C_grid=(0.1, 1.0, 10.0, 100.0),
    gamma_grid=(0.001, 0.01, 0.1, 1.0),
    k_folds: int = 5,
    seed: int = 0,
    tol: float = 1e-3,
    max_passes: int = 10_000,
) -> GridSearchResult:
    """Mean stratified-CV accuracy for every (C, gamma); the winner is the
    best pair, ties resolved toward smaller C then smaller gamma.
    """
    y = problem.y
    if problem.l < k_folds:
        raise TooFewSamples(f"{problem.l} samples < {k_folds} folds")
    for cls in (-1.0, 1.0):
        if int((y == cls).sum()) < k_folds:
            raise TooFewSamples(f"class {cls:+.0f} has fewer samples than folds")

    folds = stratified_folds(y, k_folds, seed)
    cells = []
    best = None
    for C in sorted(C_grid):
        for gamma in sorted(gamma_grid):
            accs = []
            for fold in folds:
                mask = np.ones(problem.l, dtype=bool)
                mask[fold] = False
                sub = TrainingProblem(problem.X[mask], y[mask])
                try:
                    model = train(sub, C, KernelParams(gamma=gamma), tol, max_passes)
                except NoConvergence as err:
                    model = err.model
                pred = np.sign(decision_values(model, problem.X[fold]))
                accs.append(float(np.mean(pred == y[fold])))
            mean_acc = float(np.mean(accs))
            cells.append(GridCell(C=float(C), gamma=float(gamma), accuracy=mean_acc))
            if best is None or mean_acc > best.accuracy:
                best = cells[-1]
    return GridSearchResult(best_C=best.C, best_gamma=best.gamma, table=tuple(cells))
