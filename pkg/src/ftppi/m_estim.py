"""Rectified M-estimation: losses, solver, and sandwich covariance.

The rectified empirical risk replaces unknown labels on the big pool
with predictions and debiases with the labeled rectification subset:

    L(theta) = mean_i[ loss(x_i, y_i; theta) - loss(x_i, f(x_i); theta) ]
             + mean_j[ loss(x_tilde_j, f(x_tilde_j); theta) ].

Its minimizer is asymptotically normal with a sandwich covariance
H^-1 (V_resid/(n-s) + V_pred/m) H^-1, where H is the mean Hessian on
the labeled rectification subset and the V's are score covariances.

Built-in losses cover scalar means, categorical frequency vectors,
linear regression, and multinomial choice with an outside option.
Categorical outcomes are integer labels 1..d; choice outcomes are
0..K with 0 meaning "none of the options".  Predictors must emit hard
labels for these discrete losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    ConvergenceError,
    CsvFormatError,
    DomainError,
    InsufficientDataError,
    LabeledDataset,
    NumericalError,
    ParameterError,
    Predictor,
    SingularHessianError,
    UnlabeledDataset,
    _parse_matrix,
    _read_rows,
)
from .ppi_mean import normal_quantile, _check_delta

#: Hessians with a condition number beyond this are treated as singular.
CONDITION_LIMIT = 1e12
#: Convergence threshold on the max-norm of the rectified score.
SCORE_TOL = 1e-10
MAX_ITERATIONS = 200


@dataclass(frozen=True)
class LossModel:
    """A twice-differentiable per-sample loss with vectorized companions.

    ``loss``, ``score`` and ``hessian`` act on a single (x, y, theta);
    the ``batch_*`` callables act on stacked arrays and must agree with
    the per-sample versions (the test suite checks this with finite
    differences).
    """

    name: str
    dim: int
    loss: Callable[[np.ndarray, float, np.ndarray], float]
    score: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    batch_loss_mean: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    batch_score: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    batch_hessian_mean: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SandwichCovariance:
    """Pieces of the sandwich: bread (H) and both filling covariances."""

    h_hat: np.ndarray
    v_resid: np.ndarray
    v_pred: np.ndarray
    sigma_hat: np.ndarray
    n_ppi: int
    m: int


@dataclass(frozen=True)
class MEstimateReport:
    """Estimate, covariance, per-coordinate intervals, and scalar summaries."""

    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    delta: float
    nu_det: float
    nu_trace: float


# ---------------------------------------------------------------------------
# Built-in losses
# ---------------------------------------------------------------------------


def mean_loss() -> LossModel:
    """Squared loss whose minimizer is the mean: loss = (y - theta)^2 / 2."""

    def loss(x, y, theta):
        return 0.5 * (y - theta[0]) ** 2

    def score(x, y, theta):
        return np.array([theta[0] - y])

    def hessian(x, y, theta):
        return np.array([[1.0]])

    def batch_loss_mean(xs, ys, theta):
        return float(np.mean(0.5 * (ys - theta[0]) ** 2))

    def batch_score(xs, ys, theta):
        return (theta[0] - ys)[:, None]

    def batch_hessian_mean(xs, ys, theta):
        return np.array([[1.0]])

    return LossModel("mean", 1, loss, score, hessian, batch_loss_mean, batch_score, batch_hessian_mean)


def _as_label(value: float, d: int, what: str, base: int) -> int:
    lab = int(round(float(value)))
    if abs(float(value) - lab) > 1e-6 or not base <= lab <= base + d - 1:
        raise DomainError(
            f"{what}: labels must be integers in [{base}, {base + d - 1}], got {value!r}"
        )
    return lab


def _one_hot_matrix(ys: np.ndarray, d: int, what: str, base: int) -> np.ndarray:
    # d is the column count; with base=0 the label 0 means "outside option"
    # (all-zero row), so valid labels run from base up to d in both modes.
    labs = np.rint(ys).astype(np.int64)
    if np.max(np.abs(ys - labs)) > 1e-6 or labs.min() < base or labs.max() > d:
        raise DomainError(
            f"{what}: labels must be integers in [{base}, {d}]"
        )
    out = np.zeros((ys.shape[0], d))
    rows = np.arange(ys.shape[0])
    if base == 0:
        keep = labs > 0
        out[rows[keep], labs[keep] - 1] = 1.0
    else:
        out[rows, labs - base] = 1.0
    return out


def categorical_loss(d: int) -> LossModel:
    """Squared loss on one-hot labels; the minimizer is the class-frequency vector.

    Outcomes are integer labels in 1..d.
    """
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ParameterError(f"categorical_loss: d must be an integer >= 2, got {d!r}")
    d = int(d)
    eye = np.eye(d)

    def one_hot(y):
        lab = _as_label(y, d, "categorical", base=1)
        e = np.zeros(d)
        e[lab - 1] = 1.0
        return e

    def loss(x, y, theta):
        diff = one_hot(y) - theta
        return 0.5 * float(np.dot(diff, diff))

    def score(x, y, theta):
        return theta - one_hot(y)

    def hessian(x, y, theta):
        return eye.copy()

    def batch_loss_mean(xs, ys, theta):
        diff = _one_hot_matrix(ys, d, "categorical", base=1) - theta[None, :]
        return float(np.mean(0.5 * np.sum(diff * diff, axis=1)))

    def batch_score(xs, ys, theta):
        return theta[None, :] - _one_hot_matrix(ys, d, "categorical", base=1)

    def batch_hessian_mean(xs, ys, theta):
        return eye.copy()

    return LossModel(
        "categorical", d, loss, score, hessian, batch_loss_mean, batch_score, batch_hessian_mean
    )


def linear_regression_loss(d: int) -> LossModel:
    """Least squares: loss = (y - x.theta)^2 / 2 with d regression coefficients."""
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ParameterError(f"linear_regression_loss: d must be >= 1, got {d!r}")
    d = int(d)

    def check_x(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != d:
            raise DomainError(f"linear regression: expected {d} features, got {x.shape[0]}")
        return x

    def loss(x, y, theta):
        x = check_x(x)
        return 0.5 * float((y - x @ theta) ** 2)

    def score(x, y, theta):
        x = check_x(x)
        return x * (x @ theta - y)

    def hessian(x, y, theta):
        x = check_x(x)
        return np.outer(x, x)

    def batch_loss_mean(xs, ys, theta):
        r = ys - xs @ theta
        return float(np.mean(0.5 * r * r))

    def batch_score(xs, ys, theta):
        return xs * (xs @ theta - ys)[:, None]

    def batch_hessian_mean(xs, ys, theta):
        return xs.T @ xs / xs.shape[0]

    return LossModel(
        "ols", d, loss, score, hessian, batch_loss_mean, batch_score, batch_hessian_mean
    )


def mnl_loss(n_options: int, dim_per_option: int) -> LossModel:
    """Multinomial choice likelihood with an outside option.

    A sample's feature vector stacks the K option vectors (row-major:
    option 1's features, then option 2's, ...), and the outcome is the
    chosen index in 0..K, 0 meaning the outside option.  The loss is the
    negative log-likelihood; its minimizer recovers the utility weights.
    """
    if not isinstance(n_options, (int, np.integer)) or n_options < 1:
        raise ParameterError(f"mnl_loss: n_options must be >= 1, got {n_options!r}")
    if not isinstance(dim_per_option, (int, np.integer)) or dim_per_option < 1:
        raise ParameterError(f"mnl_loss: dim_per_option must be >= 1, got {dim_per_option!r}")
    K, d = int(n_options), int(dim_per_option)

    def options(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != K * d:
            raise DomainError(
                f"mnl: expected stacked features of length {K * d}, got {x.shape[0]}"
            )
        return x.reshape(K, d)

    def _probs(X, theta):
        u = X @ theta  # (K,)
        top = max(0.0, float(np.max(u)))
        expu = np.exp(u - top)
        denom = math.exp(-top) + float(np.sum(expu))
        lse = top + math.log(denom)
        return expu / (denom), lse  # probs over the K options; outside prob implied

    def loss(x, y, theta):
        X = options(x)
        choice = _as_label(y, K + 1, "mnl", base=0)
        _, lse = _probs(X, theta)
        picked = float(X[choice - 1] @ theta) if choice > 0 else 0.0
        return lse - picked

    def score(x, y, theta):
        X = options(x)
        choice = _as_label(y, K + 1, "mnl", base=0)
        p, _ = _probs(X, theta)
        ind = np.zeros(K)
        if choice > 0:
            ind[choice - 1] = 1.0
        return X.T @ (p - ind)

    def hessian(x, y, theta):
        X = options(x)
        p, _ = _probs(X, theta)
        g = X.T @ p
        return X.T @ (p[:, None] * X) - np.outer(g, g)

    def _batch_probs(xs, theta):
        X = xs.reshape(-1, K, d)
        u = np.einsum("nkd,d->nk", X, theta)
        top = np.maximum(0.0, u.max(axis=1))
        expu = np.exp(u - top[:, None])
        denom = np.exp(-top) + expu.sum(axis=1)
        lse = top + np.log(denom)
        return X, expu / denom[:, None], lse

    def batch_loss_mean(xs, ys, theta):
        X, _, lse = _batch_probs(xs, theta)
        ind = _one_hot_matrix(ys, K, "mnl", base=0)
        picked = np.einsum("nkd,d,nk->n", X, theta, ind)
        return float(np.mean(lse - picked))

    def batch_score(xs, ys, theta):
        X, p, _ = _batch_probs(xs, theta)
        ind = _one_hot_matrix(ys, K, "mnl", base=0)
        return np.einsum("nkd,nk->nd", X, p - ind)

    def batch_hessian_mean(xs, ys, theta):
        X, p, _ = _batch_probs(xs, theta)
        full = np.einsum("nk,nkd,nke->de", p, X, X) / X.shape[0]
        g = np.einsum("nkd,nk->nd", X, p)
        return full - g.T @ g / X.shape[0]

    return LossModel(
        "mnl", d, loss, score, hessian, batch_loss_mean, batch_score, batch_hessian_mean
    )


def builtin_loss(kind: str, **kwargs) -> LossModel:
    """Look up a built-in loss by name: mean, categorical, ols, or mnl."""
    if kind == "mean":
        return mean_loss()
    if kind == "categorical":
        if "dim" not in kwargs:
            raise ParameterError("categorical loss needs dim=<number of classes>")
        return categorical_loss(kwargs["dim"])
    if kind == "ols":
        if "dim" not in kwargs:
            raise ParameterError("ols loss needs dim=<number of coefficients>")
        return linear_regression_loss(kwargs["dim"])
    if kind == "mnl":
        if "n_options" not in kwargs or "dim" not in kwargs:
            raise ParameterError("mnl loss needs n_options=<K> and dim=<features per option>")
        return mnl_loss(kwargs["n_options"], kwargs["dim"])
    raise ParameterError(f"unknown loss kind {kind!r} (expected mean|categorical|ols|mnl)")


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


def _rectified_pieces(loss: LossModel, labeled_ppi, unlabeled, f):
    xl, yl = labeled_ppi.xs, labeled_ppi.ys
    fl = f.on(labeled_ppi)
    xu = unlabeled.xs
    fu = f.on(unlabeled)

    def objective(theta):
        return (
            loss.batch_loss_mean(xl, yl, theta)
            - loss.batch_loss_mean(xl, fl, theta)
            + loss.batch_loss_mean(xu, fu, theta)
        )

    def score(theta):
        return (
            loss.batch_score(xl, yl, theta).mean(axis=0)
            - loss.batch_score(xl, fl, theta).mean(axis=0)
            + loss.batch_score(xu, fu, theta).mean(axis=0)
        )

    def hess(theta):
        return (
            loss.batch_hessian_mean(xl, yl, theta)
            - loss.batch_hessian_mean(xl, fl, theta)
            + loss.batch_hessian_mean(xu, fu, theta)
        )

    return objective, score, hess


def solve_ppi_m_estimator(
    loss: LossModel,
    labeled_ppi: LabeledDataset,
    unlabeled: UnlabeledDataset,
    f: Predictor,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize the rectified empirical risk by damped Newton.

    Newton steps with objective-based step halving; if the rectified
    Hessian is numerically singular the step falls back to plain gradient
    descent.  Convergence means the rectified score's max-norm drops
    below 1e-10; running out of iterations raises ConvergenceError with
    the last iterate attached.
    """
    theta = np.zeros(loss.dim) if init is None else np.asarray(init, dtype=np.float64).copy()
    if theta.shape != (loss.dim,):
        raise ParameterError(f"init must have shape ({loss.dim},), got {theta.shape}")
    objective, score, hess = _rectified_pieces(loss, labeled_ppi, unlabeled, f)

    g = score(theta)
    for _ in range(MAX_ITERATIONS):
        norm = float(np.max(np.abs(g)))
        if norm < SCORE_TOL:
            return theta
        H = hess(theta)
        use_gradient = False
        try:
            cond = np.linalg.cond(H)
            if not np.isfinite(cond) or cond > CONDITION_LIMIT:
                use_gradient = True
            else:
                direction = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            use_gradient = True
        if use_gradient:
            direction = -g
        base = objective(theta)
        step = 1.0
        halvings = 0
        while objective(theta + step * direction) > base and halvings < 60:
            step *= 0.5
            halvings += 1
        if halvings >= 60:
            raise ConvergenceError(
                "step halving stalled before the score converged",
                last_iterate=theta,
                score_norm=norm,
            )
        theta = theta + step * direction
        g = score(theta)

    raise ConvergenceError(
        f"no convergence in {MAX_ITERATIONS} iterations "
        f"(score max-norm {float(np.max(np.abs(g))):.3e})",
        last_iterate=theta,
        score_norm=float(np.max(np.abs(g))),
    )


# ---------------------------------------------------------------------------
# Covariance
# ---------------------------------------------------------------------------


def _covariance(rows: np.ndarray) -> np.ndarray:
    centered = rows - rows.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / (rows.shape[0] - 1)
    return 0.5 * (cov + cov.T)


def _repair_psd(sigma: np.ndarray) -> np.ndarray:
    sigma = 0.5 * (sigma + sigma.T)
    eigvals, eigvecs = np.linalg.eigh(sigma)
    trace = float(np.trace(sigma))
    floor = -1e-8 * max(trace, 0.0)
    if eigvals.min() < floor:
        raise NumericalError(
            f"covariance has eigenvalue {eigvals.min():.3e}, "
            f"below the repairable floor {floor:.3e}"
        )
    if eigvals.min() < 0.0:
        eigvals = np.clip(eigvals, 0.0, None)
        sigma = (eigvecs * eigvals) @ eigvecs.T
        sigma = 0.5 * (sigma + sigma.T)
    return sigma


def sandwich_covariance(
    loss: LossModel,
    labeled_ppi: LabeledDataset,
    unlabeled: UnlabeledDataset,
    f: Predictor,
    theta_hat: np.ndarray,
) -> SandwichCovariance:
    """Sandwich covariance of the rectified M-estimate.

    V_resid is the covariance of per-sample score differences
    score(x, y) - score(x, f(x)) on the rectification subset (divisor
    n_ppi - 1); V_pred is the covariance of score(x~, f(x~)) on the pool
    (divisor m - 1); H is the mean Hessian on the rectification subset
    with true labels.  The product H^-1 (...) H^-1 is formed by linear
    solves, never an explicit inverse.
    """
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1)
    if theta_hat.shape != (loss.dim,):
        raise ParameterError(f"theta_hat must have shape ({loss.dim},)")
    if labeled_ppi.n < loss.dim + 1:
        raise InsufficientDataError(
            f"sandwich needs n_ppi >= dim+1 ({loss.dim + 1}), got {labeled_ppi.n}"
        )
    if unlabeled.m < loss.dim + 1:
        raise InsufficientDataError(
            f"sandwich needs m >= dim+1 ({loss.dim + 1}), got {unlabeled.m}"
        )
    xl, yl = labeled_ppi.xs, labeled_ppi.ys
    fl = f.on(labeled_ppi)
    delta_scores = loss.batch_score(xl, yl, theta_hat) - loss.batch_score(xl, fl, theta_hat)
    v_resid = _covariance(delta_scores)
    pool_scores = loss.batch_score(unlabeled.xs, f.on(unlabeled), theta_hat)
    v_pred = _covariance(pool_scores)

    h_hat = loss.batch_hessian_mean(xl, yl, theta_hat)
    h_hat = 0.5 * (h_hat + h_hat.T)
    cond = np.linalg.cond(h_hat)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularHessianError(
            f"mean Hessian is numerically singular (condition ~{cond:.3e})", condition=float(cond)
        )

    middle = v_resid / labeled_ppi.n + v_pred / unlabeled.m
    sigma = np.linalg.solve(h_hat, np.linalg.solve(h_hat, middle).T).T
    sigma = _repair_psd(sigma)
    return SandwichCovariance(
        h_hat=h_hat,
        v_resid=v_resid,
        v_pred=v_pred,
        sigma_hat=sigma,
        n_ppi=labeled_ppi.n,
        m=unlabeled.m,
    )


def scalarize(v: np.ndarray, h: np.ndarray, mode: str) -> float:
    """Collapse a score covariance to a scalar for allocation decisions.

    ``det`` returns det(V)^(1/d), tracking confidence-ellipsoid volume;
    ``trace`` returns tr(H^-1 H^-1 V), tracking summed coordinate MSE.
    Either scalar decays in s like a power law plus floor, so the same
    split solver applies downstream.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ParameterError(f"scalarize: V must be square, got {v.shape}")
    if np.max(np.abs(v - v.T)) > 1e-10 * max(1.0, float(np.max(np.abs(v)))):
        raise ParameterError("scalarize: V must be symmetric")
    d = v.shape[0]
    if mode == "det":
        det = float(np.linalg.det(v))
        if det < -1e-10:
            raise NumericalError(f"scalarize: determinant {det:.3e} is negative beyond tolerance")
        return float(max(det, 0.0) ** (1.0 / d))
    if mode == "trace":
        h = np.asarray(h, dtype=np.float64)
        if h.shape != v.shape:
            raise ParameterError(f"scalarize: H must match V's shape, got {h.shape}")
        cond = np.linalg.cond(h)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise SingularHessianError(
                f"scalarize: H is numerically singular (condition ~{cond:.3e})",
                condition=float(cond),
            )
        return float(np.trace(np.linalg.solve(h, np.linalg.solve(h, v))))
    raise ParameterError(f"scalarize: mode must be 'det' or 'trace', got {mode!r}")


def m_estimate_ci(
    cov: SandwichCovariance, theta_hat: np.ndarray, delta: float
) -> MEstimateReport:
    """Per-coordinate normal intervals plus both scalar summaries."""
    delta = _check_delta(delta)
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1)
    d = cov.sigma_hat.shape[0]
    if theta_hat.shape != (d,):
        raise ParameterError(f"theta_hat must have shape ({d},)")
    z = normal_quantile(1.0 - delta / 2.0)
    half = z * np.sqrt(np.clip(np.diag(cov.sigma_hat), 0.0, None))
    return MEstimateReport(
        theta_hat=theta_hat,
        sigma_hat=cov.sigma_hat,
        ci_low=theta_hat - half,
        ci_high=theta_hat + half,
        delta=delta,
        nu_det=scalarize(cov.v_resid, cov.h_hat, "det"),
        nu_trace=scalarize(cov.v_resid, cov.h_hat, "trace"),
    )


# ---------------------------------------------------------------------------
# Choice-data CSV ingestion: header ``choice,x_1_1,...,x_K_d`` where x_k_j
# is feature j of option k.  Unlabeled files drop the choice column.
# ---------------------------------------------------------------------------


def _parse_option_header(path: str, names: list[str]) -> tuple[int, int]:
    if not names:
        raise CsvFormatError(f"{path}: no option feature columns found")
    pairs = []
    for name in names:
        parts = name.split("_")
        if len(parts) != 3 or parts[0] != "x":
            raise CsvFormatError(
                f"{path}: expected option columns named x_<k>_<j>, got {name!r}"
            )
        try:
            pairs.append((int(parts[1]), int(parts[2])))
        except ValueError:
            raise CsvFormatError(
                f"{path}: expected option columns named x_<k>_<j>, got {name!r}"
            ) from None
    K = max(p[0] for p in pairs)
    d = max(p[1] for p in pairs)
    expected = [(k, j) for k in range(1, K + 1) for j in range(1, d + 1)]
    if pairs != expected:
        raise CsvFormatError(
            f"{path}: option columns must be x_1_1..x_{K}_{d} in row-major order"
        )
    return K, d


def read_choice_labeled_csv(path: str) -> tuple[LabeledDataset, int, int]:
    """Read choice data; returns (dataset, n_options, features per option)."""
    header, rows = _read_rows(path)
    if not header or header[0] != "choice":
        raise CsvFormatError(f"{path}: first column must be 'choice', got {header[:1]}")
    K, d = _parse_option_header(path, header[1:])
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    mat = _parse_matrix(path, header, rows)
    choices = mat[:, 0]
    labs = np.rint(choices)
    bad = np.nonzero((np.abs(choices - labs) > 1e-9) | (labs < 0) | (labs > K))[0]
    if bad.size:
        raise CsvFormatError(
            f"{path}: row {bad[0] + 2}, column choice: must be an integer in [0, {K}], "
            f"got {choices[bad[0]]}"
        )
    return LabeledDataset(mat[:, 1:], choices), K, d


def read_choice_unlabeled_csv(path: str) -> tuple[UnlabeledDataset, int, int]:
    """Read option features without choices; returns (dataset, K, d)."""
    header, rows = _read_rows(path)
    K, d = _parse_option_header(path, header)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    mat = _parse_matrix(path, header, rows)
    return UnlabeledDataset(mat), K, d
