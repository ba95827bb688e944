"""
Classical regressors for carbospec.
===================================

- PLSRModel: PLS1 regression by NIPALS; its scores ("collective variables")
  are the input features of the other two models.
- CubistModel: M5-style model tree (standard-deviation-reduction splits,
  least-squares leaf models, error-based pruning) read out as rules.
- LSSVMModel: least-squares SVM with a linear kernel on min-max scaled
  features, solved in closed form.

All fits are deterministic: no random numbers are drawn.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from .config import CUBIST_MIN_LEAF, LSSVM_GAMMA, PLS_COMPONENTS
from .exceptions import InvalidParamsError, LengthMismatchError, ValidationError, WidthMismatchError


class DegenerateComponentWarning(UserWarning):
    """NIPALS stopped early because a component had (numerically) zero norm."""
    pass


class SingularSystemWarning(UserWarning):
    """The LS-SVM system was singular; a pseudo-inverse solution was used."""
    pass


class TooFewSamplesError(ValidationError):
    """Not enough samples to grow a model tree."""
    pass


DEGENERATE_TOL = 1e-12
DUAL_MAX_SAMPLES = 4000


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ValidationError(f"expected a 2-D feature matrix, got shape {X.shape}")
    return X


def _check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise LengthMismatchError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("features and targets must be finite")
    return X, y


def _check_width(X: np.ndarray, expected: int) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != expected:
        raise WidthMismatchError(f"model expects {expected} features, got {X.shape[1]}")
    return X


def _lstsq_with_intercept(X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[0]), coef[1:]


# ==========================================================================
# PLSR
# ==========================================================================

@dataclass
class PLSRModel:
    """Fitted PLS1 model; predict is a single affine map."""

    weights: np.ndarray          # W, d x k
    loadings: np.ndarray         # P, d x k
    y_loadings: np.ndarray       # C, k
    x_mean: np.ndarray           # d
    y_mean: float
    x_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self._rotations = self._compute_rotations(self.n_components)
        self.coefficients = self._rotations @ self.y_loadings

    @property
    def n_components(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_features(self) -> int:
        return int(self.x_mean.shape[0])

    @property
    def rotations(self) -> np.ndarray:
        return self._rotations

    def _compute_rotations(self, k: int) -> np.ndarray:
        """R = W (P^T W)^-1 so that scores T = Xc R."""
        if k == 0:
            return np.zeros((self.n_features, 0))
        W = self.weights[:, :k]
        P = self.loadings[:, :k]
        return W @ np.linalg.inv(P.T @ W)

    def _centre(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        Xc = X - self.x_mean
        if self.x_scale is not None:
            Xc = Xc / self.x_scale
        return Xc

    def coefficients_for(self, k: int) -> np.ndarray:
        """Regression coefficients (in centred/scaled space) using the first k components."""
        if not 0 <= k <= self.n_components:
            raise InvalidParamsError(f"k must be in [0, {self.n_components}], got {k}")
        return self._compute_rotations(k) @ self.y_loadings[:k]

    def transform(self, X) -> np.ndarray:
        return plsr_transform(self, X)

    def predict(self, X) -> np.ndarray:
        return plsr_predict(self, X)

    def spectral_coefficients(self) -> np.ndarray:
        """Coefficients on the original (unscaled) feature axis."""
        if self.x_scale is None:
            return self.coefficients.copy()
        return self.coefficients / self.x_scale

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {
            "weights": self.weights,
            "loadings": self.loadings,
            "y_loadings": self.y_loadings,
            "x_mean": self.x_mean,
            "y_mean": np.array([self.y_mean]),
        }
        if self.x_scale is not None:
            arrays["x_scale"] = self.x_scale
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "PLSRModel":
        return cls(
            weights=arrays["weights"].reshape(arrays["x_mean"].size, -1),
            loadings=arrays["loadings"].reshape(arrays["x_mean"].size, -1),
            y_loadings=arrays["y_loadings"].reshape(-1),
            x_mean=arrays["x_mean"].reshape(-1),
            y_mean=float(arrays["y_mean"].reshape(-1)[0]),
            x_scale=arrays["x_scale"].reshape(-1) if "x_scale" in arrays else None,
        )


def plsr_fit(X, y, k: int = PLS_COMPONENTS, scale: bool = False) -> PLSRModel:
    """
    Fit a PLS1 model with NIPALS.

    Args:
        X: n x d predictor matrix
        y: n targets
        k (int): Number of latent components, 1 <= k <= min(n - 1, d)
        scale (bool): Divide centred columns by their standard deviation

    Returns:
        PLSRModel with k components, or fewer when a component degenerates

    Raises:
        InvalidParamsError: If k is out of range
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    if not 1 <= k <= min(n - 1, d):
        raise InvalidParamsError(f"k must satisfy 1 <= k <= min(n - 1, d) = {min(n - 1, d)}, got {k}")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    E = X - x_mean
    x_scale = None
    if scale:
        x_scale = E.std(axis=0)
        x_scale[x_scale == 0] = 1.0
        E = E / x_scale
    f = y - y_mean

    W = np.zeros((d, k))
    P = np.zeros((d, k))
    C = np.zeros(k)
    extracted = 0
    for a in range(k):
        w = E.T @ f
        w_norm = float(np.linalg.norm(w))
        if w_norm < DEGENERATE_TOL:
            break
        w /= w_norm
        t = E @ w
        tt = float(t @ t)
        if math.sqrt(tt) < DEGENERATE_TOL:
            break
        p = (E.T @ t) / tt
        c = float(f @ t) / tt
        E = E - np.outer(t, p)
        f = f - c * t
        W[:, a], P[:, a], C[a] = w, p, c
        extracted += 1

    if extracted < k:
        message = f"PLS stopped after {extracted} of {k} components (degenerate component)"
        logger.warning(message)
        warnings.warn(message, DegenerateComponentWarning, stacklevel=2)

    return PLSRModel(W[:, :extracted], P[:, :extracted], C[:extracted], x_mean, y_mean, x_scale)


def plsr_transform(model: PLSRModel, X) -> np.ndarray:
    """
    Score matrix T (n x k) of new data: the latent features for Cubist / LS-SVM.

    Raises:
        WidthMismatchError: If X has a different width than the training data
    """
    return model._centre(X) @ model._rotations


def plsr_predict(model: PLSRModel, X) -> np.ndarray:
    """Predictions y_mean + Xc · coefficients."""
    return model.y_mean + model._centre(X) @ model.coefficients


def plsr_component_rmse(model: PLSRModel, X, y) -> List[float]:
    """Validation RMSE for k = 1..n_components from one fitted model."""
    Xc = model._centre(X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    results = []
    for k in range(1, model.n_components + 1):
        pred = model.y_mean + Xc @ model.coefficients_for(k)
        results.append(float(np.sqrt(np.mean((pred - y) ** 2))))
    return results


# ==========================================================================
# Cubist / M5 model tree
# ==========================================================================

@dataclass(frozen=True)
class Condition:
    feature: int
    op: str          # "<=" or ">"
    threshold: float

    def matches(self, X: np.ndarray) -> np.ndarray:
        column = X[:, self.feature]
        return column <= self.threshold if self.op == "<=" else column > self.threshold

    def __str__(self) -> str:
        return f"t{self.feature} {self.op} {self.threshold:.6g}"


@dataclass(frozen=True)
class Rule:
    conditions: Tuple[Condition, ...]
    intercept: float
    coefficients: np.ndarray = field(compare=False)
    n_samples: int = 0

    def matches(self, X: np.ndarray) -> np.ndarray:
        mask = np.ones(X.shape[0], dtype=bool)
        for condition in self.conditions:
            mask &= condition.matches(X)
        return mask

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + X @ self.coefficients

    def describe(self) -> str:
        lhs = " and ".join(str(c) for c in self.conditions) or "true"
        return f"if {lhs} then y = {self.intercept:.6g} + linear({len(self.coefficients)} terms) [n={self.n_samples}]"


@dataclass
class _Node:
    indices: np.ndarray
    intercept: float
    coefficients: np.ndarray
    error: float
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class CubistModel:
    """Rules read off root-to-leaf paths of a pruned M5 model tree."""

    rules: List[Rule]
    n_features: int
    min_leaf: int = CUBIST_MIN_LEAF
    smoothing: bool = False

    def predict(self, T) -> np.ndarray:
        return cubist_predict(self, T)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        cond_rows = []
        model_rows = []
        for r_idx, rule in enumerate(self.rules):
            for c in rule.conditions:
                cond_rows.append([r_idx, c.feature, 0.0 if c.op == "<=" else 1.0, c.threshold])
            model_rows.append(np.concatenate([[rule.intercept, rule.n_samples], rule.coefficients]))
        return {
            "conditions": np.array(cond_rows, dtype=np.float64).reshape(-1, 4),
            "rule_models": np.array(model_rows, dtype=np.float64).reshape(len(self.rules), 2 + self.n_features),
            "meta": np.array([self.n_features, self.min_leaf, 1.0 if self.smoothing else 0.0]),
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "CubistModel":
        n_features, min_leaf, smoothing = arrays["meta"].reshape(-1)
        n_features = int(n_features)
        models = arrays["rule_models"].reshape(-1, 2 + n_features)
        conditions: List[List[Condition]] = [[] for _ in range(models.shape[0])]
        for r_idx, feature, op, threshold in arrays["conditions"].reshape(-1, 4):
            conditions[int(r_idx)].append(Condition(int(feature), "<=" if op == 0.0 else ">", float(threshold)))
        rules = [Rule(tuple(conditions[i]), float(row[0]), row[2:].copy(), int(row[1]))
                 for i, row in enumerate(models)]
        return cls(rules, n_features, int(min_leaf), bool(smoothing))


def _node_error(X: np.ndarray, y: np.ndarray, intercept: float, coef: np.ndarray) -> float:
    """Mean absolute residual inflated by (n + v) / (n - v), v = number of parameters."""
    n = y.size
    v = coef.size + 1
    mae = float(np.mean(np.abs(y - (intercept + X @ coef))))
    if n <= v:
        return math.inf if mae > 0 else 0.0
    return mae * (n + v) / (n - v)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[Tuple[int, float, float]]:
    """Largest standard-deviation reduction; ties go to the lowest feature, then threshold."""
    n = y.size
    total_sd = float(np.std(y))
    best: Optional[Tuple[int, float, float]] = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        left_n = np.arange(1, n)
        right_n = n - left_n
        left_var = np.maximum(csq[:-1] / left_n - (csum[:-1] / left_n) ** 2, 0.0)
        right_sum = csum[-1] - csum[:-1]
        right_var = np.maximum((csq[-1] - csq[:-1]) / right_n - (right_sum / right_n) ** 2, 0.0)
        sdr = total_sd - (left_n * np.sqrt(left_var) + right_n * np.sqrt(right_var)) / n

        valid = (left_n >= min_leaf) & (right_n >= min_leaf) & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        sdr = np.where(valid, sdr, -np.inf)
        i = int(np.argmax(sdr))
        if best is None or sdr[i] > best[2]:
            threshold = 0.5 * (xs[i] + xs[i + 1])
            best = (j, float(threshold), float(sdr[i]))
    return best


def _grow(X: np.ndarray, y: np.ndarray, indices: np.ndarray, min_leaf: int, sd_floor: float) -> _Node:
    Xn, yn = X[indices], y[indices]
    intercept, coef = _lstsq_with_intercept(Xn, yn)
    node = _Node(indices, intercept, coef, _node_error(Xn, yn, intercept, coef))

    if indices.size < 2 * min_leaf or float(np.std(yn)) <= sd_floor:
        return node
    split = _best_split(Xn, yn, min_leaf)
    if split is None or split[2] <= 0:
        return node
    feature, threshold, _ = split
    go_left = Xn[:, feature] <= threshold
    node.feature, node.threshold = feature, threshold
    node.left = _grow(X, y, indices[go_left], min_leaf, sd_floor)
    node.right = _grow(X, y, indices[~go_left], min_leaf, sd_floor)
    return node


def _prune(node: _Node, tol: float = 0.0) -> float:
    """
    Collapse subtrees whose error is not below the node's own linear model
    (within `tol`); returns the error of what remains.
    """
    if node.is_leaf:
        return node.error
    n_left, n_right = node.left.indices.size, node.right.indices.size
    subtree = (n_left * _prune(node.left, tol) + n_right * _prune(node.right, tol)) / (n_left + n_right)
    if node.error <= subtree + tol:
        node.left = node.right = None
        return node.error
    return subtree


SMOOTHING_CONSTANT = 15.0


def _collect_rules(node: _Node, path: Tuple[Condition, ...], ancestors: List[_Node],
                   smoothing: bool, rules: List[Rule]) -> None:
    if node.is_leaf:
        intercept, coef = node.intercept, node.coefficients.copy()
        if smoothing:
            n_below = node.indices.size
            for parent in reversed(ancestors):
                weight = n_below + SMOOTHING_CONSTANT
                intercept = (n_below * intercept + SMOOTHING_CONSTANT * parent.intercept) / weight
                coef = (n_below * coef + SMOOTHING_CONSTANT * parent.coefficients) / weight
                n_below = parent.indices.size
        rules.append(Rule(_simplify(path), intercept, coef, int(node.indices.size)))
        return
    left = path + (Condition(node.feature, "<=", node.threshold),)
    right = path + (Condition(node.feature, ">", node.threshold),)
    _collect_rules(node.left, left, ancestors + [node], smoothing, rules)
    _collect_rules(node.right, right, ancestors + [node], smoothing, rules)


def _simplify(conditions: Tuple[Condition, ...]) -> Tuple[Condition, ...]:
    """Keep only the tightest bound per (feature, direction)."""
    tightest: Dict[Tuple[int, str], float] = {}
    for c in conditions:
        key = (c.feature, c.op)
        if key not in tightest:
            tightest[key] = c.threshold
        elif c.op == "<=":
            tightest[key] = min(tightest[key], c.threshold)
        else:
            tightest[key] = max(tightest[key], c.threshold)
    return tuple(Condition(f, op, t) for (f, op), t in sorted(tightest.items()))


def cubist_fit(T, y, min_leaf: int = CUBIST_MIN_LEAF, smoothing: bool = False) -> CubistModel:
    """
    Grow, prune and read out an M5 model tree.

    Args:
        T: n x k feature matrix (PLS scores)
        y: n targets
        min_leaf (int): Minimum samples per leaf
        smoothing (bool): Blend leaf models with their ancestors' models

    Returns:
        CubistModel

    Raises:
        TooFewSamplesError: If n < 2 * min_leaf
    """
    T, y = _check_xy(T, y)
    if min_leaf < 1:
        raise InvalidParamsError(f"min_leaf must be >= 1, got {min_leaf}")
    if T.shape[0] < 2 * min_leaf:
        raise TooFewSamplesError(f"need at least {2 * min_leaf} samples, got {T.shape[0]}")

    sd_floor = 0.05 * float(np.std(y))
    root = _grow(T, y, np.arange(T.shape[0]), min_leaf, sd_floor)
    # rounding noise on exactly linear data must not keep a split alive
    _prune(root, tol=1e-9 * max(float(np.std(y)), 1e-300))
    rules: List[Rule] = []
    _collect_rules(root, (), [], smoothing, rules)
    logger.info(f"Cubist tree: {len(rules)} rules from {T.shape[0]} samples")
    return CubistModel(rules, T.shape[1], min_leaf, smoothing)


def cubist_predict(model: CubistModel, T) -> np.ndarray:
    """Each row is predicted by the rule whose conditions it satisfies."""
    T = _check_width(T, model.n_features)
    out = np.full(T.shape[0], np.nan)
    for rule in model.rules:
        mask = rule.matches(T) & np.isnan(out)
        if mask.any():
            out[mask] = rule.predict(T[mask])
    return out


# ==========================================================================
# LS-SVM
# ==========================================================================

@dataclass
class MinMaxScaler:
    """Per-feature min-max scaling fitted on training data; new data clamped to [0, 1]."""

    data_min: np.ndarray
    data_range: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span[span == 0] = 1.0
        return cls(lo, span)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return np.clip((X - self.data_min) / self.data_range, 0.0, 1.0)


@dataclass
class LSSVMModel:
    alphas: np.ndarray
    bias: float
    gamma: float
    support: np.ndarray          # scaled training inputs, n x k
    scaler: MinMaxScaler

    def __post_init__(self):
        self.primal_weights = self.support.T @ self.alphas

    @property
    def n_features(self) -> int:
        return int(self.support.shape[1])

    def predict(self, T) -> np.ndarray:
        return lssvm_predict(self, T)

    def system_residual(self, y: np.ndarray) -> float:
        """Relative residual of [0, 1^T; 1, K + I/gamma][b; alpha] = [0; y], computed matrix-free."""
        Z = self.support
        top = float(np.sum(self.alphas))
        rest = self.bias + Z @ (Z.T @ self.alphas) + self.alphas / self.gamma - y
        return float(np.sqrt(top ** 2 + rest @ rest) / max(np.linalg.norm(y), 1e-300))

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "alphas": self.alphas,
            "bias": np.array([self.bias]),
            "gamma": np.array([self.gamma]),
            "support": self.support,
            "scaler_min": self.scaler.data_min,
            "scaler_range": self.scaler.data_range,
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "LSSVMModel":
        k = arrays["scaler_min"].size
        return cls(
            alphas=arrays["alphas"].reshape(-1),
            bias=float(arrays["bias"].reshape(-1)[0]),
            gamma=float(arrays["gamma"].reshape(-1)[0]),
            support=arrays["support"].reshape(-1, k),
            scaler=MinMaxScaler(arrays["scaler_min"].reshape(-1), arrays["scaler_range"].reshape(-1)),
        )


def lssvm_fit(T, y, gamma: float = LSSVM_GAMMA) -> LSSVMModel:
    """
    Fit a linear-kernel LS-SVM.

    Solves [0, 1^T; 1, K + I/gamma] [b; alpha] = [0; y] with K = Z Z^T on
    min-max scaled features Z. Large training sets use the equivalent primal
    ridge solve and recover alpha = gamma * residual.

    Args:
        T: n x k feature matrix
        y: n targets
        gamma (float): Regularization, > 0 (ridge lambda = 1 / gamma)

    Returns:
        LSSVMModel
    """
    T, y = _check_xy(T, y)
    if not gamma > 0:
        raise InvalidParamsError(f"gamma must be > 0, got {gamma}")
    scaler = MinMaxScaler.fit(T)
    Z = scaler.transform(T)
    n, k = Z.shape

    if n <= DUAL_MAX_SAMPLES:
        A = np.empty((n + 1, n + 1))
        A[0, 0] = 0.0
        A[0, 1:] = 1.0
        A[1:, 0] = 1.0
        A[1:, 1:] = Z @ Z.T + np.eye(n) / gamma
        rhs = np.concatenate([[0.0], y])
        try:
            solution = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            message = "LS-SVM system is singular; falling back to the pseudo-inverse"
            logger.warning(message)
            warnings.warn(message, SingularSystemWarning, stacklevel=2)
            solution = np.linalg.pinv(A) @ rhs
        bias, alphas = float(solution[0]), solution[1:]
    else:
        z_mean = Z.mean(axis=0)
        y_mean = float(y.mean())
        Zc = Z - z_mean
        w = np.linalg.solve(Zc.T @ Zc + np.eye(k) / gamma, Zc.T @ (y - y_mean))
        bias = y_mean - float(z_mean @ w)
        alphas = gamma * (y - bias - Z @ w)

    model = LSSVMModel(alphas, bias, float(gamma), Z, scaler)
    logger.debug(f"LS-SVM fitted on {n} samples, residual {model.system_residual(y):.3e}")
    return model


def lssvm_predict(model: LSSVMModel, T) -> np.ndarray:
    """f(t) = sum_i alpha_i <z(t), z_i> + b."""
    T = _check_width(T, model.n_features)
    return model.scaler.transform(T) @ model.primal_weights + model.bias
