"""Classical comparison pipeline: per-channel window features into shrinkage LDA.

Feature layout per channel (channels in grid order, row-major over the
electrode grid): MAV, ZC, WL, RMS, SSC, AR1, AR2, AR3, AR4. The AR
coefficients use the prediction convention x[t] = sum_i a_i x[t-i] + e,
estimated with Burg's recursion (Yule-Walker selectable).

The discriminant is the shared-covariance Gaussian rule
delta_k(x) = x' S^-1 mu_k - mu_k' S^-1 mu_k / 2 + ln pi_k with the pooled
within-class covariance shrunk towards its scaled identity,
S = (1-s) Sigma + s (tr(Sigma)/dim) I. Ties break to the lowest class id.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_toeplitz

from .errors import ContractError, IllConditionedError, ParameterError, ShapeError
from .segment import WindowTensor
from .train import FoldReport, make_folds

FEATURES_PER_CHANNEL = 9
FEATURE_NAMES = ("MAV", "ZC", "WL", "RMS", "SSC", "AR1", "AR2", "AR3", "AR4")
AR_ORDER = 4


@dataclass(frozen=True)
class FeatureVector:
    """Flat feature values for one window plus its labels."""

    values: np.ndarray
    gesture_id: int
    subject_id: int
    repetition_id: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ShapeError(f"feature values must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("feature vector contains non-finite values")


@dataclass(frozen=True)
class LdaModel:
    class_ids: np.ndarray
    class_means: np.ndarray
    shared_covariance_inverse: np.ndarray
    priors: np.ndarray
    shrinkage: float


def burg_ar(x: np.ndarray, order: int) -> np.ndarray:
    """AR coefficients by Burg's method, prediction convention.

    Reflection coefficients are bounded by 1 in magnitude, so the estimated
    poles always lie inside the unit circle.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n <= order:
        raise ShapeError(f"need more than {order} samples for AR({order}), got {n}")
    a = np.zeros(0)
    f = x.copy()
    b = x.copy()
    for m in range(1, order + 1):
        fm = f[m:]
        bm = b[m - 1 : n - 1]
        den = fm @ fm + bm @ bm
        k = 0.0 if den == 0.0 else -2.0 * (fm @ bm) / den
        new_f = fm + k * bm
        new_b = bm + k * fm
        f[m:] = new_f
        b[m:] = new_b
        a = np.concatenate([a + k * a[::-1], [k]]) if a.size else np.array([k])
    return -a


def yule_walker_ar(x: np.ndarray, order: int) -> np.ndarray:
    """AR coefficients from the autocorrelation (Toeplitz) equations."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n <= order:
        raise ShapeError(f"need more than {order} samples for AR({order}), got {n}")
    r = np.array([x[: n - lag] @ x[lag:] for lag in range(order + 1)]) / n
    if r[0] == 0.0:
        return np.zeros(order)
    try:
        return solve_toeplitz((r[:-1], r[:-1]), r[1:])
    except np.linalg.LinAlgError:
        raise IllConditionedError("singular autocorrelation system") from None


_AR_METHODS = {"burg": burg_ar, "yule_walker": yule_walker_ar}


def channel_stats(x: np.ndarray, zc_threshold: float = 0.0, ssc_threshold: float = 0.0):
    """(MAV, ZC, WL, RMS, SSC) for one channel time series.

    ZC counts sign changes whose step also clears zc_threshold; SSC counts
    interior samples where both adjacent slopes point the same way (a local
    extremum) and both clear ssc_threshold in magnitude.
    """
    x = np.asarray(x, dtype=np.float64)
    diffs = np.diff(x)
    mav = float(np.mean(np.abs(x)))
    zc = int(np.sum((x[:-1] * x[1:] < 0) & (np.abs(diffs) >= zc_threshold)))
    wl = float(np.sum(np.abs(diffs)))
    rms = float(np.sqrt(np.mean(x * x)))
    left = x[1:-1] - x[:-2]
    right = x[1:-1] - x[2:]
    ssc = int(
        np.sum(
            (left * right > 0)
            & (np.abs(left) >= ssc_threshold)
            & (np.abs(right) >= ssc_threshold)
        )
    )
    return mav, zc, wl, rms, ssc


def extract_features(
    window: WindowTensor,
    zc_threshold: float = 0.0,
    ssc_threshold: float = 0.0,
    ar_method: str = "burg",
) -> FeatureVector:
    """Nine features per channel in the documented order.

    MAV  mean absolute value
    ZC   sign changes with |x[t] - x[t+1]| >= zc_threshold
    WL   total variation sum |x[t+1] - x[t]|
    RMS  root mean square
    SSC  local extrema whose both adjacent slopes are >= ssc_threshold
    AR1..AR4 Burg (or Yule-Walker) coefficients, prediction convention
    """
    if zc_threshold < 0 or ssc_threshold < 0:
        raise ParameterError("thresholds must be non-negative")
    if ar_method not in _AR_METHODS:
        raise ParameterError(f"ar_method must be one of {sorted(_AR_METHODS)}")
    t = window.data.shape[0]
    if t < AR_ORDER + 1:
        raise ShapeError(f"window of {t} samples is too short for AR({AR_ORDER})")
    fit_ar = _AR_METHODS[ar_method]
    channels = window.data.reshape(t, -1)  # grid order: row-major over (rows, cols)
    feats = np.empty(channels.shape[1] * FEATURES_PER_CHANNEL)
    for c in range(channels.shape[1]):
        x = channels[:, c]
        base = c * FEATURES_PER_CHANNEL
        feats[base : base + 5] = channel_stats(x, zc_threshold, ssc_threshold)
        feats[base + 5 : base + 9] = fit_ar(x, AR_ORDER)
    return FeatureVector(
        values=feats,
        gesture_id=window.gesture_id,
        subject_id=window.subject_id,
        repetition_id=window.repetition_id,
    )


def _fit_arrays(x: np.ndarray, y: np.ndarray, shrinkage: float) -> LdaModel:
    if not 0.0 <= shrinkage <= 1.0:
        raise ParameterError(f"shrinkage must lie in [0, 1], got {shrinkage}")
    class_ids = np.unique(y)
    if class_ids.size < 2:
        raise ContractError("LDA needs at least two classes")
    n, dim = x.shape
    means = np.empty((class_ids.size, dim))
    pooled = np.zeros((dim, dim))
    for i, cid in enumerate(class_ids):
        rows = x[y == cid]
        if len(rows) < 2:
            raise ContractError(f"class {cid} has {len(rows)} samples, needs >= 2")
        means[i] = rows.mean(axis=0)
        centered = rows - means[i]
        pooled += centered.T @ centered
    pooled /= n - class_ids.size  # unbiased pooled within-class covariance
    # identity scaled to the average variance; unit scale when the training
    # set has no within-class scatter at all (tr = 0), so degenerate
    # zero-variance classes remain classifiable
    identity_scale = np.trace(pooled) / dim
    if identity_scale == 0.0:
        identity_scale = 1.0
    shrunk = (1.0 - shrinkage) * pooled + shrinkage * identity_scale * np.eye(dim)
    eigs = np.linalg.eigvalsh(shrunk)
    if eigs[-1] <= 0.0 or eigs[0] <= eigs[-1] * 1e-12:
        raise IllConditionedError(
            "regularized covariance is singular; increase shrinkage"
        )
    inverse = np.linalg.inv(shrunk)
    priors = np.array([np.sum(y == cid) for cid in class_ids], dtype=np.float64) / n
    return LdaModel(
        class_ids=class_ids,
        class_means=means,
        shared_covariance_inverse=inverse,
        priors=priors,
        shrinkage=float(shrinkage),
    )


def lda_fit(features, shrinkage: float = 0.05) -> LdaModel:
    """Fit class means, shrunk pooled covariance (inverted once) and priors."""
    features = list(features)
    x = np.stack([f.values for f in features])
    y = np.array([f.gesture_id for f in features])
    return _fit_arrays(x, y, shrinkage)


def _discriminants(model: LdaModel, x: np.ndarray) -> np.ndarray:
    # delta_k(x) = x' S^-1 mu_k - mu_k' S^-1 mu_k / 2 + ln pi_k
    sim = model.shared_covariance_inverse @ model.class_means.T  # (dim, K)
    return x @ sim - 0.5 * np.einsum("kd,dk->k", model.class_means, sim) + np.log(model.priors)


def lda_predict(model: LdaModel, feature) -> int:
    """Most probable class id; exact ties resolve to the lowest class id."""
    values = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature, dtype=np.float64)
    if values.shape != (model.class_means.shape[1],):
        raise ShapeError(
            f"feature has dimension {values.shape}, model expects ({model.class_means.shape[1]},)"
        )
    scores = _discriminants(model, values[None, :])[0]
    return int(model.class_ids[int(np.argmax(scores))])


def lda_predict_many(model: LdaModel, x: np.ndarray) -> np.ndarray:
    scores = _discriminants(model, np.asarray(x, dtype=np.float64))
    return model.class_ids[np.argmax(scores, axis=1)]


def run_cv_lda(
    windows,
    shrinkage: float = 0.05,
    zc_threshold: float = 0.0,
    ssc_threshold: float = 0.0,
    ar_method: str = "burg",
    preprocess_seconds: float = 0.0,
) -> FoldReport:
    """Repetition-wise 5-fold CV of the LDA pipeline on the same windows and
    fold rule as the transformer path. parameter_count reports the number of
    fitted model scalars (means, inverse covariance, priors)."""
    windows = list(windows)
    make_folds(windows)  # protocol validation; membership re-derived below
    started = time.perf_counter()
    feats = [
        extract_features(w, zc_threshold, ssc_threshold, ar_method) for w in windows
    ]
    x = np.stack([f.values for f in feats])
    y = np.array([f.gesture_id for f in feats])
    reps = np.array([f.repetition_id for f in feats])
    accuracies = []
    model = None
    for k in range(5):
        test = reps == k
        model = _fit_arrays(x[~test], y[~test], shrinkage)
        predictions = lda_predict_many(model, x[test])
        accuracies.append(float(np.mean(predictions == y[test])))
    train_seconds = time.perf_counter() - started
    scalars = model.class_means.size + model.shared_covariance_inverse.size + model.priors.size
    return FoldReport.from_accuracies(
        accuracies,
        param_count=scalars,
        preprocess_seconds=preprocess_seconds,
        train_seconds=train_seconds,
    )


def export_features_csv(features, path: str) -> None:
    """One row per window; the header spells out the per-channel ordering."""
    features = list(features)
    if not features:
        raise ContractError("no feature vectors to export")
    dim = features[0].values.size
    if dim % FEATURES_PER_CHANNEL:
        raise ShapeError(
            f"feature dimension {dim} is not a multiple of {FEATURES_PER_CHANNEL}"
        )
    channels = dim // FEATURES_PER_CHANNEL
    columns = ["subject_id", "gesture_id", "repetition_id"] + [
        f"ch{c}_{name}" for c in range(channels) for name in FEATURE_NAMES
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for f in features:
            row = [str(f.subject_id), str(f.gesture_id), str(f.repetition_id)]
            row.extend(format(v, ".17g") for v in f.values)
            fh.write(",".join(row) + "\n")
