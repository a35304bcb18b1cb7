"""Gaussian mixture models over object dimensions (millimeters).

A fitted mixture is an immutable value: evaluation, marginalization and
sampling never mutate it, so instances can be shared freely across threads.
Fitting is plain EM with k-means++ initialization and BIC model selection;
the number of size modes per category is small (1 to 3), so nothing fancier
is needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InputValidationError
from .validation import as_points

# Smallest admissible covariance eigenvalue, in mm^2. Duplicate catalog sizes
# would otherwise produce singular covariances.
COV_FLOOR = 1.0

_LOG_2PI = float(np.log(2.0 * np.pi))


def _floor_covariance(cov: np.ndarray, cov_floor: float) -> np.ndarray:
    """Clip covariance eigenvalues from below and re-symmetrize."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] >= cov_floor:
        return cov
    vals = np.maximum(vals, cov_floor)
    return (vecs * vals) @ vecs.T


def _gaussian_log_density(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log N(x; mean, cov) for rows of X, via Cholesky."""
    d = mean.shape[0]
    chol = np.linalg.cholesky(cov)
    diff = X - mean
    # Solve L y = diff^T by forward substitution; d <= 3 so cost is trivial.
    y = np.linalg.solve(chol, diff.T)
    maha = np.sum(y * y, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * _LOG_2PI + log_det + maha)


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted mixture of full-covariance Gaussians in 1 to 3 dimensions.

    Attributes:
        weights: (K,) positive, sums to 1 after construction-time normalization.
        means: (K, d) component means, millimeters.
        covariances: (K, d, d) SPD matrices, millimeters squared; every
            eigenvalue is at least ``COV_FLOOR`` (or the floor passed to the
            constructor path that built the mixture).
        em_log_likelihoods: per-iteration total log-likelihood recorded by
            :func:`fit_gmm`; None for mixtures built directly or deserialized.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    em_log_likelihoods: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        if cov.ndim == 2:
            cov = cov[None, :, :]
        k, d = mu.shape
        if d not in (1, 2, 3):
            raise InputValidationError(f"mixture dimension must be 1, 2 or 3, got {d}")
        if w.shape != (k,) or cov.shape != (k, d, d):
            raise InputValidationError(
                f"inconsistent mixture shapes: weights {w.shape}, means {mu.shape}, "
                f"covariances {cov.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(mu).all() and np.isfinite(cov).all()):
            raise InputValidationError("mixture parameters contain non-finite values")
        if (w <= 0).any():
            raise InputValidationError("mixture weights must be strictly positive")
        w = w / w.sum()
        if abs(w.sum() - 1.0) > 1e-9:
            raise InputValidationError("mixture weights failed to normalize")
        cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
        for c in cov:
            if np.linalg.eigvalsh(c)[0] <= 0:
                raise InputValidationError("mixture covariance is not positive definite")
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    def _as_rows(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.dims:
            raise InputValidationError(
                f"query points must have {self.dims} coordinates, got shape {np.shape(x)}"
            )
        if not np.isfinite(arr).all():
            raise InputValidationError("query points contain non-finite values")
        return arr, single

    def log_density(self, x):
        """Mixture log-density via log-sum-exp over components.

        Accepts one d-vector or an (n, d) batch; returns a scalar or (n,).
        """
        X, single = self._as_rows(x)
        parts = np.empty((X.shape[0], self.n_components))
        for k in range(self.n_components):
            parts[:, k] = np.log(self.weights[k]) + _gaussian_log_density(
                X, self.means[k], self.covariances[k]
            )
        out = logsumexp(parts, axis=1)
        return float(out[0]) if single else out

    def density(self, x):
        out = np.exp(self.log_density(x))
        return float(out) if np.ndim(out) == 0 else out

    def marginalize(self, keep) -> "GaussianMixture":
        """Restrict to a subset of coordinates (exact Gaussian marginal).

        ``keep`` holds coordinate indices into 0..dims-1; order is normalized
        to ascending, duplicates are rejected.
        """
        idx = sorted(int(i) for i in keep)
        if not idx:
            raise InputValidationError("keep set must be non-empty")
        if len(set(idx)) != len(idx) or idx[0] < 0 or idx[-1] >= self.dims:
            raise InputValidationError(
                f"keep indices must be distinct and within 0..{self.dims - 1}, got {list(keep)}"
            )
        sub = np.ix_(idx, idx)
        return GaussianMixture(
            weights=self.weights.copy(),
            means=self.means[:, idx],
            covariances=np.stack([c[sub] for c in self.covariances]),
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n points; component choice then a multivariate normal draw."""
        counts = rng.multinomial(n, self.weights)
        chunks = []
        for k, c in enumerate(counts):
            if c:
                chunks.append(
                    rng.multivariate_normal(self.means[k], self.covariances[k], size=c)
                )
        out = np.concatenate(chunks, axis=0) if chunks else np.empty((0, self.dims))
        return out[rng.permutation(n)]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GaussianMixture":
        try:
            return cls(
                weights=np.asarray(payload["weights"], dtype=np.float64),
                means=np.asarray(payload["means"], dtype=np.float64),
                covariances=np.asarray(payload["covs"], dtype=np.float64),
            )
        except KeyError as exc:
            raise InputValidationError(f"gmm payload missing key {exc}") from exc


def _kmeanspp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray | None:
    """Seeded k-means++ center selection; None if k distinct points don't exist."""
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = ((X[:, None, :] - np.asarray(centers)[None, :, :]) ** 2).sum(-1).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            return None
        centers.append(X[int(rng.choice(n, p=d2 / total))])
    return np.asarray(centers)


def _m_step(X, resp, cov_floor):
    n, d = X.shape
    nk = resp.sum(axis=0) + 10.0 * np.finfo(np.float64).eps
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    covs = np.empty((resp.shape[1], d, d))
    for k in range(resp.shape[1]):
        diff = X - means[k]
        covs[k] = (resp[:, k][:, None] * diff).T @ diff / nk[k]
        covs[k] = _floor_covariance(covs[k], cov_floor)
    return weights, means, covs


def _fit_em(X, k, rng, cov_floor, max_iter, tol):
    """EM for a fixed component count; returns (params, loglik path) or None."""
    n = X.shape[0]
    centers = _kmeanspp_centers(X, k, rng)
    if centers is None:
        return None
    assign = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1).argmin(axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), assign] = 1.0
    weights, means, covs = _m_step(X, resp, cov_floor)

    path = []
    prev = -np.inf
    for _ in range(max_iter):
        log_parts = np.empty((n, k))
        for j in range(k):
            log_parts[:, j] = np.log(weights[j]) + _gaussian_log_density(X, means[j], covs[j])
        log_norm = logsumexp(log_parts, axis=1)
        loglik = float(log_norm.sum())
        path.append(loglik)
        if loglik - prev < tol * n and np.isfinite(prev):
            break
        prev = loglik
        resp = np.exp(log_parts - log_norm[:, None])
        weights, means, covs = _m_step(X, resp, cov_floor)
    return (weights, means, covs), np.asarray(path)


def _bic(loglik: float, k: int, d: int, n: int) -> float:
    n_params = (k - 1) + k * d + k * d * (d + 1) // 2
    return -2.0 * loglik + n_params * np.log(n)


def fit_gmm(
    samples,
    max_components: int = 3,
    *,
    min_samples: int = 10,
    cov_floor: float = COV_FLOOR,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-7,
) -> GaussianMixture:
    """Fit a Gaussian mixture to size samples, selecting K by BIC.

    Each candidate K in 1..max_components is fitted by EM from a seeded
    k-means++ initialization; the fit with the lowest BIC wins (ties go to
    the smaller K). The returned mixture carries the winning EM run's
    per-iteration log-likelihoods in ``em_log_likelihoods``.

    Raises InputValidationError when fewer than ``min_samples`` samples are
    given or the sample dimension is not 1, 2 or 3.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] not in (1, 2, 3):
        raise InputValidationError(f"samples must be (n, d) with d in 1..3, got {X.shape}")
    X = as_points(X, dims=X.shape[1], name="samples")
    n, d = X.shape
    if n < min_samples:
        raise InputValidationError(f"need at least {min_samples} samples, got {n}")
    if max_components < 1:
        raise InputValidationError("max_components must be at least 1")

    if np.ptp(X, axis=0).max() == 0.0:
        warnings.warn(
            "all size samples identical; returning a single floored component",
            stacklevel=2,
        )
        return GaussianMixture(
            weights=np.ones(1),
            means=X[:1].copy(),
            covariances=cov_floor * np.eye(d)[None],
            em_log_likelihoods=np.empty(0),
        )

    best = None
    for k in range(1, max_components + 1):
        rng = np.random.default_rng([seed, k])
        fit = _fit_em(X, k, rng, cov_floor, max_iter, tol)
        if fit is None:
            continue
        (weights, means, covs), path = fit
        bic = _bic(path[-1], k, d, n)
        if best is None or bic < best[0] - 1e-12:
            best = (bic, weights, means, covs, path)
    assert best is not None  # k=1 always fits once data is not all-identical
    _, weights, means, covs, path = best
    return GaussianMixture(
        weights=weights, means=means, covariances=covs, em_log_likelihoods=path
    )
