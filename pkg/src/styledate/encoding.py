"""Quantizer training (k-means, diagonal-covariance GMM) and image-level
encoders: bag-of-words histograms and Fisher vectors with the improved
(power + L2) normalization.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .descriptors import DescriptorSet
from .errors import DegenerateData, EmptySet, TooFewPoints
from .validation import as_float2d, check_dim


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, N x K, clipped at zero."""
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * (x @ centers.T)
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d2, 0.0)


class KMeansQuantizer(BaseEstimator):
    """Lloyd's k-means with deterministic k-means++ seeding.

    Empty clusters are re-seeded to the point farthest from its assigned
    center. The per-iteration objective is recorded in `objective_trace_`
    and asserted non-increasing.
    """

    def __init__(self, n_clusters=512, seed=0, max_iter=100, tol=1e-6):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X = as_float2d(X)
        n, _ = X.shape
        k = self.n_clusters
        if n < k:
            raise TooFewPoints(f"k-means needs at least {k} points, got {n}")
        rng = np.random.default_rng(self.seed)
        centers = self._plus_plus_init(X, k, rng)

        # float-noise allowance for the monotonicity assertion: the expanded
        # distance form cancels catastrophically when points sit on centers
        slack = 1e-9 * max(1.0, float(np.einsum("ij,ij->", X, X)))
        trace = []
        prev = np.inf
        for _ in range(self.max_iter):
            d2 = _sq_dists(X, centers)
            assign = np.argmin(d2, axis=1)
            obj = float(d2[np.arange(n), assign].sum())
            assert obj <= prev + slack, "k-means objective increased"
            trace.append(obj)
            # re-seed dead clusters to the farthest points before averaging, so
            # every mean is taken over the final assignment (keeps Lloyd monotone)
            counts = np.bincount(assign, minlength=k)
            if (counts == 0).any():
                dist_assigned = d2[np.arange(n), assign].copy()
                for j in np.nonzero(counts == 0)[0]:
                    far = int(np.argmax(dist_assigned))
                    assign[far] = j
                    dist_assigned[far] = -1.0
            for j in range(k):
                mask = assign == j
                if mask.any():
                    centers[j] = X[mask].mean(axis=0)
            if prev - obj < self.tol * max(abs(prev), 1.0) and np.isfinite(prev):
                break
            prev = obj
        self.centers_ = centers
        self.inertia_ = trace[-1]
        self.objective_trace_ = trace
        self.n_iter_ = len(trace)
        return self

    @staticmethod
    def _plus_plus_init(X, k, rng):
        n = len(X)
        centers = np.empty((k, X.shape[1]))
        centers[0] = X[rng.integers(n)]
        d2 = _sq_dists(X, centers[:1])[:, 0]
        for j in range(1, k):
            total = d2.sum()
            if total <= 0:
                idx = int(rng.integers(n))
            else:
                idx = int(rng.choice(n, p=d2 / total))
            centers[j] = X[idx]
            d2 = np.minimum(d2, _sq_dists(X, centers[j:j + 1])[:, 0])
        return centers

    def predict(self, X):
        X = check_dim(as_float2d(X), self.centers_.shape[1])
        out = np.empty(len(X), dtype=np.intp)
        for start in range(0, len(X), 1 << 16):  # bound the distance-matrix size
            block = X[start:start + (1 << 16)]
            out[start:start + (1 << 16)] = np.argmin(_sq_dists(block, self.centers_), axis=1)
        return out


class DiagonalGaussianMixture(BaseEstimator):
    """EM-fitted Gaussian mixture with diagonal covariances.

    Initialized from k-means; responsibilities are computed in log space and
    the mean log-likelihood is asserted non-decreasing every iteration.
    """

    def __init__(self, n_components=128, seed=0, max_iter=100, tol=1e-6,
                 variance_floor="auto"):
        self.n_components = n_components
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.variance_floor = variance_floor

    def _floor(self, X):
        if self.variance_floor == "auto":
            mean_var = float(np.mean(np.var(X, axis=0)))
            if mean_var <= 0:
                raise DegenerateData("zero variance in every dimension")
            return 1e-4 * mean_var
        return float(self.variance_floor)

    def fit(self, X, y=None):
        X = as_float2d(X)
        n, d = X.shape
        k = self.n_components
        if n < 2 * k:
            raise TooFewPoints(f"GMM needs at least {2 * k} points, got {n}")
        floor = self._floor(X)

        km = KMeansQuantizer(n_clusters=k, seed=self.seed, max_iter=30).fit(X)
        assign = km.predict(X)
        weights = np.bincount(assign, minlength=k).astype(np.float64)
        weights = np.maximum(weights, 1e-10)
        weights /= weights.sum()
        means = km.centers_.copy()
        variances = np.empty((k, d))
        for j in range(k):
            mask = assign == j
            variances[j] = X[mask].var(axis=0) if mask.any() else np.var(X, axis=0)
        variances = np.maximum(variances, floor)

        x_sq = X ** 2
        trace = []
        prev = -np.inf
        for _ in range(self.max_iter):
            log_q, ll = self._e_step(X, weights, means, variances)
            assert ll >= prev - 1e-9 * max(abs(prev), 1.0), "EM log-likelihood decreased"
            trace.append(ll)
            q = np.exp(log_q)
            q[q < 1e-12] = 0.0
            q /= q.sum(axis=1, keepdims=True)
            nk = np.maximum(q.sum(axis=0), 1e-10)
            weights = nk / nk.sum()
            means = (q.T @ X) / nk[:, None]
            variances = np.maximum((q.T @ x_sq) / nk[:, None] - means ** 2, floor)
            if ll - prev < self.tol * max(abs(ll), 1.0) and np.isfinite(prev):
                break
            prev = ll
        self.weights_ = weights
        self.means_ = means
        self.variances_ = variances
        self.variance_floor_ = floor
        self.log_likelihood_trace_ = trace
        self.n_iter_ = len(trace)
        return self

    @staticmethod
    def _log_gauss(X, means, variances):
        d = X.shape[1]
        quad = (
            (X ** 2) @ (1.0 / variances).T
            - 2.0 * (X @ (means / variances).T)
            + np.sum(means ** 2 / variances, axis=1)[None, :]
        )
        return -0.5 * (d * np.log(2.0 * np.pi) + np.sum(np.log(variances), axis=1)[None, :] + quad)

    def _e_step(self, X, weights, means, variances):
        log_joint = self._log_gauss(X, means, variances) + np.log(weights)[None, :]
        log_norm = _logsumexp(log_joint)
        return log_joint - log_norm[:, None], float(log_norm.mean())

    def predict_proba(self, X):
        """Standard (weighted) posterior responsibilities, N x K."""
        X = check_dim(as_float2d(X), self.means_.shape[1])
        log_q, _ = self._e_step(X, self.weights_, self.means_, self.variances_)
        return np.exp(log_q)

    def responsibilities(self, X, posterior="weighted"):
        """Posterior per mode: "weighted" is the standard GMM posterior;
        "printed" keeps only the exponential quadratic term (no mixture
        weights, no normalization constants)."""
        X = check_dim(as_float2d(X), self.means_.shape[1])
        if posterior == "weighted":
            return self.predict_proba(X)
        if posterior == "printed":
            quad = (
                (X ** 2) @ (0.5 / self.variances_).T
                - (X @ (self.means_ / self.variances_).T)
                + 0.5 * np.sum(self.means_ ** 2 / self.variances_, axis=1)[None, :]
            )
            log_joint = -quad
            return np.exp(log_joint - _logsumexp(log_joint)[:, None])
        raise ValueError(f"unknown posterior mode {posterior!r}")


def _logsumexp(a):
    peak = a.max(axis=1)
    return peak + np.log(np.exp(a - peak[:, None]).sum(axis=1))


# ---------------------------------------------------------------------------
# encoders
# ---------------------------------------------------------------------------

def _descriptor_matrix(desc) -> np.ndarray:
    if isinstance(desc, DescriptorSet):
        return desc.vectors.astype(np.float64)
    return as_float2d(desc, "descriptors")


def bow_encode(desc, model: KMeansQuantizer) -> np.ndarray:
    """L1-normalized histogram of nearest-center assignments.

    An empty descriptor set encodes to the all-zero vector.
    """
    X = _descriptor_matrix(desc)
    k = model.centers_.shape[0]
    if len(X) == 0:
        return np.zeros(k)
    check_dim(X, model.centers_.shape[1], "descriptors")
    counts = np.bincount(model.predict(X), minlength=k).astype(np.float64)
    return counts / counts.sum()


def fisher_vector(desc, gmm: DiagonalGaussianMixture, posterior="weighted") -> np.ndarray:
    """Mean and variance deviation statistics against the fitted mixture.

    Output stacks the K mean-deviation blocks (u, each D-dim) followed by the
    K variance-deviation blocks (v); dimension 2*K*D.
    """
    X = _descriptor_matrix(desc)
    if len(X) == 0:
        raise EmptySet("cannot encode an empty descriptor set")
    check_dim(X, gmm.means_.shape[1], "descriptors")
    n = len(X)
    q = gmm.responsibilities(X, posterior=posterior)
    sigma = np.sqrt(gmm.variances_)
    s0 = q.sum(axis=0)                      # K
    s1 = q.T @ X                            # K x D
    s2 = q.T @ (X ** 2)                     # K x D
    mu = gmm.means_
    w = gmm.weights_
    u = (s1 - mu * s0[:, None]) / (n * np.sqrt(w)[:, None] * sigma)
    v = (s2 - 2.0 * mu * s1 + (mu ** 2) * s0[:, None] - gmm.variances_ * s0[:, None]) / (
        n * np.sqrt(2.0 * w)[:, None] * gmm.variances_
    )
    return np.concatenate([u.ravel(), v.ravel()])


def ifv_normalize(vec: np.ndarray) -> np.ndarray:
    """Signed square root per component, then L2 normalization (zero maps to zero)."""
    v = np.sign(vec) * np.sqrt(np.abs(vec))
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class BagOfWordsEncoder(BaseEstimator, TransformerMixin):
    """Fits a k-means codebook on pooled descriptors, encodes sets to histograms."""

    def __init__(self, n_words=512, seed=0, max_iter=100):
        self.n_words = n_words
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        """X: pooled descriptor matrix or list of DescriptorSet to pool."""
        if isinstance(X, (list, tuple)):
            X = np.concatenate([_descriptor_matrix(d) for d in X])
        self.quantizer_ = KMeansQuantizer(self.n_words, self.seed, self.max_iter).fit(X)
        return self

    def transform(self, sets) -> np.ndarray:
        return np.stack([bow_encode(d, self.quantizer_) for d in sets])


class FisherVectorEncoder(BaseEstimator, TransformerMixin):
    """Fits the descriptor-space mixture, encodes sets to (improved) Fisher vectors."""

    def __init__(self, n_components=128, seed=0, max_iter=100, improved=True,
                 posterior="weighted"):
        self.n_components = n_components
        self.seed = seed
        self.max_iter = max_iter
        self.improved = improved
        self.posterior = posterior

    def fit(self, X, y=None):
        if isinstance(X, (list, tuple)):
            X = np.concatenate([_descriptor_matrix(d) for d in X])
        self.gmm_ = DiagonalGaussianMixture(
            n_components=self.n_components, seed=self.seed, max_iter=self.max_iter
        ).fit(X)
        return self

    def transform(self, sets) -> np.ndarray:
        rows = []
        for d in sets:
            fv = fisher_vector(d, self.gmm_, posterior=self.posterior)
            rows.append(ifv_normalize(fv) if self.improved else fv)
        return np.stack(rows)
