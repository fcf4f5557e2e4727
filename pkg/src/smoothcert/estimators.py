"""Estimator-style wrappers so the engine composes with sklearn pipelines.

``RSCertifier`` and ``DRSCertifier`` hold the certification parameters as
constructor arguments (inspectable through ``get_params``), expose
``predict`` for the smoothed majority-vote label and ``certify`` for full
certificates.  ``fit`` is a no-op: nothing is learned, the base classifier
arrives pre-trained.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from smoothcert.certify import (
    PHASE_SELECT,
    RandomStream,
    certify_drs,
    certify_rs,
    sample_under_noise,
    _count_branch,
)
from smoothcert.oracle import as_counting
from smoothcert.partition import ImageTensor, downsample, make_diagonal_partition

__all__ = ["RSCertifier", "DRSCertifier", "check_image_batch"]


def check_image_batch(X, dims: tuple[int, int, int] | None = None) -> np.ndarray:
    """Validate a batch of images shaped (N, C, H, W); a (N, D) matrix is
    accepted and viewed as (N, 1, 1, D)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, None, :]
    if X.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) or (N, D), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("image batch must be finite")
    if dims is not None and X.shape[1:] != tuple(dims):
        raise ValueError(f"expected per-sample dims {dims}, got {X.shape[1:]}")
    return X


class _CertifierBase(BaseEstimator):
    def fit(self, X=None, y=None):
        return self

    def _stream(self, i: int) -> RandomStream:
        return RandomStream(seed=self.seed).for_sample(i)


class RSCertifier(_CertifierBase):
    """Single-input smoothing certifier around one base classifier."""

    def __init__(self, oracle, *, sigma=0.25, n0=100, n=100_000, alpha=0.001,
                 seed=0, workers=None):
        self.oracle = oracle
        self.sigma = sigma
        self.n0 = n0
        self.n = n
        self.alpha = alpha
        self.seed = seed
        self.workers = workers

    def certify(self, X):
        X = check_image_batch(X)
        return [
            certify_rs(
                self.oracle, ImageTensor(x), self.sigma, self.n0, self.n,
                self.alpha, self._stream(i), workers=self.workers,
            )
            for i, x in enumerate(X)
        ]

    def predict(self, X):
        X = check_image_batch(X)
        oracle = as_counting(self.oracle)
        labels = []
        for i, x in enumerate(X):
            counts = _count_branch(
                oracle, x, self.n0, self.sigma, self._stream(i),
                PHASE_SELECT, 0, None, "bilinear", None,
            )
            labels.append(int(np.argmax(counts)))
        return np.asarray(labels, dtype=np.int64)


class DRSCertifier(_CertifierBase):
    """Dual smoothing certifier: splits each image, smooths both halves."""

    def __init__(self, oracle_left, oracle_right=None, *, sigma=0.25,
                 sigma_r=None, n0=100, n=100_000, alpha=0.001, seed=0,
                 interp="bilinear", workers=None):
        self.oracle_left = oracle_left
        self.oracle_right = oracle_right
        self.sigma = sigma
        self.sigma_r = sigma_r
        self.n0 = n0
        self.n = n
        self.alpha = alpha
        self.seed = seed
        self.interp = interp
        self.workers = workers

    def _right(self):
        return self.oracle_right if self.oracle_right is not None else self.oracle_left

    def certify(self, X):
        X = check_image_batch(X)
        idx = make_diagonal_partition(X.shape[2], X.shape[3])
        return [
            certify_drs(
                self.oracle_left, self._right(), ImageTensor(x), idx,
                self.sigma, self.n0, self.n, self.alpha, self._stream(i),
                sigma_r=self.sigma_r, interp=self.interp, workers=self.workers,
            )
            for i, x in enumerate(X)
        ]

    def predict(self, X):
        X = check_image_batch(X)
        idx = make_diagonal_partition(X.shape[2], X.shape[3])
        labels = []
        for i, x in enumerate(X):
            pair = downsample(ImageTensor(x), idx)
            counts = sample_under_noise(
                self.oracle_left, self._right(), pair.left, pair.right,
                self.n0, self.sigma, self._stream(i),
                sigma_r=self.sigma_r, phase=PHASE_SELECT,
                resize_shape=self._resize_shape(pair),
                interp=self.interp, workers=self.workers,
            )
            labels.append(int(np.argmax(counts.counts_left + counts.counts_right)))
        return np.asarray(labels, dtype=np.int64)

    def _resize_shape(self, pair):
        from smoothcert.certify import _resize_plan

        return _resize_plan(as_counting(self.oracle_left), pair.left, pair.parent_shape)
