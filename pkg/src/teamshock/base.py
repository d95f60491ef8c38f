"""Estimator base class, input validation helpers, and seed derivation."""

import hashlib
import inspect

import numpy as np


class BaseEstimator:
    """Minimal scikit-learn-style parameter handling.

    Constructor arguments must all be keyword-accessible attributes of the
    same name, so models compose with grid search and serialization.
    """

    def get_params(self):
        sig = inspect.signature(type(self).__init__)
        names = [p for p in sig.parameters if p != "self"]
        return {name: getattr(self, name) for name in names}

    def set_params(self, **params):
        valid = self.get_params()
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in sorted(self.get_params().items()))
        return f"{type(self).__name__}({args})"


class NotFittedError(RuntimeError):
    pass


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


def check_array(X, *, ndim=2, name="X"):
    """Coerce to a float ndarray and reject non-finite entries."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and ndim == 2:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_X_y(X, y):
    X = check_array(X, ndim=2, name="X")
    y = check_array(y, ndim=1, name="y")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    return X, y


def derive_seed(*parts):
    """Deterministic 64-bit seed from a master seed plus context labels.

    Used everywhere a stage or iteration needs its own RNG so that parallel
    and serial execution draw identical streams.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def rng_for(*parts):
    return np.random.default_rng(derive_seed(*parts))
