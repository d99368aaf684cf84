"""scikit-learn style wrappers around training and the k-NN baseline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .activations import ActivationKind
from .baselines import knn_predict_batch
from .config import random_orthogonal
from .core import ODENetSpec
from .data import Dataset, one_hot
from .forward import predict as odenet_predict
from .optimizer import OptimizerConfig, init_params, train


class _ODENetBase(BaseEstimator):
    def __init__(
        self,
        T=1.0,
        L=20,
        activation="tanh",
        A=None,
        A_scale=1.0,
        tau=0.01,
        tau1=0.0,
        method="sgd",
        batch_size=32,
        max_epochs=100,
        eta_stop=0.0,
        init="zeros",
        random_state=0,
    ):
        self.T = T
        self.L = L
        self.activation = activation
        self.A = A
        self.A_scale = A_scale
        self.tau = tau
        self.tau1 = tau1
        self.method = method
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.eta_stop = eta_stop
        self.init = init
        self.random_state = random_state

    def _readout(self, m, n):
        if self.A is None:
            return self.A_scale * random_orthogonal(m, n, self.random_state)
        return self.A_scale * np.atleast_2d(np.asarray(self.A, dtype=np.float64))

    def _fit(self, X, Y, task):
        n, m = X.shape[1], Y.shape[1]
        act = self.activation if isinstance(self.activation, ActivationKind) else ActivationKind.parse(self.activation)
        self.spec_ = ODENetSpec(n, m, self._readout(m, n), self.T, self.L, act)
        cfg = OptimizerConfig(
            tau=self.tau,
            tau1=self.tau1,
            eta_stop=self.eta_stop,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            seed=self.random_state,
            method=self.method,
        )
        state = train(self.spec_, init_params(self.spec_, self.init), Dataset(X, Y, task), None, cfg)
        self.params_ = state.params
        self.history_ = state.history
        self.n_epochs_ = state.epoch
        self.n_features_in_ = n
        return self

    def _outputs(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}")
        if X.shape[0] == 0:
            return np.empty((0, self.spec_.m))
        return odenet_predict(self.spec_, self.params_, X)


class ODENetRegressor(RegressorMixin, _ODENetBase):
    """Regression with y(T) as the prediction; multi-output targets are supported."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        Y = y[:, None] if y.ndim == 1 else y
        if Y.shape[1] > X.shape[1]:
            raise ValueError("the number of outputs may not exceed the number of features")
        return self._fit(X, Y, "regression")

    def predict(self, X):
        out = self._outputs(X)
        return out[:, 0] if self._y_1d else out


class ODENetClassifier(ClassifierMixin, _ODENetBase):
    """Two classes use one output thresholded at 0.5; more use one-hot outputs and argmax."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        if len(self.classes_) == 2:
            return self._fit(X, codes[:, None].astype(np.float64), "binary")
        return self._fit(X, one_hot(codes, len(self.classes_)), "multiclass")

    def decision_function(self, X):
        out = self._outputs(X)
        return out[:, 0] if len(self.classes_) == 2 else out

    def predict(self, X):
        out = self._outputs(X)
        if len(self.classes_) == 2:
            return self.classes_[(out[:, 0] >= 0.5).astype(int)]
        return self.classes_[np.argmax(out, axis=1)]


class KNNClassifier(ClassifierMixin, BaseEstimator):
    """Brute-force k-nearest neighbours; distance ties go to the lower training index."""

    def __init__(self, k=3):
        self.k = k

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) == 2:
            self.train_ = Dataset(X, codes[:, None].astype(np.float64), "binary")
        else:
            self.train_ = Dataset(X, one_hot(codes, len(self.classes_)), "multiclass")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "train_")
        X = check_array(X, dtype=np.float64)
        return self.classes_[knn_predict_batch(self.train_, X, self.k)]
