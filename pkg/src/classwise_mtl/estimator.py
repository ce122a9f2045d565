"""scikit-learn facade over the trainer."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import as_labels
from .losses import log_softmax
from .nn import forward
from .synthlab import MultiTaskDataset
from .trainer import TrainConfig, train


class ClasswiseMTLRegressor(RegressorMixin, BaseEstimator):
    """Regressor trained jointly with an auxiliary classification task.

    ``fit(X, y, aux=labels)`` trains a shared trunk on the regression target
    ``y`` and the auxiliary class labels. With ``mode="arbiter"`` the
    per-class auxiliary weights adapt online; the other trainer modes give
    the usual baselines. A random ``val_fraction`` of the rows is held out
    for the per-epoch validation history in ``report_``.

    Attributes
    ----------
    net_ : DenseNet
    report_ : TrainReport
    class_weights_ : ndarray of shape (n_classes,)
    n_classes_ : int
    """

    def __init__(self, mode="arbiter", hidden=(64, 64), epochs=30, batch_size=32, lr=0.01,
                 lr_decay_epoch=20, lr_decayed=0.001, warmup_epochs=10, alpha=2e-4, eps=1e-8,
                 window=None, val_fraction=0.2, random_state=0):
        self.mode = mode
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay_epoch = lr_decay_epoch
        self.lr_decayed = lr_decayed
        self.warmup_epochs = warmup_epochs
        self.alpha = alpha
        self.eps = eps
        self.window = window
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            mode=self.mode, hidden=tuple(self.hidden), epochs=self.epochs, batch_size=self.batch_size,
            lr=self.lr, lr_decay_epoch=self.lr_decay_epoch, lr_decayed=self.lr_decayed,
            warmup_epochs=self.warmup_epochs, alpha=self.alpha, eps=self.eps, window=self.window,
            seed=self.random_state,
        )

    def fit(self, X, y, aux=None):
        if aux is None:
            raise ValueError("fit needs auxiliary class labels: fit(X, y, aux=labels)")
        X, y = check_X_y(X, y, multi_output=True, dtype=np.float64)
        aux = np.asarray(aux)
        self.n_classes_ = int(aux.max()) + 1
        aux = as_labels(aux, self.n_classes_, "aux", length=X.shape[0])
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        self._y_1d = y.ndim == 1
        y = y.reshape(len(y), -1)
        order = np.random.default_rng(self.random_state).permutation(len(X))
        n_val = max(1, int(round(self.val_fraction * len(X))))
        data = MultiTaskDataset(X, y, aux, np.sort(order[n_val:]), np.sort(order[:n_val]), self.n_classes_)
        self.report_ = train(None, data, self._config())
        self.net_ = self.report_.net
        self.class_weights_ = np.asarray(self.report_.final_weights)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        out = forward(self.net_, X)[0]
        return out.ravel() if self._y_1d else out

    def predict_aux_proba(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return np.exp(log_softmax(forward(self.net_, X)[1]))

    def predict_aux(self, X):
        return self.predict_aux_proba(X).argmax(axis=1)
