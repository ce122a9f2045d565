"""Turning continuous targets into class labels so class weights can apply."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted


def discretize(values, n_bins, scheme="quantile"):
    """Bin ``values`` into ``n_bins`` classes.

    Returns ``(labels, edges)`` where ``edges`` holds the ``n_bins - 1``
    interior cut points; ``apply_edges(values, edges)`` reproduces the labels.
    Quantile bins hold equal counts up to one point; uniform bins split
    ``[min, max]`` into equal widths.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ValueError("values must be non-empty and finite")
    if scheme == "quantile":
        if np.all(values == values[0]):
            raise ValueError("all values are identical; quantile bins would be degenerate")
        if np.unique(values).size < n_bins:
            raise ValueError(f"only {np.unique(values).size} distinct values for {n_bins} quantile bins")
        order = np.argsort(values, kind="stable")
        labels = np.empty(values.size, dtype=np.int64)
        # rank-based split keeps counts within one of each other
        labels[order] = (np.arange(values.size) * n_bins) // values.size
        sorted_vals = values[order]
        edges = []
        for k in range(1, n_bins):
            i = (k * values.size + n_bins - 1) // n_bins
            lo, hi = sorted_vals[i - 1], sorted_vals[i]
            if lo == hi:
                raise ValueError("tied values straddle a quantile boundary; use fewer bins or the uniform scheme")
            edges.append(0.5 * (lo + hi))
        return labels, np.array(edges)
    if scheme == "uniform":
        lo, hi = values.min(), values.max()
        if lo == hi:
            edges = np.full(n_bins - 1, lo)
        else:
            edges = lo + (hi - lo) * np.arange(1, n_bins) / n_bins
        return apply_edges(values, edges), edges
    raise ValueError(f"unknown scheme {scheme!r}")


def apply_edges(values, edges):
    """Label values by interior cut points; a value equal to an edge goes right."""
    return np.searchsorted(np.asarray(edges), np.asarray(values, dtype=np.float64).ravel(),
                           side="right").astype(np.int64)


class BinLabeler(TransformerMixin, BaseEstimator):
    """Fit bin edges on one column of training targets, then label any data.

    >>> BinLabeler(n_bins=2).fit_transform([[1.0], [2.0], [3.0], [4.0]])
    array([0, 0, 1, 1])
    """

    def __init__(self, n_bins=10, scheme="quantile", column=0):
        self.n_bins = n_bins
        self.scheme = scheme
        self.column = column

    def _column(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X if X.ndim == 1 else X[:, self.column]

    def fit(self, X, y=None):
        _, self.edges_ = discretize(self._column(X), self.n_bins, self.scheme)
        return self

    def transform(self, X):
        check_is_fitted(self, "edges_")
        return apply_edges(self._column(X), self.edges_)
