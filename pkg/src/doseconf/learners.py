"""Regression learners: the built-in gradient-boosted trees and the S-learner wrapper.

Any object with ``fit(X, y)`` and ``predict(X)`` can stand in for the built-in
learner; predictions must be finite for finite inputs and deterministic for a
fixed seed.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.exceptions import NotFittedError
from sklearn.tree import DecisionTreeRegressor

from ._rng import substream
from ._validation import check_consistent_length, check_matrix, check_vector


class GradientBoostedTrees(BaseEstimator, RegressorMixin):
    """Least-squares gradient boosting on shallow regression trees.

    Parameters
    ----------
    n_estimators : int, default=500
        Number of boosting rounds.
    learning_rate : float, default=0.1
        Shrinkage applied to each tree's contribution.
    max_depth : int, default=4
        Maximum depth of the individual trees.
    min_samples_leaf : int, default=20
        Minimum samples per leaf; limits interpolation of pure noise.
    random_state : int or None, default=None
        Seed for tie-breaking inside the tree fits.

    Attributes
    ----------
    init_ : float
        Initial prediction (target mean).
    trees_ : list of DecisionTreeRegressor
    train_scores_ : ndarray of shape (n_estimators + 1,)
        Training MSE before boosting and after each round; non-increasing
        for learning rates in (0, 2).
    """

    def __init__(self, n_estimators=500, learning_rate=0.1, max_depth=4,
                 min_samples_leaf=20, random_state=None):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X = check_matrix(X)
        try:
            y = check_vector(y, "y")
        except ValueError as exc:
            raise ValueError(f"cannot fit on degenerate targets: {exc}") from exc
        check_consistent_length(X, y)
        if not 0.0 < self.learning_rate < 2.0:
            raise ValueError("learning_rate must lie in (0, 2)")
        rng = substream(self.random_state or 0, "learner")
        tree_seeds = rng.integers(0, 2**31 - 1, size=self.n_estimators)
        self.init_ = float(np.mean(y))
        residual = y - self.init_
        self.trees_ = []
        scores = [float(np.mean(residual**2))]
        for seed in tree_seeds:
            tree = DecisionTreeRegressor(
                max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf,
                random_state=int(seed),
            )
            tree.fit(X, residual)
            residual = residual - self.learning_rate * tree.predict(X)
            scores.append(float(np.mean(residual**2)))
            self.trees_.append(tree)
        self.train_scores_ = np.asarray(scores)
        return self

    def predict(self, X):
        if not hasattr(self, "trees_"):
            raise NotFittedError("GradientBoostedTrees instance is not fitted yet")
        X = check_matrix(X)
        pred = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            pred += self.learning_rate * tree.predict(X)
        return pred


class CadrfRegressor(BaseEstimator):
    """S-learner for the conditional dose-response surface.

    A single learner is fit on the concatenated features ``[x, t]`` and
    queried at arbitrary treatment values to trace a dose-response curve.

    Parameters
    ----------
    learner : regressor with fit/predict, optional
        Cloned before fitting; defaults to :class:`GradientBoostedTrees`.
    """

    def __init__(self, learner=None):
        self.learner = learner

    def fit(self, X, t, y):
        X = check_matrix(X)
        t = check_vector(t, "t")
        try:
            y = check_vector(y, "y")
        except ValueError as exc:
            raise ValueError(f"cannot fit dose-response model: {exc}") from exc
        check_consistent_length(X, t, y)
        base = self.learner if self.learner is not None else GradientBoostedTrees()
        self.learner_ = clone(base)
        self.learner_.fit(np.column_stack([X, t]), y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, t):
        """Predict outcomes at covariates ``X`` and dose ``t`` (scalar or per-row)."""
        if not hasattr(self, "learner_"):
            raise NotFittedError("CadrfRegressor instance is not fitted yet")
        X = check_matrix(X)
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        return self.learner_.predict(np.column_stack([X, t]))


def fit_cadrf(learner, train):
    """Fit an S-learner dose-response model on the given dataset.

    Parameters
    ----------
    learner : regressor with fit/predict, or None for the built-in default
    train : Dataset

    Returns
    -------
    CadrfRegressor, fitted.
    """
    if len(train) == 0:
        raise ValueError("training split is empty")
    return CadrfRegressor(learner=learner).fit(train.X, train.t, train.y)
