"""Estimator-style front end for metric curves."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .metrics import CurveRow, Metric, evaluate
from .model import MdpConfig, Mechanism


class MechanismEvaluator(BaseEstimator):
    """Evaluate one security metric of one reward mechanism over an alpha grid.

    ``fit`` takes the alpha grid (shape ``(n,)`` or ``(n, 1)``) and solves
    every point; ``predict`` returns metric values, solving any alpha that
    was not part of the fitted grid.  Being a plain estimator it can be
    cloned with altered windows for sensitivity sweeps.
    """

    def __init__(self, mechanism="prs", metric="relative_reward", gamma=0.5, omega=6, wfork=6,
                 max_fork=12, v_ds=3.0, conf=6, ds_per_block=True, tol=1e-4):
        self.mechanism = mechanism
        self.metric = metric
        self.gamma = gamma
        self.omega = omega
        self.wfork = wfork
        self.max_fork = max_fork
        self.v_ds = v_ds
        self.conf = conf
        self.ds_per_block = ds_per_block
        self.tol = tol

    def _config(self, alpha: float) -> MdpConfig:
        return MdpConfig(alpha=float(alpha), gamma=self.gamma, mechanism=Mechanism(self.mechanism),
                         omega=self.omega, wfork=self.wfork, max_fork=self.max_fork,
                         v_ds=self.v_ds, conf=self.conf, ds_per_block=self.ds_per_block)

    @staticmethod
    def _alphas(X) -> np.ndarray:
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=1)
        return X[:, 0]

    def fit(self, X, y=None):
        Metric(self.metric)
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        alphas = self._alphas(X)
        results = [evaluate(self.metric, self._config(a), self.tol) for a in alphas]
        self.alphas_ = alphas
        self.values_ = np.array([r.value for r in results])
        self.iterations_ = np.array([r.iterations for r in results])
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "values_")
        known = dict(zip(self.alphas_.tolist(), self.values_.tolist()))
        out = []
        for a in self._alphas(X):
            if a in known:
                out.append(known[a])
            else:
                out.append(evaluate(self.metric, self._config(a), self.tol).value)
        return np.array(out)

    def excess(self) -> np.ndarray:
        """Distance of the fitted curve from the fair-share reference."""
        check_is_fitted(self, "values_")
        if Metric(self.metric) is Metric.RELATIVE_REWARD:
            return self.values_ - self.alphas_
        return self.values_.copy()

    def curve(self) -> list[CurveRow]:
        check_is_fitted(self, "values_")
        return [CurveRow(Mechanism(self.mechanism).value, Metric(self.metric).value, float(a),
                         float(self.gamma), self.omega, self.wfork, float(v), int(it))
                for a, v, it in zip(self.alphas_, self.values_, self.iterations_)]
