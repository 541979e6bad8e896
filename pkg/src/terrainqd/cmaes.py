"""Covariance Matrix Adaptation Evolution Strategy, maximization form.

Standard rank-mu update with positive recombination weights, cumulative
step-size adaptation, and an evolution path for the rank-one term. The
caller supplies any real-valued quality per candidate (an objective, or
an archive-improvement value); only the induced ranking matters. Ties
keep ask order.
"""

from __future__ import annotations

import math

import numpy as np

_MAX_SIGMA = 1e12
_MAX_CONDITION = 1e14


class CmaEsError(RuntimeError):
    """Numerical failure that requires a restart."""


class CmaEs:
    def __init__(self, mean, sigma0: float, population_size: int | None = None,
                 rng: np.random.Generator | None = None):
        self.mean = np.array(mean, dtype=np.float64)
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if not sigma0 > 0.0:
            raise ValueError("sigma0 must be positive")
        n = self.mean.size
        self.dim = n
        self.sigma = float(sigma0)
        self.rng = rng if rng is not None else np.random.default_rng()

        lam = population_size if population_size else 4 + int(3 * math.log(n))
        if lam < 2:
            raise ValueError("population_size must be >= 2")
        self.population_size = lam
        mu = lam // 2
        raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        self.weights = raw / raw.sum()
        self.mu = mu
        self.mueff = float(1.0 / np.sum(self.weights**2))

        # strategy constants, canonical defaults for this dimension
        self.c_sigma = (self.mueff + 2.0) / (n + self.mueff + 5.0)
        self.d_sigma = (1.0 + 2.0 * max(0.0, math.sqrt((self.mueff - 1.0) / (n + 1.0)) - 1.0)
                        + self.c_sigma)
        self.c_c = (4.0 + self.mueff / n) / (n + 4.0 + 2.0 * self.mueff / n)
        self.c_1 = 2.0 / ((n + 1.3) ** 2 + self.mueff)
        self.c_mu = min(1.0 - self.c_1,
                        2.0 * (self.mueff - 2.0 + 1.0 / self.mueff) / ((n + 2.0) ** 2 + self.mueff))
        self.chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self._eig_fresh = False
        self._basis: np.ndarray | None = None
        self._scales: np.ndarray | None = None

    # ------------------------------------------------------------------

    def _decompose(self) -> None:
        if self._eig_fresh:
            return
        cov = (self.cov + self.cov.T) / 2.0
        if not np.all(np.isfinite(cov)):
            raise CmaEsError("covariance lost finiteness")
        try:
            eigvals, basis = np.linalg.eigh(cov)
        except np.linalg.LinAlgError as exc:
            raise CmaEsError(f"covariance decomposition failed: {exc}") from exc
        top = float(eigvals[-1])
        if not (np.isfinite(top) and top > 0.0):
            raise CmaEsError("covariance has no positive eigenvalue")
        floor = top / _MAX_CONDITION
        clamped = np.maximum(eigvals, floor)
        if clamped[0] != eigvals[0]:
            # repair: project back to the nearest well-conditioned SPD matrix
            cov = (basis * clamped) @ basis.T
            cov = (cov + cov.T) / 2.0
        self.cov = cov
        self._basis = basis
        self._scales = np.sqrt(clamped)
        self._eig_fresh = True

    @property
    def smallest_eigenvalue(self) -> float:
        self._decompose()
        return float(self._scales[0] ** 2)

    def ask(self) -> np.ndarray:
        """Sample population_size candidates from N(mean, sigma^2 C)."""
        self._decompose()
        z = self.rng.standard_normal((self.population_size, self.dim))
        y = (z * self._scales) @ self._basis.T
        return self.mean + self.sigma * y

    def tell(self, solutions, values) -> None:
        """Rank candidates by value (descending) and update the strategy."""
        solutions = np.asarray(solutions, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if solutions.shape != (self.population_size, self.dim):
            raise ValueError("solutions shape does not match the population")
        if values.shape != (self.population_size,):
            raise ValueError("values must align 1:1 with solutions")
        order = np.argsort(-values, kind="stable")
        top = solutions[order[: self.mu]]

        old_mean = self.mean
        y_top = (top - old_mean) / self.sigma
        y_w = self.weights @ y_top
        self.mean = old_mean + self.sigma * y_w

        self._decompose()
        inv_sqrt_y = (self._basis / self._scales) @ (self._basis.T @ y_w)
        cs = self.c_sigma
        self.p_sigma = ((1.0 - cs) * self.p_sigma
                        + math.sqrt(cs * (2.0 - cs) * self.mueff) * inv_sqrt_y)
        ps_norm = float(np.linalg.norm(self.p_sigma))
        self.sigma *= math.exp(min(1.0, (cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)))

        expected = math.sqrt(1.0 - (1.0 - cs) ** (2 * (self.generation + 1)))
        h_sigma = 1.0 if ps_norm / expected / self.chi_n < 1.4 + 2.0 / (self.dim + 1.0) else 0.0
        cc = self.c_c
        self.p_c = ((1.0 - cc) * self.p_c
                    + h_sigma * math.sqrt(cc * (2.0 - cc) * self.mueff) * y_w)

        rank_mu = (y_top.T * self.weights) @ y_top
        delta_h = (1.0 - h_sigma) * cc * (2.0 - cc)
        self.cov = ((1.0 - self.c_1 - self.c_mu) * self.cov
                    + self.c_1 * (np.outer(self.p_c, self.p_c) + delta_h * self.cov)
                    + self.c_mu * rank_mu)
        self.generation += 1
        self._eig_fresh = False

        if not (np.all(np.isfinite(self.mean)) and math.isfinite(self.sigma)
                and 0.0 < self.sigma < _MAX_SIGMA):
            raise CmaEsError("strategy state lost finiteness")
