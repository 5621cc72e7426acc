"""Gaussian copula factor model for the joint item-response distribution.

The generative form: factors f ~ N(0, I_k), latents z | f ~ N(Lf, I), and
each observed variable is x_r = Finv_r(Phi(z_r / s_r)) with
s_r = sqrt(1 + sum_t L[r,t]^2) and Finv_r the pseudo-inverse of that
variable's empirical CDF. Fitting is Gibbs: latents are truncated normals
on the intervals implied by the observed codes through the empirical CDF,
factors and loadings get conjugate normal updates. Loadings are kept
lower-triangular with nonnegative diagonal (rotation/sign identification;
only L L^T matters downstream).

The model is fit to the augmented vector (items, conditioning variables)
so that subpopulations can be targeted by conditioning after the fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    AcceptanceTooLow,
    DegenerateMarginal,
    InsufficientData,
    InvalidFactorDim,
    UnknownConditioningVar,
)
from .items import Dataset
from .kernels import truncnorm_fill


@dataclass(frozen=True)
class EmpiricalMarginal:
    """Right-continuous ECDF over the observed support of one variable."""

    values: np.ndarray  # sorted unique observed values
    cdf: np.ndarray  # ECDF at each value; cdf[-1] == 1

    def quantile(self, u):
        """Pseudo-inverse Finv(t) = inf{x : F(x) >= t}."""
        idx = np.searchsorted(self.cdf, u, side="left")
        return self.values[np.minimum(idx, len(self.values) - 1)]

    @classmethod
    def from_data(cls, col):
        values, counts = np.unique(col, return_counts=True)
        if len(values) < 2:
            raise DegenerateMarginal(f"constant column (single observed value {values[0]!r})")
        cdf = np.cumsum(counts) / len(col)
        cdf[-1] = 1.0
        return cls(values=values, cdf=cdf)


@dataclass(frozen=True)
class Condition:
    """Predicate on one conditioning variable, e.g. Condition('Age', '>=', 15)."""

    var: str
    op: str
    value: float

    _OPS = {
        ">=": np.greater_equal,
        ">": np.greater,
        "<=": np.less_equal,
        "<": np.less,
        "==": np.equal,
    }

    def mask(self, col):
        return self._OPS[self.op](col, self.value)

    @classmethod
    def parse(cls, text):
        for op in (">=", "<=", "==", ">", "<"):
            if op in text:
                var, val = text.split(op, 1)
                return cls(var.strip(), op, float(val))
        raise ValueError(f"cannot parse condition {text!r}")


@dataclass
class CopulaFactorParams:
    """One posterior draw of the copula factor model."""

    loadings: np.ndarray  # (p, k)
    marginals: list  # of EmpiricalMarginal, one per variable
    variable_names: tuple
    conditioning_names: tuple = ()

    @property
    def k(self):
        return self.loadings.shape[1]

    @property
    def p(self):
        return self.loadings.shape[0]

    @property
    def scales(self):
        return np.sqrt(1.0 + (self.loadings**2).sum(axis=1))

    def implied_correlation(self):
        cov = self.loadings @ self.loadings.T + np.eye(self.p)
        s = np.sqrt(np.diag(cov))
        return cov / np.outer(s, s)


@dataclass
class CopulaPosterior:
    draws: list  # of CopulaFactorParams
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.draws:
            raise InvalidFactorDim("posterior needs >= 1 draw")

    @property
    def D(self):
        return len(self.draws)

    def mean_implied_correlation(self):
        return np.mean([d.implied_correlation() for d in self.draws], axis=0)


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 300
    thin: int = 1
    draws: int = 200
    seed: int = 0


def _build_matrix(data: Dataset):
    """Augmented (items, conditioning) matrix plus variable bookkeeping."""
    cols = [data.responses.astype(np.float64)]
    names = list(data.item_ids)
    cond_names = tuple(v.name for v in data.bank.conditioning_vars)
    if data.conditioning.size:
        cols.append(data.conditioning.astype(np.float64))
    names += list(cond_names)
    X = np.hstack(cols) if data.conditioning.size else cols[0]
    return X, tuple(names), cond_names


def fit_gcfm(data: Dataset, k: int, mcmc: McmcConfig = McmcConfig()) -> CopulaPosterior:
    """Fit the copula factor model by Gibbs sampling over (z, f, loadings)."""
    if k < 1:
        raise InvalidFactorDim(f"factor count must be >= 1, got {k}")
    X, names, cond_names = _build_matrix(data)
    n, p = X.shape
    if n < 10 * k:
        raise InsufficientData(f"need n >= 10*k = {10 * k}, got {n}")

    marginals = [EmpiricalMarginal.from_data(X[:, r]) for r in range(p)]

    # Per-observation latent interval endpoints on the standardized scale:
    # code level l constrains z / s_r to (ndtri(F(l-1)), ndtri(F(l))].
    lo_base = np.empty((n, p))
    hi_base = np.empty((n, p))
    for r in range(p):
        m = marginals[r]
        idx = np.searchsorted(m.values, X[:, r])
        hi = ndtri(np.clip(m.cdf, 1e-12, 1.0))
        lo = np.concatenate(([-np.inf], hi[:-1]))
        lo_base[:, r] = lo[idx]
        hi_base[:, r] = hi[idx]

    rng = np.random.default_rng(mcmc.seed)
    lam = np.zeros((p, k))
    lam[np.arange(k), np.arange(k)] = 0.5
    # init latents at interval midpoints on the standardized scale
    mid = np.clip((ndtr(lo_base) + ndtr(hi_base)) / 2.0, 1e-6, 1 - 1e-6)
    Z = ndtri(mid)
    F = rng.standard_normal((n, k)) * 0.1

    n_iter = mcmc.burn_in + mcmc.thin * mcmc.draws
    draws = []
    rho_trace = []
    eye_k = np.eye(k)
    for it in range(n_iter):
        # latents z | f, loadings
        s = np.sqrt(1.0 + (lam**2).sum(axis=1))
        mean = F @ lam.T
        u = rng.random((n, p))
        Z = truncnorm_fill(mean, lo_base * s, hi_base * s, u)

        # factors f | z, loadings
        prec = eye_k + lam.T @ lam
        cov = np.linalg.inv(prec)
        chol = np.linalg.cholesky(cov)
        F = Z @ lam @ cov + rng.standard_normal((n, k)) @ chol.T

        # loadings row by row, lower-triangular free entries, N(0,1) prior
        for r in range(p):
            kf = min(r + 1, k)
            Fk = F[:, :kf]
            P = np.eye(kf) + Fk.T @ Fk
            Pc = np.linalg.cholesky(P)
            mu = np.linalg.solve(P, Fk.T @ Z[:, r])
            lam[r, :kf] = mu + np.linalg.solve(Pc.T, rng.standard_normal(kf))
            lam[r, kf:] = 0.0
        # sign identification: nonnegative diagonal
        for t in range(k):
            if lam[t, t] < 0:
                lam[:, t] *= -1.0
                F[:, t] *= -1.0

        if it >= mcmc.burn_in and (it - mcmc.burn_in) % mcmc.thin == 0:
            draws.append(
                CopulaFactorParams(
                    loadings=lam.copy(),
                    marginals=marginals,
                    variable_names=names,
                    conditioning_names=cond_names,
                )
            )
            corr = draws[-1].implied_correlation()
            rho_trace.append(float(np.mean(np.abs(corr[np.triu_indices(p, 1)]))))

    diagnostics = {"rho_trace": rho_trace}
    if len(rho_trace) >= 20:
        half = len(rho_trace) // 2
        a, b = np.array(rho_trace[:half]), np.array(rho_trace[half:])
        se = np.std(rho_trace) / np.sqrt(half) + 1e-12
        diagnostics["halves_zscore"] = float(abs(a.mean() - b.mean()) / se)
        if diagnostics["halves_zscore"] > 6.0:
            diagnostics["converged"] = False
            warnings.warn("copula chain may not have converged (trace halves differ)")
        else:
            diagnostics["converged"] = True
    return CopulaPosterior(draws=draws, diagnostics=diagnostics)


def _sample_rows(theta: CopulaFactorParams, N: int, rng) -> np.ndarray:
    f = rng.standard_normal((N, theta.k))
    z = f @ theta.loadings.T + rng.standard_normal((N, theta.p))
    u = ndtr(z / theta.scales)
    out = np.empty((N, theta.p), dtype=np.int32)
    for r in range(theta.p):
        out[:, r] = theta.marginals[r].quantile(u[:, r])
    return out


def sample_predictive(theta: CopulaFactorParams, N: int, seed: int) -> np.ndarray:
    """Draw N synthetic rows (items + conditioning values) from f(x | theta)."""
    if N < 1:
        raise InvalidFactorDim(f"N must be >= 1, got {N}")
    return _sample_rows(theta, N, np.random.default_rng(seed))


def sample_conditional(
    theta: CopulaFactorParams,
    predicate,
    N: int,
    seed: int,
    floor: float = 0.01,
) -> np.ndarray:
    """Predictive sampling restricted to a predicate, by rejection.

    ``predicate`` is a Condition (or list of them) on declared conditioning
    variables, or None for unconditional sampling. Raises AcceptanceTooLow
    once the proposal budget N / floor is exhausted.
    """
    if N < 1:
        raise InvalidFactorDim(f"N must be >= 1, got {N}")
    if predicate is None:
        return sample_predictive(theta, N, seed)
    conds = predicate if isinstance(predicate, (list, tuple)) else [predicate]
    col_idx = {}
    for c in conds:
        if c.var not in theta.conditioning_names:
            raise UnknownConditioningVar(
                f"{c.var!r} is not a declared conditioning variable {theta.conditioning_names}"
            )
        col_idx[c.var] = theta.variable_names.index(c.var)

    rng = np.random.default_rng(seed)
    budget = int(np.ceil(N / floor))
    accepted = []
    got = 0
    proposed = 0
    while got < N:
        if proposed >= budget:
            raise AcceptanceTooLow(
                f"accepted {got}/{N} after {proposed} proposals (floor {floor})"
            )
        batch = _sample_rows(theta, N, rng)
        proposed += N
        mask = np.ones(N, dtype=bool)
        for c in conds:
            mask &= c.mask(batch[:, col_idx[c.var]])
        keep = batch[mask]
        accepted.append(keep)
        got += len(keep)
    return np.vstack(accepted)[:N]
