"""Frequency and severity GLMs with the diagnostics the ratemaking flow needs.

Two canonical-link exponential families are supported:

* Poisson with log link and an exposure offset, for claim counts:
  ``ln E[Y] = b0 + ln(exposure) + X b``
* gamma with the inverse (canonical) link and no offset, for severities:
  ``1 / E[Y] = b0 + X b``

Fitting is iteratively reweighted least squares to the maximum likelihood
estimate.  A fit carries its coefficient covariance, dispersion and training
deviance; Wald p-values, significance counts over a term block, and
generalized variance inflation factors (grouped terms handled via correlation
determinants) are computed from fitted objects and designs.

Deviances are reported unscaled (no division by the dispersion), so model
comparisons on the same data do not depend on the dispersion estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import (
    ConvergenceError,
    DesignError,
    SchemaError,
    SingularDesignError,
)
from .ingest import DesignMatrix
from .validation import as_float_matrix, as_float_vector, check_same_length

FAMILIES = ("poisson", "gamma")

_MAX_STEP_HALVINGS = 30
_EXP_OVERFLOW = 700.0


@dataclass(frozen=True)
class GlmSpec:
    """Family choice plus IRLS stopping controls.

    The link and offset usage are implied by the family: Poisson pairs with
    the log link and a log-exposure offset, gamma with the inverse link and a
    zero offset.
    """

    family: str
    max_iterations: int = 100
    tolerance: float = 1e-10
    deviance_rtol: float = 1e-12

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SchemaError(f"family must be one of {FAMILIES}")
        if self.max_iterations < 1 or self.tolerance <= 0:
            raise SchemaError("max_iterations must be >= 1 and tolerance > 0")

    @property
    def uses_offset(self) -> bool:
        return self.family == "poisson"


@dataclass(frozen=True)
class GlmFit:
    """A converged fit: coefficients, covariance, dispersion and deviance."""

    family: str
    coefficients: np.ndarray
    covariance: np.ndarray  # dispersion folded in
    dispersion: float
    deviance: float  # training deviance, unscaled
    iterations: int
    converged: bool
    column_names: tuple[str, ...]
    terms: tuple[tuple[str, tuple[int, ...]], ...]

    def term_indices(self, name: str) -> tuple[int, ...]:
        for term, idx in self.terms:
            if term == name:
                return idx
        raise DesignError(f"fit has no term named '{name}'")


@dataclass(frozen=True)
class GvifEntry:
    """Generalized VIF for one term: GVIF, df and GVIF^(1/(2 df))."""

    term: str
    df: int
    gvif: float
    gvif_adjusted: float


@dataclass(frozen=True)
class FitDiagnostics:
    """Wald p-values, per-term GVIFs and significant-count summaries."""

    p_values: np.ndarray  # per coefficient; NaN marks an undefined test
    gvif: tuple[GvifEntry, ...]
    significant: dict  # term -> (count below alpha, count expected at alpha)
    alpha: float


# ---------------------------------------------------------------------------
# family internals (canonical links only)
# ---------------------------------------------------------------------------


def _check_response(family: str, y: np.ndarray) -> None:
    if family == "poisson":
        if np.any(y < 0) or not np.all(y == np.floor(y)):
            raise SchemaError("Poisson response must be nonnegative integers")
    else:
        if np.any(y <= 0):
            raise SchemaError("gamma response must be strictly positive")


def _initial_mu(family: str, y: np.ndarray) -> np.ndarray:
    if family == "poisson":
        return y + 0.1
    return y.copy()


def _link(family: str, mu: np.ndarray) -> np.ndarray:
    return np.log(mu) if family == "poisson" else 1.0 / mu


def _mean_from_eta(family: str, eta: np.ndarray) -> np.ndarray:
    """Inverse link; assumes ``eta`` was validated by ``_eta_is_valid``."""
    return np.exp(eta) if family == "poisson" else 1.0 / eta


def _eta_is_valid(family: str, eta: np.ndarray) -> bool:
    if not np.all(np.isfinite(eta)):
        return False
    if family == "poisson":
        return bool(np.all(eta < _EXP_OVERFLOW))
    return bool(np.all(eta > 0))


def _irls_weights(family: str, mu: np.ndarray) -> np.ndarray:
    # 1 / (V(mu) g'(mu)^2) for the canonical pairings
    return mu if family == "poisson" else mu * mu


def _working_response(
    family: str, eta: np.ndarray, offset: np.ndarray, mu: np.ndarray, y: np.ndarray
) -> np.ndarray:
    if family == "poisson":
        return (eta - offset) + (y - mu) / mu
    return eta - (y - mu) / (mu * mu)


def deviance(response, mu, family: str) -> float:
    """Unscaled deviance: 2 * (saturated minus model log-likelihood).

    Poisson: ``2 sum[y ln(y / mu) - (y - mu)]`` with ``y ln y := 0`` at 0.
    Gamma:   ``2 sum[-ln(y / mu) + (y - mu) / mu]``.
    """
    y = as_float_vector(response, "response")
    m = as_float_vector(mu, "mu")
    check_same_length(("response", y), ("mu", m))
    if np.any(m <= 0):
        raise DesignError("mu must be strictly positive")
    if family == "poisson":
        if np.any(y < 0):
            raise SchemaError("Poisson response must be nonnegative")
        ylogy = np.zeros_like(y)
        pos = y > 0
        ylogy[pos] = y[pos] * np.log(y[pos] / m[pos])
        return float(2.0 * np.sum(ylogy - (y - m)))
    if family == "gamma":
        if np.any(y <= 0):
            raise SchemaError("gamma response must be strictly positive")
        return float(2.0 * np.sum(-np.log(y / m) + (y - m) / m))
    raise SchemaError(f"family must be one of {FAMILIES}")


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _name_dependent_terms(x, column_names, terms):
    """Identify columns behind a rank deficiency via pivoted QR."""
    rank = np.linalg.matrix_rank(x)
    _, _, pivot = scipy.linalg.qr(x, mode="economic", pivoting=True)
    dependent = sorted(int(i) for i in pivot[rank:])
    names = [column_names[i] for i in dependent] if column_names else dependent
    term_names = []
    for term, idx in terms or ():
        if set(idx) & set(dependent):
            term_names.append(term)
    return names, term_names


def fit_irls(
    spec: GlmSpec,
    design,
    response=None,
    offset=None,
    terms=None,
    column_names=None,
) -> GlmFit:
    """Fit a GLM by iteratively reweighted least squares.

    ``design`` may be a :class:`~embedrate.ingest.DesignMatrix` (in which case
    the response, offset, term grouping and column names come from it) or a
    plain (n, q) array that already includes its intercept column.

    Convergence is declared when the coefficient update has max-norm below
    ``spec.tolerance`` or the relative deviance change falls below
    ``spec.deviance_rtol``.  A rank-deficient design raises
    :class:`SingularDesignError` naming the collinear term; failure to
    converge raises :class:`ConvergenceError` carrying the iteration trace.
    """
    if isinstance(design, DesignMatrix):
        if response is not None or offset is not None:
            raise DesignError(
                "response/offset are taken from the DesignMatrix; "
                "do not pass them separately"
            )
        x = design.matrix
        y = design.response
        offset = design.offset
        terms = design.terms
        column_names = design.column_names
    else:
        x = as_float_matrix(design, "design")
        if response is None:
            raise DesignError("response is required with a plain design array")
        y = as_float_vector(response, "response")
    n, q = x.shape
    if offset is None:
        offset = np.zeros(n)
    offset = as_float_vector(offset, "offset")
    check_same_length(("design", x), ("response", y), ("offset", offset))
    if column_names is None:
        column_names = tuple(f"x{j}" for j in range(q))
    terms = tuple((name, tuple(idx)) for name, idx in (terms or ()))

    _check_response(spec.family, y)
    if spec.family == "gamma" and np.any(offset != 0):
        raise DesignError("the gamma severity model takes no offset")
    if n <= q:
        raise DesignError(f"need more observations ({n}) than coefficients ({q})")
    if np.linalg.matrix_rank(x) < q:
        cols, term_names = _name_dependent_terms(x, column_names, terms)
        raise SingularDesignError(
            f"design is rank deficient; collinear columns: {cols}",
            terms=term_names or cols,
        )

    mu = _initial_mu(spec.family, y)
    eta = _link(spec.family, mu) + (offset if spec.family == "poisson" else 0.0)
    beta = None
    dev = np.inf
    trace = []
    converged = False
    iterations = 0

    for iteration in range(1, spec.max_iterations + 1):
        iterations = iteration
        w = _irls_weights(spec.family, mu)
        z = _working_response(spec.family, eta, offset, mu, y)
        xtw = x.T * w
        try:
            beta_new = np.linalg.solve(xtw @ x, xtw @ z)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(
                f"weighted normal equations are singular at iteration {iteration}"
            ) from exc

        # Step-halve toward the previous iterate when the full update leaves
        # the valid linear-predictor region (gamma needs eta > 0).
        step_beta = beta_new
        halvings = 0
        while True:
            eta_new = x @ step_beta + offset
            if _eta_is_valid(spec.family, eta_new):
                break
            if beta is None or halvings >= _MAX_STEP_HALVINGS:
                raise ConvergenceError(
                    f"linear predictor left the valid region at iteration "
                    f"{iteration}",
                    trace=trace,
                )
            halvings += 1
            step_beta = beta + (step_beta - beta) / 2.0

        delta = np.inf if beta is None else float(np.max(np.abs(step_beta - beta)))
        beta = step_beta
        eta = eta_new
        mu = _mean_from_eta(spec.family, eta)
        dev_new = deviance(y, mu, spec.family)
        trace.append((iteration, dev_new, delta))
        if np.isfinite(dev):
            rel_change = abs(dev_new - dev) / max(abs(dev), 1e-300)
        else:
            rel_change = np.inf
        dev = dev_new
        if delta < spec.tolerance or rel_change < spec.deviance_rtol:
            converged = True
            break

    if not converged:
        raise ConvergenceError(
            f"IRLS did not converge in {spec.max_iterations} iterations",
            trace=trace,
        )

    w = _irls_weights(spec.family, mu)
    fisher = (x.T * w) @ x
    cov_unscaled = np.linalg.inv(fisher)
    cov_unscaled = (cov_unscaled + cov_unscaled.T) / 2.0
    if spec.family == "poisson":
        dispersion = 1.0
    else:
        pearson = float(np.sum(((y - mu) / mu) ** 2))
        dispersion = pearson / (n - q)

    # The stored deviance is computed through the same code path predict()
    # uses, so recomputing it from predict() output matches exactly.
    mu_final = _predicted_mean(
        spec.family, x, beta, offset if spec.family == "poisson" else None
    )
    return GlmFit(
        family=spec.family,
        coefficients=beta,
        covariance=dispersion * cov_unscaled,
        dispersion=dispersion,
        deviance=deviance(y, mu_final, spec.family),
        iterations=iterations,
        converged=True,
        column_names=tuple(column_names),
        terms=terms,
    )


def fit_design(spec: GlmSpec, design: DesignMatrix) -> GlmFit:
    """Convenience wrapper fitting a fully assembled design matrix."""
    return fit_irls(spec, design)


def _predicted_mean(family: str, x, beta, offset) -> np.ndarray:
    eta = x @ beta
    if family == "poisson":
        if offset is not None:
            eta = eta + offset
        return np.exp(eta)
    bad = np.flatnonzero(eta <= 0)
    if bad.size:
        shown = ", ".join(map(str, bad[:10]))
        raise DesignError(f"gamma linear predictor nonpositive at row(s): {shown}")
    return 1.0 / eta


def predict(fit: GlmFit, design, offset=None) -> np.ndarray:
    """Evaluate the fitted mean on a design.

    Poisson: ``mu = exposure * exp(x b)`` with ``offset = ln(exposure)``;
    gamma: ``mu = 1 / (x b)``, erroring if any linear predictor is
    nonpositive.
    """
    if isinstance(design, DesignMatrix):
        if offset is None:
            offset = design.offset
        design = design.matrix
    x = as_float_matrix(design, "design")
    if x.shape[1] != fit.coefficients.shape[0]:
        raise DesignError(
            f"design width {x.shape[1]} does not match coefficient count "
            f"{fit.coefficients.shape[0]}"
        )
    if fit.family == "poisson":
        if offset is not None:
            offset = as_float_vector(offset, "offset")
        return _predicted_mean("poisson", x, fit.coefficients, offset)
    if offset is not None and np.any(np.asarray(offset) != 0):
        raise DesignError("the gamma severity model takes no offset")
    return _predicted_mean("gamma", x, fit.coefficients, None)


# ---------------------------------------------------------------------------
# inference and diagnostics
# ---------------------------------------------------------------------------


def wald_p_values(fit: GlmFit) -> np.ndarray:
    """Two-sided p-values of z = coef / se against the standard normal.

    The Poisson dispersion is fixed at 1; the gamma Pearson dispersion is
    already folded into the stored covariance.  A zero standard error yields
    a NaN marker.
    """
    se = np.sqrt(np.maximum(np.diag(fit.covariance), 0.0))
    p = np.full(se.shape, np.nan)
    ok = se > 0
    z = np.abs(fit.coefficients[ok]) / se[ok]
    p[ok] = 2.0 * scipy.stats.norm.sf(z)
    return p


def standard_errors(fit: GlmFit) -> np.ndarray:
    return np.sqrt(np.maximum(np.diag(fit.covariance), 0.0))


def significant_count(
    fit: GlmFit, term: str = "embedding", alpha: float = 0.05
) -> tuple[int, float]:
    """Count block coefficients with p < alpha; also the count expected if the
    block were independent of the response (alpha per coefficient)."""
    idx = list(fit.term_indices(term))
    p = wald_p_values(fit)[idx]
    count = int(np.sum(p < alpha))
    return count, alpha * len(idx)


def _standardized_columns(x, column_names):
    xc = x - x.mean(axis=0)
    norms = np.sqrt(np.sum(xc * xc, axis=0))
    flat = np.flatnonzero(norms == 0)
    if flat.size:
        names = [column_names[i] for i in flat]
        raise DesignError(f"zero-variance design column(s): {names}")
    return xc / norms


def gvif(design, terms=None) -> tuple[GvifEntry, ...]:
    """Generalized variance inflation factors per term.

    For term T with correlation submatrices R_T (within T), R_-T (the other
    columns) and R (all columns): ``GVIF = det(R_T) det(R_-T) / det(R)``.
    Each entry also reports df (the term's column count) and
    ``GVIF^(1/(2 df))``, which is comparable across terms of different size.
    The intercept never takes part.
    """
    if isinstance(design, DesignMatrix):
        matrix = design.matrix[:, 1:]
        names = design.column_names[1:]
        groups = [
            (term, tuple(i - 1 for i in idx)) for term, idx in design.terms
        ]
    else:
        matrix = as_float_matrix(design, "design")
        names = tuple(f"x{j}" for j in range(matrix.shape[1]))
        if terms is None:
            groups = [(name, (j,)) for j, name in enumerate(names)]
        else:
            groups = [(term, tuple(idx)) for term, idx in terms]
    if len(groups) < 2:
        raise DesignError("GVIF needs at least two terms")

    z = _standardized_columns(matrix, names)
    corr = z.T @ z
    np.fill_diagonal(corr, 1.0)

    # An eigenvalue this small means a numerically exact linear dependency,
    # not ordinary (even severe) collinearity.
    sign, logdet_all = np.linalg.slogdet(corr)
    min_eig = float(np.linalg.eigvalsh(corr)[0])
    if sign <= 0 or not np.isfinite(logdet_all) or min_eig < 1e-10:
        cols, term_names = _name_dependent_terms(z, names, groups)
        raise SingularDesignError(
            f"design correlation matrix is singular; dependent columns: {cols}",
            terms=term_names or cols,
        )

    entries = []
    all_idx = np.arange(matrix.shape[1])
    for term, idx in groups:
        inside = np.asarray(idx, dtype=np.intp)
        outside = np.setdiff1d(all_idx, inside)
        sign_t, logdet_t = np.linalg.slogdet(corr[np.ix_(inside, inside)])
        sign_o, logdet_o = np.linalg.slogdet(corr[np.ix_(outside, outside)])
        if sign_t <= 0 or sign_o <= 0:
            raise SingularDesignError(
                f"correlation submatrix for term '{term}' is singular",
                terms=(term,),
            )
        value = float(np.exp(logdet_t + logdet_o - logdet_all))
        entries.append(
            GvifEntry(
                term=term,
                df=len(idx),
                gvif=value,
                gvif_adjusted=float(value ** (1.0 / (2.0 * len(idx)))),
            )
        )
    return tuple(entries)


def diagnose(fit: GlmFit, design, alpha: float = 0.05) -> FitDiagnostics:
    """All inference diagnostics for one fit over its design.

    ``design`` is the design the model was fit on (needed for the GVIFs);
    significant counts are reported for every term in the fit's grouping.
    """
    significant = {
        name: significant_count(fit, name, alpha=alpha) for name, _ in fit.terms
    }
    return FitDiagnostics(
        p_values=wald_p_values(fit),
        gvif=gvif(design) if len(fit.terms) >= 2 else (),
        significant=significant,
        alpha=alpha,
    )


# ---------------------------------------------------------------------------
# fit summary (structured text) and estimator wrapper
# ---------------------------------------------------------------------------


def format_fit_summary(
    fit: GlmFit,
    gvif_entries: tuple[GvifEntry, ...] = (),
    notes: tuple[str, ...] = (),
) -> str:
    """Render a fit as structured text: coefficient table, diagnostics table,
    scalar block."""
    lines = []
    lines.append(f"family: {fit.family}")
    for note in notes:
        lines.append(f"note: {note}")
    lines.append("")
    lines.append("coefficients:")
    lines.append("name,estimate,se,z,p")
    se = standard_errors(fit)
    p = wald_p_values(fit)
    for name, b, s, pv in zip(fit.column_names, fit.coefficients, se, p):
        z = b / s if s > 0 else np.nan
        lines.append(f"{name},{b:.10g},{s:.10g},{z:.10g},{pv:.10g}")
    if gvif_entries:
        lines.append("")
        lines.append("diagnostics:")
        lines.append("term,df,gvif,gvif_adj")
        for entry in gvif_entries:
            lines.append(
                f"{entry.term},{entry.df},{entry.gvif:.10g},"
                f"{entry.gvif_adjusted:.10g}"
            )
    lines.append("")
    lines.append(f"deviance: {fit.deviance:.10g}")
    lines.append(f"dispersion: {fit.dispersion:.10g}")
    lines.append(f"iterations: {fit.iterations}")
    lines.append(f"converged: {str(fit.converged).lower()}")
    return "\n".join(lines) + "\n"


class GlmRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style wrapper around :func:`fit_irls`.

    Adds the intercept column itself, so ``X`` carries covariates only.  The
    Poisson family accepts an ``offset`` keyword (log exposure) in both fit
    and predict.
    """

    def __init__(
        self,
        family: str = "poisson",
        max_iterations: int = 100,
        tolerance: float = 1e-10,
    ):
        self.family = family
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    def _spec(self) -> GlmSpec:
        return GlmSpec(
            family=self.family,
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
        )

    def fit(self, X, y, offset=None, terms=None):
        x = as_float_matrix(X, "X")
        design = np.hstack([np.ones((x.shape[0], 1)), x])
        names = ("(intercept)",) + tuple(f"x{j}" for j in range(x.shape[1]))
        if terms is None:
            terms = tuple((f"x{j}", (j + 1,)) for j in range(x.shape[1]))
        else:
            terms = tuple((name, tuple(i + 1 for i in idx)) for name, idx in terms)
        self.fit_ = fit_irls(
            self._spec(), design, y, offset, terms=terms, column_names=names
        )
        self.intercept_ = float(self.fit_.coefficients[0])
        self.coef_ = self.fit_.coefficients[1:].copy()
        self.deviance_ = self.fit_.deviance
        self.dispersion_ = self.fit_.dispersion
        return self

    def predict(self, X, offset=None) -> np.ndarray:
        if not hasattr(self, "fit_"):
            raise NotFittedError("GlmRegressor is not fitted; call fit first")
        x = as_float_matrix(X, "X")
        design = np.hstack([np.ones((x.shape[0], 1)), x])
        return predict(self.fit_, design, offset)
