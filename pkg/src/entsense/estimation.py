"""Phase estimation: fringe calibration, per-block MLE, block statistics.

The estimation chain mirrors how the measured data are reduced: a scan of
coincidence fractions versus the set phase calibrates the four fringe
curves (shared visibility and phase origin, per-channel offsets); blocks
of k_bar informative events are then inverted one at a time by maximum
likelihood against the calibrated curves; the spread of the per-block
estimates is the measured precision, with the chi-distribution error bar
delta/sqrt(2(s-1)).

Branch discipline: the fringe depends on the set phases only through
cos(3*theta_hat + phi0), which is even and 2*pi/3-periodic in theta_hat,
so only u = 3*theta_hat in (0, pi) is identifiable.  Estimates are
reported folded onto that branch as theta_hat in (0, pi/3); truths outside
it come back as their folded image u <-> 2*pi - u.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .errors import (
    ConfigurationError,
    DegenerateEstimateWarning,
    DomainError,
    EmptyStatisticsError,
    FitError,
)
from .events import Tally
from .model import COINCIDENCE_CHANNELS, COINCIDENCE_PATTERNS, INFORMATIVE_PATTERNS

__all__ = [
    "FRINGE_SIGNS",
    "FringeFit",
    "fit_fringe",
    "fold_to_branch",
    "mle_phase",
    "estimate_blocks",
    "BlockStats",
    "block_stats",
    "fisher_from_precision",
]


def fold_to_branch(theta_hat):
    """Identifiable image of any phase value in the branch [0, pi/3].

    The fringe reads only cos(3*theta_hat), so values equal modulo the
    period or mirrored about its midpoint are indistinguishable; this is
    the map every truth must pass through before being compared with an
    estimate.
    """
    period = 2.0 * math.pi / 3.0
    t = float(theta_hat) % period
    return period - t if t > period / 2.0 else t

# Anti-phase pattern of the four coincidence channels (A1B1, A1B2, A2B1,
# A2B2): the first and last fall as cos(u) rises, the middle two grow.
FRINGE_SIGNS = (-1.0, 1.0, 1.0, -1.0)

_MIN_SETPOINTS = 5
_HALF_PERIOD = math.pi / 3.0  # span requirement, in theta_hat


@dataclass(frozen=True)
class FringeFit:
    """Calibrated fringe curves for the four coincidence channels.

    The fitted model per channel is

        fraction_ch(theta) = offset_ch * (1 + sign_ch * V * cos(3*theta + phi0))

    so the fringe amplitude of a channel is offset_ch * V.  Parameter
    order in the covariance matrix is (offset_A1B1, offset_A1B2,
    offset_A2B1, offset_A2B2, visibility_hat, phase_offset).
    """

    visibility_hat: float
    phase_offset: float
    offsets: tuple
    covariance: np.ndarray = field(repr=False)
    residual_chi2: float
    dof: int

    def __post_init__(self):
        if not 0.0 <= self.visibility_hat <= 1.0:
            raise ConfigurationError(
                f"fitted visibility must lie in [0, 1], got {self.visibility_hat}"
            )
        offsets = tuple(float(a) for a in self.offsets)
        if len(offsets) != 4 or any(a <= 0 for a in offsets):
            raise ConfigurationError("fit needs four positive channel offsets")
        object.__setattr__(self, "offsets", offsets)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (6, 6):
            raise ConfigurationError(f"covariance must be 6x6, got {cov.shape}")
        object.__setattr__(self, "covariance", cov)

    @property
    def amplitudes(self):
        """Per-channel fringe amplitude offset_ch * V."""
        return tuple(a * self.visibility_hat for a in self.offsets)

    def channel_fractions(self, u):
        """Model fractions of the four channels at interference phase u."""
        c = np.cos(np.asarray(u, dtype=float) + self.phase_offset)
        a = np.array(self.offsets)
        s = np.array(FRINGE_SIGNS)
        return a[..., :] * (1.0 + np.multiply.outer(c, s * self.visibility_hat))

    def visibility_stderr(self):
        return float(math.sqrt(max(self.covariance[4, 4], 0.0)))

    def to_json(self, path=None):
        doc = {
            "visibility_hat": self.visibility_hat,
            "phase_offset": self.phase_offset,
            "offsets": dict(zip(COINCIDENCE_CHANNELS, self.offsets)),
            "amplitudes": dict(zip(COINCIDENCE_CHANNELS, self.amplitudes)),
            "covariance": self.covariance.tolist(),
            "residual_chi2": self.residual_chi2,
            "dof": self.dof,
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def ideal(cls, visibility=1.0, phase_offset=0.0):
        """Noise-free calibration: equal quarters at a given visibility."""
        return cls(
            visibility_hat=visibility,
            phase_offset=phase_offset,
            offsets=(0.25, 0.25, 0.25, 0.25),
            covariance=np.zeros((6, 6)),
            residual_chi2=0.0,
            dof=0,
        )


def _fourier_probe(thetas, fracs):
    # Initial parameters from a discrete Fourier probe at the fringe period.
    offsets = fracs.mean(axis=0)
    phasor = np.exp(-3j * thetas)
    z = 2.0 * (phasor[:, None] * fracs).mean(axis=0)
    combined = np.dot(np.array(FRINGE_SIGNS), z) / max(offsets.sum(), 1e-12)
    v0 = min(max(abs(combined), 0.05), 1.0)
    phi0 = float(np.angle(combined))
    return offsets, v0, phi0


def fit_fringe(scan, counts=None):
    """Joint weighted fit of the four coincidence-fraction fringes.

    scan: iterable of (theta_hat setpoint, fraction quartet) rows in
    channel order (A1B1, A1B2, A2B1, A2B2).  counts: optional per-point
    informative totals; when given, weights are the multinomial variance
    of each fraction and the parameter covariance is absolute, otherwise
    weights are shape-only and the covariance is scaled by the residual
    variance (documented relative mode).

    All four channels share the visibility and the phase origin; the
    {A1B1, A2B2} pair is locked in anti-phase with {A1B2, A2B1} through
    the fixed sign pattern.
    """
    rows = list(scan)
    thetas = np.array([float(r[0]) for r in rows])
    fracs = np.array([[float(x) for x in r[1]] for r in rows])
    if fracs.shape[1] != 4:
        raise ConfigurationError("each scan row needs the four coincidence fractions")
    if len(np.unique(np.round(thetas, 12))) < _MIN_SETPOINTS:
        raise DomainError(f"fringe fit needs >= {_MIN_SETPOINTS} distinct setpoints")
    span = thetas.max() - thetas.min()
    if span <= _HALF_PERIOD:
        raise DomainError(
            f"setpoints span {span:.4f} rad; more than half a fringe period "
            f"({_HALF_PERIOD:.4f} rad) is required"
        )
    if counts is not None:
        counts = np.asarray(counts, dtype=float)
        if counts.shape != thetas.shape:
            raise ConfigurationError("counts must align with scan rows")
        if np.any(counts <= 0):
            raise ConfigurationError("per-point counts must be positive")

    # Per-point binomial variance of each fraction, from the data; the
    # channel cross-covariances of the multinomial are left out (diagonal
    # weighting), which costs a few percent of efficiency at most.
    var_shape = np.clip(fracs * (1.0 - fracs), 1e-6, None)
    weights = 1.0 / var_shape if counts is None else counts[:, None] / var_shape
    sqrt_w = np.sqrt(weights)

    signs = np.array(FRINGE_SIGNS)

    def model(params):
        a = params[:4]
        v = params[4]
        phi = params[5]
        return a[None, :] * (1.0 + np.cos(3 * thetas + phi)[:, None] * signs * v)

    def residuals(params):
        return ((model(params) - fracs) * sqrt_w).ravel()

    a0, v0, phi0 = _fourier_probe(thetas, fracs)
    x0 = np.concatenate([np.clip(a0, 1e-6, None), [v0, phi0]])
    lower = [1e-9] * 4 + [0.0, -2 * math.pi]
    upper = [np.inf] * 4 + [1.0, 2 * math.pi]
    result = least_squares(
        residuals, x0, bounds=(lower, upper), xtol=1e-10, ftol=1e-12,
        gtol=1e-12, max_nfev=200,
    )
    if result.status <= 0:
        raise FitError(
            "fringe fit did not converge within 200 evaluations",
            residuals=result.fun,
        )
    params = result.x
    phi_hat = math.remainder(params[5], 2 * math.pi)

    jac = result.jac
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    chi2 = float(2.0 * result.cost)
    dof = fracs.size - 6
    if counts is None and dof > 0:
        cov = cov * (chi2 / dof)

    return FringeFit(
        visibility_hat=float(params[4]),
        phase_offset=float(phi_hat),
        offsets=tuple(params[:4]),
        covariance=cov,
        residual_chi2=chi2,
        dof=dof,
    )


_COINC_SLOTS = [INFORMATIVE_PATTERNS.index(p) for p in COINCIDENCE_PATTERNS]
_REST_SLOTS = [
    j for j, p in enumerate(INFORMATIVE_PATTERNS) if p not in COINCIDENCE_PATTERNS
]
_GRID_SIZE = 4096


def _category_log_probs(u_grid, calibration, include_rest):
    """log p per category (4 or 5) on the u grid, per the calibration."""
    rates = calibration.channel_fractions(u_grid)  # (G, 4), fractions of C_sum
    if include_rest:
        rest = np.clip(1.0 - rates.sum(axis=1, keepdims=True), 1e-12, None)
        probs = np.concatenate([rates, rest], axis=1)
    else:
        probs = rates / rates.sum(axis=1, keepdims=True)
    return np.log(np.clip(probs, 1e-300, None))


def _refine(counts_row, calibration, include_rest, lo, hi):
    def neg_loglike(u):
        logp = _category_log_probs(np.array([u]), calibration, include_rest)[0]
        return -float(np.dot(counts_row, logp))

    res = minimize_scalar(
        neg_loglike, bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


def _coincidence_category_counts(tally_counts, include_rest):
    coinc = np.array([tally_counts[p] for p in COINCIDENCE_PATTERNS], dtype=np.int64)
    if not include_rest:
        return coinc
    c_sum = sum(int(tally_counts[p]) for p in INFORMATIVE_PATTERNS)
    return np.concatenate([coinc, [c_sum - coinc.sum()]])


def mle_phase(tally, calibration, include_rest=False):
    """Maximum-likelihood global phase from one tally of counts.

    Maximizes the multinomial log-likelihood of the four coincidence
    counts over u = 3*theta_hat in (0, pi), against the calibrated fringe
    curves; returns theta_hat = u/3.  By default the likelihood conditions
    on the coincidence subset, so the other informative types enter only
    through the C_sum normalization already baked into the calibration
    fractions; include_rest=True adds them as a fifth category with its
    own phase dependence.

    A maximum at the branch edge (fringe extremum, no curvature
    information on one side) is returned as the boundary value with a
    DegenerateEstimateWarning, as is an exactly flat likelihood, which
    returns the branch midpoint.
    """
    if isinstance(tally, Tally):
        if tally.c_sum == 0:
            raise EmptyStatisticsError("tally has no informative events")
        counts = _coincidence_category_counts(tally.counts, include_rest)
    else:
        counts = np.asarray(tally, dtype=np.int64)
        want = 5 if include_rest else 4
        if counts.shape != (want,):
            raise ConfigurationError(
                f"expected {want} category counts, got shape {counts.shape}"
            )
        if counts.sum() == 0 and include_rest:
            raise EmptyStatisticsError("no events in category counts")
    estimates = estimate_blocks(
        counts[None, :], calibration, include_rest=include_rest,
        _counts_are_categories=True,
    )
    return float(estimates[0])


def estimate_blocks(block_counts, calibration, include_rest=False,
                    _counts_are_categories=False):
    """Vectorized per-block MLE: one theta_hat per row of block_counts.

    block_counts is (s, 9) over INFORMATIVE_PATTERNS order (as produced
    by the blocked samplers), or pre-reduced category counts when flagged.
    The likelihood is evaluated on a shared u grid over (0, pi) for every
    block at once, then each block's maximum is polished to 1e-12 with a
    bounded scalar search.  Boundary and flat-likelihood blocks get the
    documented degenerate treatment and one summary warning.
    """
    block_counts = np.asarray(block_counts, dtype=np.int64)
    if block_counts.ndim != 2:
        raise ConfigurationError("block_counts must be two-dimensional")
    if _counts_are_categories:
        cats = block_counts
    else:
        if block_counts.shape[1] != len(INFORMATIVE_PATTERNS):
            raise ConfigurationError(
                "block_counts must have one column per informative type"
            )
        coinc = block_counts[:, _COINC_SLOTS]
        if include_rest:
            rest = block_counts[:, _REST_SLOTS].sum(axis=1, keepdims=True)
            cats = np.concatenate([coinc, rest], axis=1)
        else:
            cats = coinc

    u_grid = np.linspace(0.0, math.pi, _GRID_SIZE + 2)[1:-1]
    log_probs = _category_log_probs(u_grid, calibration, include_rest)
    loglike = cats @ log_probs.T  # (s, G)

    best = np.argmax(loglike, axis=1)
    spread = loglike.max(axis=1) - loglike.min(axis=1)
    flat = spread < 1e-12
    at_lo = best == 0
    at_hi = best == _GRID_SIZE - 1

    estimates = np.empty(len(cats))
    n_boundary = 0
    n_flat = 0
    for i in range(len(cats)):
        if flat[i]:
            estimates[i] = math.pi / 2.0
            n_flat += 1
            continue
        if at_lo[i] or at_hi[i]:
            # polish against the true boundary; an interior dip within the
            # first grid cell still counts as an edge estimate if the
            # polished maximum stays at the edge
            lo = 0.0 if at_lo[i] else u_grid[best[i] - 1]
            hi = u_grid[best[i] + 1] if at_lo[i] else math.pi
            u_hat = _refine(cats[i], calibration, include_rest, lo, hi)
            edge = 0.0 if at_lo[i] else math.pi
            if abs(u_hat - edge) < 1e-6:
                estimates[i] = edge
                n_boundary += 1
                continue
            estimates[i] = u_hat
            continue
        lo = u_grid[best[i] - 1]
        hi = u_grid[best[i] + 1]
        estimates[i] = _refine(cats[i], calibration, include_rest, lo, hi)

    if n_boundary:
        warnings.warn(
            f"{n_boundary} block estimate(s) at the branch boundary "
            "(fringe extremum): no curvature information past the edge",
            DegenerateEstimateWarning,
            stacklevel=2,
        )
    if n_flat:
        warnings.warn(
            f"{n_flat} block(s) with an exactly flat likelihood; returning "
            "the branch midpoint",
            DegenerateEstimateWarning,
            stacklevel=2,
        )
    return estimates / 3.0


@dataclass(frozen=True)
class BlockStats:
    """Spread of per-block phase estimates and its own error bar."""

    s: int
    k_bar: int | None
    estimates: tuple
    delta_hat: float
    delta_err: float

    def to_json(self, path=None, include_estimates=True):
        doc = {
            "s": self.s,
            "k_bar": self.k_bar,
            "delta_hat": self.delta_hat,
            "delta_err": self.delta_err,
        }
        if include_estimates:
            doc["estimates"] = list(self.estimates)
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def block_stats(estimates, k_bar=None):
    """Bessel-corrected spread of block estimates with its error bar.

    delta_err = delta_hat / sqrt(2(s-1)), the leading-order error of a
    sample standard deviation from s draws.
    """
    values = np.asarray(list(estimates), dtype=float)
    s = len(values)
    if s < 2:
        raise DomainError(f"block statistics need at least 2 estimates, got {s}")
    delta_hat = float(values.std(ddof=1))
    delta_err = delta_hat / math.sqrt(2.0 * (s - 1))
    return BlockStats(
        s=s,
        k_bar=None if k_bar is None else int(k_bar),
        estimates=tuple(values),
        delta_hat=delta_hat,
        delta_err=delta_err,
    )


def fisher_from_precision(delta_hat, k_bar):
    """Effective Fisher information implied by a measured precision.

    Inverts delta = 1/sqrt(k * F): F = 1/(delta^2 * k).
    """
    if not (math.isfinite(delta_hat) and delta_hat > 0.0):
        raise DomainError(f"delta_hat must be > 0, got {delta_hat}")
    if not (math.isfinite(k_bar) and k_bar >= 1):
        raise DomainError(f"k_bar must be >= 1, got {k_bar}")
    return 1.0 / (delta_hat * delta_hat * k_bar)
