"""Closed-form model of the two-sensor entangled-photon phase network.

Geometry: a photon-pair source sits between sensor A and sensor B.  One
photon of each pair crosses sensor A's phase plate once; the partner
crosses sensor B's phase plate twice (a loop), so the interference
depends on the single combination u = theta_A - 2*theta_B = 3*theta_hat,
where theta_hat = (theta_A - 2*theta_B)/3 is the global quantity being
estimated with weights alpha = (1/3, -2/3).

Each sensor splits its photon onto two threshold detectors, giving four
detection channels A1, A2, B1, B2.  Click patterns are 4-bit masks with

    bit 0 = A1,  bit 1 = A2,  bit 2 = B1,  bit 3 = B2.

For a single pair the coincidence law is

    P(A1,B1) = P(A2,B2) = (1 - V*cos u)/4
    P(A1,B2) = P(A2,B1) = (1 + V*cos u)/4

with V the two-photon interference visibility.  The source emits a
thermal-pump pair number m per pulse, modeled as Poisson(mu) truncated
at n_max and renormalized; pairs in a pulse act independently, each
photon survives its channel's heralding efficiency, and threshold
detectors OR together every surviving photon.  `pattern_distribution`
evaluates the resulting exact 16-pattern distribution per pulse, which
is the oracle for the Monte Carlo sampler and for every rate used by
the estimation and resource-accounting layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "ALPHA",
    "CHANNELS",
    "CHANNEL_BIT",
    "COINCIDENCE_CHANNELS",
    "COINCIDENCE_PATTERNS",
    "GLOBAL_PHASE_PERIOD",
    "INFORMATIVE_PATTERNS",
    "N_PATTERNS",
    "ClickDistribution",
    "EfficiencyBudget",
    "PhaseSetting",
    "SourceParams",
    "coincidence_probs",
    "crb",
    "effective_fi",
    "fisher_matrix",
    "fisher_per_informative_event",
    "global_phase",
    "pattern_bits",
    "pattern_distribution",
    "pattern_is_informative",
    "pattern_label",
    "route_probs",
]

N_PATTERNS = 16
CHANNELS = ("A1", "A2", "B1", "B2")
CHANNEL_BIT = {"A1": 0, "A2": 1, "B1": 2, "B2": 3}
_ALICE_MASK = 0b0011
_BOB_MASK = 0b1100

# Estimation weights of the global function theta_hat = (theta_A - 2 theta_B)/3.
ALPHA = (1.0 / 3.0, -2.0 / 3.0)

# The coincidence fringe repeats when 3*theta_hat advances by 2*pi.
GLOBAL_PHASE_PERIOD = 2.0 * math.pi / 3.0

# Two-photon coincidence outcomes, in the fixed order used everywhere a
# quartet of coincidence values appears.
COINCIDENCE_CHANNELS = ("A1B1", "A1B2", "A2B1", "A2B2")
COINCIDENCE_PATTERNS = (0b0101, 0b1001, 0b0110, 0b1010)


def pattern_bits(pattern):
    """Channel names clicked in a 4-bit pattern, in (A1, A2, B1, B2) order."""
    if not 0 <= pattern < N_PATTERNS:
        raise DomainError(f"click pattern must be in [0, 15], got {pattern}")
    return tuple(ch for ch in CHANNELS if pattern & (1 << CHANNEL_BIT[ch]))


def pattern_label(pattern):
    """Spelling of a pattern: clicked channels concatenated, 'NoClick' if none."""
    names = pattern_bits(pattern)
    return "".join(names) if names else "NoClick"


def pattern_is_informative(pattern):
    """True when at least one Alice and at least one Bob detector clicked.

    These are the nine event types whose relative frequencies carry the
    phase fringe; Alice-only or Bob-only events are classified but not
    used by the estimator.
    """
    return bool(pattern & _ALICE_MASK) and bool(pattern & _BOB_MASK)


INFORMATIVE_PATTERNS = tuple(p for p in range(N_PATTERNS) if pattern_is_informative(p))


@dataclass(frozen=True)
class PhaseSetting:
    """One configured pair of sensor phases, in radians.

    pass_counts is the number of times a photon crosses each sensor's
    phase plate.  The fringe algebra in this package hard-codes the
    (1, 2) topology; operations that rely on it reject anything else.
    """

    theta_a: float
    theta_b: float
    pass_counts: tuple = (1, 2)

    def __post_init__(self):
        if not (math.isfinite(self.theta_a) and math.isfinite(self.theta_b)):
            raise ConfigurationError("phase setting angles must be finite")
        pc = tuple(self.pass_counts)
        if len(pc) != 2 or any((not isinstance(c, int)) or c < 1 for c in pc):
            raise ConfigurationError(
                f"pass_counts must be a pair of positive integers, got {self.pass_counts!r}"
            )
        object.__setattr__(self, "pass_counts", pc)


def global_phase(setting, *, reduce=False):
    """Global function theta_hat = (theta_A - 2*theta_B)/3 of a setting.

    With reduce=True the value is folded into the principal fringe
    interval [0, 2*pi/3).
    """
    if setting.pass_counts != (1, 2):
        raise DomainError(
            f"global phase is defined for pass_counts (1, 2), got {setting.pass_counts}"
        )
    theta = (setting.theta_a - 2.0 * setting.theta_b) / 3.0
    if reduce:
        theta = theta % GLOBAL_PHASE_PERIOD
    return theta


@dataclass(frozen=True)
class SourceParams:
    """Pair source parameters: mean pair number, visibility, truncation.

    The per-pulse pair number is Poisson(mu) truncated at n_max and
    renormalized; the construction refuses (mu, n_max) combinations
    whose untruncated Poisson mass beyond n_max exceeds 1e-6, so the
    renormalization is always a bookkeeping detail rather than a model
    change.
    """

    mu: float
    visibility: float
    n_max: int = 4

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu >= 0.0):
            raise ConfigurationError(f"mu must be a finite number >= 0, got {self.mu}")
        if not (math.isfinite(self.visibility) and 0.0 <= self.visibility <= 1.0):
            raise ConfigurationError(
                f"visibility must lie in [0, 1], got {self.visibility}"
            )
        if not isinstance(self.n_max, int) or self.n_max < 1:
            raise ConfigurationError(f"n_max must be an integer >= 1, got {self.n_max}")
        if self._truncated_mass() < 1.0 - 1e-6:
            raise ConfigurationError(
                f"Poisson mass below truncation is {self._truncated_mass():.9f} "
                f"for mu={self.mu}, n_max={self.n_max}; raise n_max"
            )

    def _truncated_mass(self):
        return float(sum(self._raw_weights()))

    def _raw_weights(self):
        w = np.empty(self.n_max + 1)
        w[0] = math.exp(-self.mu)
        for m in range(1, self.n_max + 1):
            w[m] = w[m - 1] * self.mu / m
        return w

    def pair_weights(self):
        """Renormalized truncated-Poisson weights, index m = 0..n_max."""
        w = self._raw_weights()
        return w / w.sum()

    def mean_pairs(self):
        """Mean emitted pairs per pulse under the truncated distribution."""
        w = self.pair_weights()
        return float(np.dot(np.arange(self.n_max + 1), w))


_BREAKDOWN_KEYS = ("sc", "so", "fiber", "m", "det")


@dataclass(frozen=True)
class EfficiencyBudget:
    """End-to-end heralding efficiency per detection channel.

    eta maps each of A1, A2, B1, B2 to a survival probability in (0, 1].
    An optional per-channel breakdown (source coupling, source optics,
    fiber, measurement optics, detector) may be attached; its product
    must reproduce eta to 1e-6 relative.
    """

    eta: dict
    breakdown: dict | None = None

    def __post_init__(self):
        eta = dict(self.eta)
        missing = [ch for ch in CHANNELS if ch not in eta]
        extra = [ch for ch in eta if ch not in CHANNELS]
        if missing or extra:
            raise ConfigurationError(
                f"efficiency map must have exactly the channels {CHANNELS}; "
                f"missing {missing}, unexpected {extra}"
            )
        for ch, value in eta.items():
            if not (math.isfinite(value) and 0.0 < value <= 1.0):
                raise ConfigurationError(
                    f"efficiency for {ch} must lie in (0, 1], got {value}"
                )
        object.__setattr__(self, "eta", eta)
        if self.breakdown is not None:
            bd = {ch: dict(parts) for ch, parts in dict(self.breakdown).items()}
            for ch, parts in bd.items():
                if ch not in CHANNELS:
                    raise ConfigurationError(f"breakdown names unknown channel {ch!r}")
                if tuple(parts) != _BREAKDOWN_KEYS:
                    raise ConfigurationError(
                        f"breakdown for {ch} must have keys {_BREAKDOWN_KEYS}, "
                        f"got {tuple(parts)}"
                    )
                product = math.prod(parts.values())
                if abs(product - eta[ch]) > 1e-6 * eta[ch]:
                    raise ConfigurationError(
                        f"breakdown product {product:.8f} for {ch} does not "
                        f"reproduce eta={eta[ch]:.8f} to 1e-6 relative"
                    )
            object.__setattr__(self, "breakdown", bd)

    @classmethod
    def uniform(cls, eta):
        return cls(eta={ch: eta for ch in CHANNELS})

    def as_array(self):
        """Efficiencies in channel order (A1, A2, B1, B2)."""
        return np.array([self.eta[ch] for ch in CHANNELS])


def coincidence_probs(u, visibility):
    """Single-pair coincidence probabilities at interference phase u.

    Returns the quartet (A1B1, A1B2, A2B1, A2B2):

        ( (1 - V cos u)/4, (1 + V cos u)/4,
          (1 + V cos u)/4, (1 - V cos u)/4 )
    """
    if not (math.isfinite(visibility) and 0.0 <= visibility <= 1.0):
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    if not math.isfinite(u):
        raise DomainError(f"interference phase must be finite, got {u}")
    vc = visibility * math.cos(u)
    minus = (1.0 - vc) / 4.0
    plus = (1.0 + vc) / 4.0
    return np.array([minus, plus, plus, minus])


def _coincidence_derivs(u, visibility):
    # d/du of coincidence_probs, same outcome order.
    vs = visibility * math.sin(u)
    return np.array([vs, -vs, -vs, vs]) / 4.0


def route_probs(u, visibility, routing="sensing"):
    """Per-pair routing distribution over (A1B1, A1B2, A2B1, A2B2).

    "sensing" is the interference law above.  "calibration" models the
    efficiency-measurement configuration, where the analyzers are set so
    each pair routes with deterministic channel anti-correlation: a B1
    photon heralds an A1 partner and vice versa, (1/2, 0, 0, 1/2) with
    no phase dependence.
    """
    if routing == "sensing":
        return coincidence_probs(u, visibility)
    if routing == "calibration":
        return np.array([0.5, 0.0, 0.0, 0.5])
    raise ConfigurationError(f"routing must be 'sensing' or 'calibration', got {routing!r}")


@dataclass(frozen=True)
class ClickDistribution:
    """Exact per-pulse probability over the 16 click patterns."""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (N_PATTERNS,):
            raise ConfigurationError(
                f"pattern distribution must have shape (16,), got {probs.shape}"
            )
        if probs.min() < -1e-12:
            raise ConfigurationError(
                f"pattern distribution has negative mass {probs.min():.3e}"
            )
        probs = np.clip(probs, 0.0, None)
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigurationError(
                f"pattern distribution sums to {probs.sum():.12f}, not 1 within 1e-9"
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, pattern):
        return float(self.probs[pattern])

    def informative_probability(self):
        """Total probability of the nine both-sides-clicked patterns."""
        return float(self.probs[list(INFORMATIVE_PATTERNS)].sum())

    def channel_click_probability(self, channel):
        """Probability that a given detector clicks (any accompanying clicks)."""
        bit = 1 << CHANNEL_BIT[channel]
        idx = [p for p in range(N_PATTERNS) if p & bit]
        return float(self.probs[idx].sum())

    def coincidence_quartet(self):
        """Probabilities of the exact twofold patterns (A1B1, A1B2, A2B1, A2B2)."""
        return self.probs[list(COINCIDENCE_PATTERNS)].copy()


def _single_pair_closure(eta, p_route):
    """q[T] = P(one pair's clicks all lie inside subset T), for all 16 T.

    The Alice photon on route r clicks its channel with probability
    eta_A(r); "clicks inside T" allows either no click or a click on a
    channel belonging to T.
    """
    # route index r: alice channel r >> 1 (0 = A1), bob channel r & 1 (0 = B1)
    eta_a = np.array([eta[0], eta[1]])
    eta_b = np.array([eta[2], eta[3]])
    q = np.empty(N_PATTERNS)
    for T in range(N_PATTERNS):
        a_in = np.array([(T >> 0) & 1, (T >> 1) & 1], dtype=float)
        b_in = np.array([(T >> 2) & 1, (T >> 3) & 1], dtype=float)
        a_fac = (1.0 - eta_a) + eta_a * a_in
        b_fac = (1.0 - eta_b) + eta_b * b_in
        q[T] = sum(
            p_route[r] * a_fac[r >> 1] * b_fac[r & 1] for r in range(4)
        )
    return q


def _mobius_invert(values):
    # Subset-lattice Moebius inversion over the 4 channel bits, in place on a copy.
    out = values.copy()
    for b in range(4):
        bit = 1 << b
        for T in range(N_PATTERNS):
            if T & bit:
                out[T] -= out[T ^ bit]
    return out


def pattern_distribution(source, eff, u, *, routing="sensing", with_derivative=False):
    """Exact click-pattern distribution of one pulse, and optionally d/du.

    Built by subset closure: for each channel subset T the probability
    that all clicks fall inside T is E_m[q_T^m] with q_T the single-pair
    closure and m the truncated pair number; Moebius inversion over the
    subset lattice then yields the exact pattern probabilities.  The
    derivative path pushes d/du through the same transform, which is
    linear.
    """
    p_route = route_probs(u, source.visibility, routing)
    eta = eff.as_array()
    q = _single_pair_closure(eta, p_route)
    w = source.pair_weights()
    powers = q[None, :] ** np.arange(len(w))[:, None]
    closure = w @ powers
    probs = _mobius_invert(closure)
    dist = ClickDistribution(probs=probs)
    if not with_derivative:
        return dist
    if routing == "calibration":
        return dist, np.zeros(N_PATTERNS)
    dp_route = _coincidence_derivs(u, source.visibility)
    dq = _single_pair_closure(eta, dp_route)  # closure is linear in the route law
    # d closure/du = (sum_m w_m m q^(m-1)) * dq
    m = np.arange(len(w))
    power_sum = (w * m) @ np.where(
        m[:, None] >= 1, q[None, :] ** np.clip(m[:, None] - 1, 0, None), 0.0
    )
    d_probs = _mobius_invert(power_sum * dq)
    return dist, d_probs


def fisher_matrix(u, visibility):
    """Classical Fisher matrix of the four coincidence outcomes.

    Entries are sum_i (1/P_i) (dP_i/dtheta_k)(dP_i/dtheta_l) over the
    quartet, with theta = (theta_A, theta_B) and u = theta_A - 2*theta_B.
    The matrix is (V^2 sin^2 u / (1 - V^2 cos^2 u)) * [[1, -2], [-2, 4]];
    it is singular (rank one) because only u is observable.
    """
    probs = coincidence_probs(u, visibility)
    if np.any(probs <= 0.0):
        vanished = [
            COINCIDENCE_CHANNELS[i] for i in range(4) if probs[i] <= 0.0
        ]
        raise DomainError(
            "Fisher matrix undefined: coincidence outcomes "
            f"{vanished} have zero probability at u={u}, V={visibility}"
        )
    d_du = _coincidence_derivs(u, visibility)
    grads = np.stack([d_du, -2.0 * d_du])  # rows: d/dtheta_A, d/dtheta_B
    return (grads / probs) @ grads.T


def effective_fi(fisher, alpha=ALPHA):
    """Effective Fisher information for the weighted global function.

    For weights alpha, the precision bound on alpha . theta is set by
    (alpha^T F alpha) / (alpha^T alpha)^2; with alpha = (1/3, -2/3) and
    V = 1 this evaluates to exactly 9 for every phase on the branch.
    """
    F = np.asarray(fisher, dtype=float)
    if F.shape != (2, 2):
        raise DomainError(f"Fisher matrix must be 2x2, got shape {F.shape}")
    if not np.allclose(F, F.T, rtol=1e-9, atol=1e-12):
        raise DomainError("Fisher matrix must be symmetric")
    a = np.asarray(alpha, dtype=float)
    norm = float(a @ a)
    if norm == 0.0:
        raise DomainError("weight vector alpha must be nonzero")
    return float(a @ F @ a) / norm**2


def crb(k, effective_fisher):
    """Cramer-Rao bound on the global phase after k independent trials."""
    if not (math.isfinite(k) and k >= 1):
        raise DomainError(f"trial count must be >= 1, got {k}")
    if not (math.isfinite(effective_fisher) and effective_fisher > 0.0):
        raise DomainError(
            f"effective Fisher information must be > 0, got {effective_fisher}"
        )
    return 1.0 / math.sqrt(k * effective_fisher)


def fisher_per_informative_event(source, eff, u, *, routing="sensing"):
    """Fisher information about theta_hat carried by one informative event.

    Conditions the exact pattern distribution on the informative set
    (both sides clicked) and evaluates the categorical Fisher information
    of the conditional type frequencies in u, times 9 to convert from u
    to theta_hat = u/3.  In the lossless single-pair limit this recovers
    effective_fi(fisher_matrix(u, V)).
    """
    dist, d_probs = pattern_distribution(
        source, eff, u, routing=routing, with_derivative=True
    )
    idx = list(INFORMATIVE_PATTERNS)
    p = dist.probs[idx]
    dp = d_probs[idx]
    p_inf = p.sum()
    if p_inf <= 0.0:
        raise DomainError("no informative probability mass at this setting")
    dp_inf = dp.sum()
    q = p / p_inf
    dq = (dp * p_inf - p * dp_inf) / p_inf**2
    # Subset-lattice cancellation leaves roundoff dust of order 1e-16 in
    # the rarest patterns; treat derivatives below that scale as zero.
    dust = 1e-9 * max(1.0, float(np.abs(dq).max()))
    fi_u = 0.0
    for qi, dqi in zip(q, dq):
        if qi > 0.0:
            fi_u += dqi * dqi / qi
        elif abs(dqi) > dust:
            raise DomainError(
                "informative Fisher information diverges: a zero-probability "
                "event type has nonzero phase sensitivity at this setting"
            )
    return 9.0 * fi_u
