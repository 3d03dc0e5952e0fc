"""Closed-form machinery for the two-step scheme.

Splitting a frame after ``alpha`` slots turns the transmit distribution
into a mixture of hypergeometric laws for the replica count landing in the
first part. Combining that split with a stopping-set approximation of the
first-step loss gives the expected transmitted replica count, the average
energy per node, the full-frame packet loss rate, and the
energy-normalized throughput eta = G * (1 - PLR) / E.

The stopping-set sum is valid at low to moderate loads; evaluations above
G = 0.5 carry a regime warning rather than an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

import numpy as np

from .protocol import DegreeDistribution, FrameConfig, validate_distribution

REGIME_LIMIT = 0.5


def conditional_split_pmf(r: int, n: int, alpha: int) -> np.ndarray:
    """P(t replicas of r land in the first alpha slots), t = 0..r.

    Entry t is C(r,t) * prod_{i<t} (alpha-i)/(n-i) *
    prod_{j<r-t} (n-alpha-j)/(n-t-j): the first product places t replicas
    in the first part, the second places the rest beyond it. Numerically
    this equals the hypergeometric pmf and sums to 1.
    """
    if r > n:
        raise ValueError(f"cannot place {r} replicas in {n} slots")
    if not 0 <= r <= alpha <= n:
        raise ValueError(f"need 0 <= r <= alpha <= n, got r={r} alpha={alpha} n={n}")
    out = np.zeros(r + 1)
    for t in range(r + 1):
        val = float(comb(r, t))
        for i in range(t):
            val *= (alpha - i) / (n - i)
        for j in range(r - t):
            val *= (n - alpha - j) / (n - t - j)
        out[t] = val
    return out


@dataclass(frozen=True)
class GammaSplit:
    """First-part replica distribution induced by a frame split."""

    gamma: DegreeDistribution
    alpha: int
    n: int
    source: DegreeDistribution

    @property
    def coeffs(self) -> np.ndarray:
        return self.gamma.coeffs

    @property
    def mean(self) -> float:
        return self.gamma.mean


def gamma_of(dist: DegreeDistribution, n: int, alpha: int) -> GammaSplit:
    """Mix the conditional split pmf over the transmit distribution."""
    if alpha < dist.r_max:
        raise ValueError(f"alpha {alpha} below max replica count {dist.r_max}")
    coeffs = np.zeros(dist.r_max + 1)
    for r in range(len(dist.coeffs)):
        if dist.coeffs[r] == 0.0:
            continue
        coeffs[: r + 1] += dist.coeffs[r] * conditional_split_pmf(r, n, alpha)
    return GammaSplit(gamma=validate_distribution(coeffs), alpha=alpha, n=n,
                      source=dist)


def expected_replicas_two_step(dist: DegreeDistribution, n: int, alpha: int,
                               p_dec, mode: str = "exact-conditional") -> float:
    """Expected replicas transmitted per user under the two-step scheme.

    ``p_dec(t)`` is the probability that a user placing t replicas in the
    first part is decoded at step one; such a user stops at t replicas,
    any other transmits its full count. ``mode`` selects the weighting of
    the inner sum: "exact-conditional" uses the split law conditioned on
    the drawn count, "marginal" uses the unconditional first-part
    distribution for every drawn count. The two coincide for single-degree
    transmit distributions.
    """
    if mode not in ("exact-conditional", "marginal"):
        raise ValueError(f"unknown mode {mode!r}")
    gamma = gamma_of(dist, n, alpha).coeffs
    total = 0.0
    for r in range(len(dist.coeffs)):
        lam = dist.coeffs[r]
        if lam == 0.0:
            continue
        cond = conditional_split_pmf(r, n, alpha)
        inner = 0.0
        for t in range(r + 1):
            pd = float(p_dec(t))
            if not 0.0 <= pd <= 1.0:
                raise ValueError(f"p_dec({t}) = {pd} outside [0, 1]")
            weight = gamma[t] if mode == "marginal" else cond[t]
            inner += weight * (t + (r - t) * (1.0 - pd))
        total += lam * inner
    return total


def phi(omega: int, n: int, load: float) -> float:
    """Alternating load polynomial weighting a stopping set of omega users.

    sum_{i=0}^{omega-1} (-1)^(omega-1+i) (omega-1)!/i! (n*load)^i, summed
    in exact rational arithmetic: the terms alternate and cancel heavily.
    """
    if omega < 2:
        raise ValueError("stopping sets involve at least two users")
    if load <= 0:
        raise ValueError("load must be positive")
    x = Fraction(n) * Fraction(load)
    total = Fraction(0)
    fact = factorial(omega - 1)
    for i in range(omega):
        sign = -1 if (omega - 1 + i) % 2 else 1
        total += sign * Fraction(fact, factorial(i)) * x**i
    return float(total)


def _phi_fraction(omega: int, x: Fraction) -> Fraction:
    total = Fraction(0)
    fact = factorial(omega - 1)
    for i in range(omega):
        sign = -1 if (omega - 1 + i) % 2 else 1
        total += sign * Fraction(fact, factorial(i)) * x**i
    return total


@dataclass(frozen=True)
class LossEstimate:
    """Stopping-set loss approximation with diagnostic flags."""

    value: float
    raw: float
    clamped: bool
    regime_warning: bool
    vacuous: bool = False


def analytic_loss(alpha: int, split: GammaSplit, catalog, n: int, load: float,
                  form: str = "denominator") -> LossEstimate:
    """Probability that a user is not decoded when peeling ``alpha`` slots.

    Sums, over the catalog of small stopping sets, the chance that a user
    is caught in each: phi(s) * omega(s) * c(s) * C(alpha, mu(s)) *
    prod_t Gamma_t^nu_t / nu_t! * C(alpha, t)^(+/- nu_t). The default
    "denominator" form divides by C(alpha, t)^nu_t (each user's specific
    placement has probability 1/C(alpha, t)); "product" multiplies
    instead. Combinatorial factors are exact integers until the final
    float conversion. The result is clamped to [0, 1] with a flag.
    """
    if form not in ("denominator", "product"):
        raise ValueError(f"unknown form {form!r}")
    if load <= 0:
        raise ValueError("load must be positive")
    warn = load > REGIME_LIMIT
    if not catalog:
        return LossEstimate(0.0, 0.0, clamped=False, regime_warning=warn,
                            vacuous=True)
    gamma = split.coeffs
    x = Fraction(n) * Fraction(load)
    total = 0.0
    for s in catalog:
        if s.omega < 2:
            raise ValueError("catalog entry with fewer than two users")
        if s.mu > alpha:
            raise ValueError(f"catalog entry spans {s.mu} slots, alpha={alpha}")
        rational = _phi_fraction(s.omega, x) * s.omega * s.c * comb(alpha, s.mu)
        gamma_part = 1.0
        for t, nu in enumerate(s.profile):
            if nu == 0 or t == 0:
                continue
            if t >= len(gamma) or gamma[t] == 0.0:
                gamma_part = 0.0
                break
            gamma_part *= gamma[t] ** nu
            binom_pow = Fraction(comb(alpha, t)) ** nu
            if form == "denominator":
                rational /= factorial(nu) * binom_pow
            else:
                rational = rational * binom_pow / factorial(nu)
        total += float(rational) * gamma_part
    clamped = not 0.0 <= total <= 1.0
    return LossEstimate(value=min(max(total, 0.0), 1.0), raw=total,
                        clamped=clamped, regime_warning=warn)


def plr_full_frame(n: int, dist: DegreeDistribution, catalog,
                   load: float) -> LossEstimate:
    """Packet loss rate over the whole frame (alpha = n).

    Only stopping sets whose user degrees all carry transmit-distribution
    mass can occur when the full frame is processed, so the catalog is
    filtered accordingly before evaluation.
    """
    filtered = [s for s in catalog if _occurs_under(s, dist)]
    split = GammaSplit(gamma=dist, alpha=n, n=n, source=dist)
    return analytic_loss(n, split, filtered, n, load, form="denominator")


def _occurs_under(s, dist: DegreeDistribution) -> bool:
    for y, nu in enumerate(s.profile):
        if nu > 0 and (y >= len(dist.coeffs) or dist.coeffs[y] == 0.0):
            return False
    return True


def eta(load: float, plr: float, energy: float) -> float:
    """Energy-normalized throughput: delivered load per unit energy."""
    if energy <= 0:
        raise ValueError("energy must be positive")
    return load * (1.0 - plr) / energy


@dataclass(frozen=True)
class EnergyReport:
    """Analytical per-node energy and throughput figures at one load."""

    load: float
    expected_k: float
    energy: float
    energy_first: float
    energy_second: float
    plr: float
    eta: float
    mode: str
    form: str
    pdec_policy: str
    clamped: bool
    regime_warning: bool


def analytic_energy_report(config: FrameConfig, load: float, catalog,
                           mode: str = "exact-conditional",
                           form: str = "denominator",
                           pdec_policy: str = "zero-forced") -> EnergyReport:
    """Evaluate the closed-form model at one channel load.

    The first-step decoding probability is approximated uniformly in t by
    1 - P_loss(alpha); the "zero-forced" policy additionally pins
    p_dec(0) = 0, since a user with no first-part replicas cannot be
    decoded at step one, while "uniform" applies the average to every t.
    """
    if config.alpha is None:
        raise ValueError("config must set alpha for the two-step scheme")
    if pdec_policy not in ("zero-forced", "uniform"):
        raise ValueError(f"unknown pdec policy {pdec_policy!r}")
    split = gamma_of(config.dist, config.n, config.alpha)
    loss = analytic_loss(config.alpha, split, catalog, config.n, load, form)
    p_avg = 1.0 - loss.value

    def p_dec(t: int) -> float:
        if t == 0 and pdec_policy == "zero-forced":
            return 0.0
        return p_avg

    expected_k = expected_replicas_two_step(config.dist, config.n, config.alpha,
                                            p_dec, mode)
    e = config.energy_per_packet
    energy = expected_k * e
    energy_first = config.dist.mean * config.alpha / config.n * e
    plr_est = plr_full_frame(config.n, config.dist, catalog, load)
    return EnergyReport(
        load=load,
        expected_k=expected_k,
        energy=energy,
        energy_first=energy_first,
        energy_second=energy - energy_first,
        plr=plr_est.value,
        eta=eta(load, plr_est.value, energy),
        mode=mode,
        form=form,
        pdec_policy=pdec_policy,
        clamped=loss.clamped or plr_est.clamped,
        regime_warning=loss.regime_warning,
    )
