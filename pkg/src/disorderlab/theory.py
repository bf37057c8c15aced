"""Closed-form predictions for the Gaussian covariance C(k) = zeta^2/(2 pi) exp(-zeta^2 k^2/2).

Quantities come in two flavours that are never mixed: ``exact`` values use
adaptive quadrature of the angular covariance, ``approx`` values use the
large zeta*k (Laplace) forms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, special

SQRT2PI = math.sqrt(2 * math.pi)
QUAD_EPSABS = 1e-10
ASYMPTOTIC_KQ = 30.0


@dataclass(frozen=True)
class TheoryParams:
    epsilon: float
    zeta: float
    kp: float

    def __post_init__(self):
        for name in ("epsilon", "zeta", "kp"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a positive number, got {value!r}")

    @property
    def long_range(self) -> bool:
        """zeta*kp >> 1, taken as zeta*kp >= 5."""
        return self.zeta * self.kp >= 5.0

    @property
    def weak(self) -> bool:
        """epsilon small against the initial kinetic energy kp^2/2 (ratio <= 0.2)."""
        return self.epsilon <= 0.2 * 0.5 * self.kp**2


# --- momentum broadening -------------------------------------------------------

def broadening_profile(k, kp: float, epsilon: float, variant: str = "asymptotic"):
    """Long-time radial density n(k; kp) normalized as int_0^inf k n dk = 1.

    asymptotic: exp(-|k^2 - kp^2| / 2 eps) / (2 eps)
    full:       adds the image term exp(-(k^2 + kp^2) / 2 eps) / (2 eps)
    """
    k = np.asarray(k, dtype=float)
    out = np.exp(-np.abs(k**2 - kp**2) / (2 * epsilon))
    if variant == "full":
        out = out + np.exp(-(k**2 + kp**2) / (2 * epsilon))
    elif variant != "asymptotic":
        raise ValueError(f"unknown variant {variant!r}")
    out = out / (2 * epsilon)
    return out if out.ndim else float(out)


def log_profile_near_peak(k, kp: float, epsilon: float):
    """log(n(k)/n(kp)) written around the peak: linear plus signed quadratic term."""
    d = np.asarray(k, dtype=float) - kp
    return -np.abs(d) * kp / epsilon - np.sign(d) * d**2 / (2 * epsilon)


def greens_superposition(n0, epsilon: float, q_range: tuple[float, float] | None = None,
                         zeta: float | None = None) -> Callable:
    """n(k) = int_0^inf dq q n(k; q) n0(q) with the full-variant kernel.

    ``n0`` is either a callable radial density or a sequence of atoms
    ``(q_i, w_i)`` meaning n0(q) = sum_i w_i delta(q - q_i) / q_i. A warning
    is issued if n0 has support below 1/zeta (where the kernel is invalid).
    """
    if callable(n0):
        if q_range is None:
            raise ValueError("q_range is required for a callable n0")
        qlo, qhi = q_range
        if zeta is not None and qlo < 1.0 / zeta:
            warnings.warn("initial density supported at k < 1/zeta; Green's function not applicable", stacklevel=2)

        def n_bar(k):
            def one(kk):
                f = lambda q: q * broadening_profile(kk, q, epsilon, "full") * n0(q)
                pts = [kk] if qlo < kk < qhi else None
                val, _ = integrate.quad(f, qlo, qhi, points=pts, limit=400, epsabs=QUAD_EPSABS, epsrel=1e-10)
                return val
            return np.vectorize(one, otypes=[float])(k)
        return n_bar

    atoms = [(float(q), float(w)) for q, w in n0]
    if zeta is not None and any(q < 1.0 / zeta for q, _ in atoms):
        warnings.warn("initial density supported at k < 1/zeta; Green's function not applicable", stacklevel=2)

    def n_bar_atoms(k):
        return sum(w * broadening_profile(k, q, epsilon, "full") for q, w in atoms)
    return n_bar_atoms


# --- angular covariance ---------------------------------------------------------

def ring_covariance(theta, k: float, zeta: float):
    """C(k, theta) = zeta^2/(2 pi) exp(-zeta^2 k^2 (1 - cos theta)) on the shell |q| = |k|."""
    return zeta**2 / (2 * np.pi) * np.exp(-(zeta * k) ** 2 * (1 - np.cos(theta)))


def cm_coefficient(m: int, k: float, zeta: float, method: str = "quadrature") -> float:
    """C_m(k) = int_{-pi}^{pi} exp(-i m theta) C(k, theta) dtheta.

    methods: ``quadrature`` (adaptive), ``laplace`` (zeta/(k sqrt(2pi)) exp(-m^2/(2 zeta^2 k^2))),
    ``bessel`` (zeta^2 exp(-x) I_m(x), x = zeta^2 k^2).
    """
    if not (k > 0 and zeta > 0):
        raise ValueError("k and zeta must be positive")
    if m < 0:
        raise ValueError("m must be >= 0")
    kappa = (zeta * k) ** 2
    if method == "laplace":
        return zeta / (k * SQRT2PI) * math.exp(-m * m / (2 * kappa))
    if method == "bessel":
        return zeta**2 * float(special.ive(m, kappa))
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    # even integrand: 2 int_0^pi; split where the Gaussian-like peak has decayed
    width = min(math.pi, 40.0 / math.sqrt(kappa))
    f = lambda th: math.cos(m * th) * math.exp(-kappa * (1 - math.cos(th)))
    total = 0.0
    for a, b in ((0.0, width), (width, math.pi)):
        if b <= a:
            continue
        val, err, *rest = integrate.quad(f, a, b, limit=500, epsabs=QUAD_EPSABS * 1e-2, epsrel=1e-12,
                                         full_output=1)
        if len(rest) > 1 and err > 1e-8:
            raise RuntimeError(f"C_m quadrature did not converge (m={m}, zeta*k={zeta * k}): {rest[1]}")
        total += val
    return zeta**2 / (2 * math.pi) * 2 * total


def polar_covariance(K, Q, asymptotic_above: float | None = ASYMPTOTIC_KQ):
    """Angle-integrated covariance in scaled variables, exp(-(K^2+Q^2)/2) I_0(K Q).

    Written as exp(-(K-Q)^2/2) * [exp(-KQ) I_0(KQ)] so nothing overflows;
    above KQ = ``asymptotic_above`` the leading asymptotic form
    exp(-(Q-K)^2/2) / sqrt(2 pi K Q) is used.
    """
    K = np.asarray(K, dtype=float)
    Q = np.asarray(Q, dtype=float)
    kq = K * Q
    gauss = np.exp(-0.5 * (K - Q) ** 2)
    out = gauss * special.i0e(kq)
    if asymptotic_above is not None:
        big = kq > asymptotic_above
        if np.any(big):
            out = np.where(big, gauss / np.sqrt(2 * np.pi * np.where(big, kq, 1.0)), out)
    return out if out.ndim else float(out)


# --- time scales and transport ---------------------------------------------------

@dataclass(frozen=True)
class Rate:
    """A rate (1/time) in its quadrature and Laplace forms."""
    exact: float
    approx: float

    @property
    def time_exact(self) -> float:
        return 1.0 / self.exact

    @property
    def time_approx(self) -> float:
        return 1.0 / self.approx


def collision_rate(params: TheoryParams, k: float | None = None) -> Rate:
    """1/t_c = 2 pi eps^2 C_0(k) ~ sqrt(2 pi) zeta eps^2 / k."""
    k = params.kp if k is None else k
    eps, zeta = params.epsilon, params.zeta
    return Rate(2 * math.pi * eps**2 * cm_coefficient(0, k, zeta), SQRT2PI * zeta * eps**2 / k)


def collision_time(params: TheoryParams, k: float | None = None) -> tuple[float, float]:
    """(exact, approx) t_c."""
    r = collision_rate(params, k)
    return r.time_exact, r.time_approx


def diffusive_rate(params: TheoryParams, k: float | None = None) -> Rate:
    """1/t_d = 2 pi eps^2 (C_0 - C_1) ~ sqrt(pi/2) eps^2 / (zeta k^3)."""
    k = params.kp if k is None else k
    eps, zeta = params.epsilon, params.zeta
    gap = cm_gap(1, k, zeta)
    return Rate(2 * math.pi * eps**2 * gap, math.sqrt(math.pi / 2) * eps**2 / (zeta * k**3))


def diffusive_time(params: TheoryParams, k: float | None = None) -> tuple[float, float]:
    r = diffusive_rate(params, k)
    return r.time_exact, r.time_approx


def cm_gap(m: int, k: float, zeta: float) -> float:
    """C_0(k) - C_m(k) by quadrature of (1 - cos m theta) C(k, theta); no cancellation."""
    kappa = (zeta * k) ** 2
    width = min(math.pi, 40.0 / math.sqrt(kappa))
    f = lambda th: (1 - math.cos(m * th)) * math.exp(-kappa * (1 - math.cos(th)))
    total = 0.0
    for a, b in ((0.0, width), (width, math.pi)):
        if b > a:
            total += integrate.quad(f, a, b, limit=500, epsabs=1e-14, epsrel=1e-12)[0]
    return zeta**2 / math.pi * total


def diffusion_constant(params: TheoryParams, k: float | None = None) -> tuple[float, float]:
    """(exact, approx) D = t_d k^2 / 2; approx = zeta k^5 / (sqrt(2 pi) eps^2)."""
    k = params.kp if k is None else k
    td_exact, td_approx = diffusive_time(params, k)
    return td_exact * k**2 / 2, td_approx * k**2 / 2


@dataclass(frozen=True)
class LocalizationLength:
    log_exact: float
    log_approx: float

    @property
    def exact(self) -> float:
        return _exp_or_inf(self.log_exact)

    @property
    def approx(self) -> float:
        return _exp_or_inf(self.log_approx)


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def localization_length(params: TheoryParams, k: float | None = None) -> LocalizationLength:
    """xi_loc = k t_d exp(pi D), returned as its logarithm."""
    k = params.kp if k is None else k
    td_e, td_a = diffusive_time(params, k)
    d_e, d_a = diffusion_constant(params, k)
    return LocalizationLength(math.log(k * td_e) + math.pi * d_e, math.log(k * td_a) + math.pi * d_a)


def slowest_mode_rate(params: TheoryParams, k: float | None = None) -> float:
    """Relaxation scale of the slowest angular mode, sqrt(pi/2) eps^2 / (zeta k^3)."""
    k = params.kp if k is None else k
    return math.sqrt(math.pi / 2) * params.epsilon**2 / (params.zeta * k**3)


@dataclass(frozen=True)
class AngularCorrection:
    coefficient: float
    small_m: float
    large_m: float


def angular_relaxation_correction(m: int, k: float, params: TheoryParams) -> AngularCorrection:
    """First-order coefficient n_m^(1) / n_{0,m} = 1 / (2 pi eps^2 (C_0 - C_m)).

    Also returns the small-m form 2 k^3 zeta / (sqrt(2 pi) eps^2 m^2) and the
    large-m form k / (sqrt(2 pi) zeta eps^2).
    """
    if m == 0:
        raise ValueError("m = 0 has no first-order angular correction")
    m = abs(int(m))
    eps, zeta = params.epsilon, params.zeta
    coef = 1.0 / (2 * math.pi * eps**2 * cm_gap(m, k, zeta))
    small = 2 * k**3 * zeta / (SQRT2PI * eps**2 * m**2)
    large = k / (SQRT2PI * zeta * eps**2)
    return AngularCorrection(coef, small, large)


# --- singular term of the energy expansion ----------------------------------------

def shifted_polar_weight(K: float, Q):
    """P(K, Q) = sqrt((K+Q)/K) exp(-Q^2/2) / sqrt(2 pi), the large-K form of (K+Q) C_1(K, K+Q)."""
    Q = np.asarray(Q, dtype=float)
    return np.sqrt((K + Q) / K) * np.exp(-0.5 * Q**2) / SQRT2PI


def singular_integral(K: float) -> float:
    """Principal value of int_{-K}^inf dQ P(K,Q) / (Q (2K + Q)).

    Symmetrized on [0, K] so the 1/Q pole cancels analytically.
    """
    g = lambda q: shifted_polar_weight(K, q) / (2 * K + q)
    sym = lambda q: (g(q) - g(-q)) / q if q > 0 else 0.0
    # g(q) - g(-q) is O(q^3/K^4): integrate the odd part without the pole
    inner, _ = integrate.quad(sym, 0.0, K, limit=400, epsabs=1e-16, epsrel=1e-11)
    tail, _ = integrate.quad(lambda q: g(q) / q, K, np.inf, limit=200, epsabs=1e-18, epsrel=1e-11)
    return inner + tail


def singular_correction(epsilon: float, zeta: float, k: float) -> float:
    """4 eps zeta^2 PV int dQ P(K,Q)/(Q(2K+Q)) with K = zeta k; ~ eps / (4 zeta^2 k^4)."""
    return 4 * epsilon * zeta**2 * singular_integral(zeta * k)


def singular_correction_leading(epsilon: float, zeta: float, k: float) -> float:
    return epsilon / (4 * zeta**2 * k**4)


def prediction_table(params: TheoryParams, ks: Iterable[float]) -> list[dict]:
    rows = []
    for k in ks:
        tc = collision_rate(params, k)
        td = diffusive_rate(params, k)
        d = diffusion_constant(params, k)
        xi = localization_length(params, k)
        rows.append({
            "epsilon": params.epsilon, "zeta": params.zeta, "kp": params.kp, "k": float(k),
            "n_bar": broadening_profile(k, params.kp, params.epsilon),
            "n_bar_full": broadening_profile(k, params.kp, params.epsilon, "full"),
            "t_c": tc.time_exact, "t_c_approx": tc.time_approx,
            "t_d": td.time_exact, "t_d_approx": td.time_approx,
            "D": d[0], "D_approx": d[1],
            "log_xi_loc": xi.log_exact, "log_xi_loc_approx": xi.log_approx,
        })
    return rows
