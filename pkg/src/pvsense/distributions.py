"""Magnitude distributions of the complex voltage change and future voltage.

With Gaussian real/imaginary parts the squared magnitude is a weighted sum
of two one-degree non-central chi-square variables,

    |dV|^2  ~  var_r * chi2_1(d_r^2) + var_i * chi2_1(d_i^2),

with standardized non-centralities d = mu / sigma.  A single scaled
non-central chi-square ``lam * chi2_v(w)`` is fitted by matching the first
two moments exactly; the magnitude then follows a Rician with shape
``k = sqrt(w)`` and scale ``sigma = sqrt(lam)``.  When both means vanish
the magnitude is modeled as a Nakagami whose parameters absorb the
real-imag covariance ``c``.

All distributions expose ``pdf``, ``cdf``, ``sf``, ``quantile``,
``sample(n, rng)``, ``mean`` and ``var`` and are immutable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from .moments import MomentError, VoltageChangeMoments

#: Variance floor (pu^2) guarding degenerate single-phase cases.
VAR_FLOOR = 1e-15

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)

#: Effective support of a Rice density in scale units.  Mass outside
#: nu +/- 10.5 sigma is below 1e-22, negligible at the 1e-9 probability
#: accuracy this module guarantees.
_SUPPORT_LO = 10.0
_SUPPORT_HI = 10.5
_PANELS = 41   # half-sigma panel width across the 20.5 sigma span


def _panel_integrate(f, a: float, b: float, n_panels: int) -> float:
    """Composite Gauss-Legendre integration with vectorized evaluation."""
    edges = np.linspace(a, b, n_panels + 1)
    mid = (edges[1:] + edges[:-1]) / 2
    half = (edges[1:] - edges[:-1]) / 2
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    y = f(x.ravel()).reshape(x.shape)
    return float(np.sum(y @ _GL_WEIGHTS * half))


def _rice_pdf(x, nu, sigma):
    s2 = sigma ** 2
    out = (x / s2) * np.exp(-(x - nu) ** 2 / (2 * s2)) \
        * special.i0e(x * nu / s2)
    return np.where(x >= 0, out, 0.0)


def _rice_mass_batch(nu, sigma, a, b):
    """Integral of the Rice pdf over [a, b] for each row (vectorized).

    Fixed-count composite Gauss-Legendre over each row's own interval; the
    panel width never exceeds half the scale because callers clip [a, b]
    to the effective support.
    """
    nu, sigma, a, b = np.broadcast_arrays(nu, sigma, a, b)
    k = np.arange(_PANELS)
    width = (b - a) / _PANELS
    lo_edges = a[..., None] + width[..., None] * k
    mid = lo_edges + width[..., None] / 2
    half = width[..., None] / 2
    x = mid[..., :, None] + half[..., :, None] * _GL_NODES
    y = _rice_pdf(x, nu[..., None, None], sigma[..., None, None])
    return np.maximum((y @ _GL_WEIGHTS * half).sum(axis=-1), 0.0)


def rice_cdf(nu, sigma, x):
    """Vectorized Rice cdf, exact to quadrature accuracy at any shape ratio."""
    shape = np.broadcast_shapes(np.shape(nu), np.shape(sigma), np.shape(x))
    nu, sigma, x = (np.broadcast_to(np.asarray(v, dtype=float), shape).ravel()
                    for v in (nu, sigma, x))
    lo = np.maximum(0.0, nu - _SUPPORT_LO * sigma)
    hi = nu + _SUPPORT_HI * sigma
    out = np.zeros(nu.shape)
    out[x >= hi] = 1.0
    mid = (x > lo) & (x < hi)
    if mid.any():
        out[mid] = np.minimum(
            _rice_mass_batch(nu[mid], sigma[mid], lo[mid], x[mid]), 1.0)
    return out.reshape(shape)


def rice_sf(nu, sigma, x):
    """Vectorized Rice survival function."""
    shape = np.broadcast_shapes(np.shape(nu), np.shape(sigma), np.shape(x))
    nu, sigma, x = (np.broadcast_to(np.asarray(v, dtype=float), shape).ravel()
                    for v in (nu, sigma, x))
    lo = np.maximum(0.0, nu - _SUPPORT_LO * sigma)
    hi = nu + _SUPPORT_HI * sigma
    out = np.zeros(nu.shape)
    out[x <= lo] = 1.0
    mid = (x > lo) & (x < hi)
    if mid.any():
        out[mid] = np.minimum(
            _rice_mass_batch(nu[mid], sigma[mid], x[mid], hi[mid]), 1.0)
    return out.reshape(shape)


@dataclass(frozen=True)
class Rician:
    """Rice distribution with shape ``k`` (ratio of the deterministic
    component to the Gaussian scale) and scale ``sigma``."""

    k: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0 or self.k < 0:
            raise MomentError("Rician requires sigma > 0 and k >= 0")

    @property
    def nu(self) -> float:
        return self.k * self.sigma

    def _support(self):
        lo = max(0.0, self.nu - _SUPPORT_LO * self.sigma)
        hi = self.nu + _SUPPORT_HI * self.sigma
        return lo, hi

    def pdf(self, x):
        # exp(-(x-nu)^2 / 2s^2) * i0e(x nu / s^2) is stable for any k.
        return _rice_pdf(np.asarray(x, dtype=float), self.nu, self.sigma)

    def cdf(self, x):
        out = rice_cdf(self.nu, self.sigma, x)
        return float(out) if np.isscalar(x) else out

    def sf(self, x):
        out = rice_sf(self.nu, self.sigma, x)
        return float(out) if np.isscalar(x) else out

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        lo, hi = self._support()
        return float(optimize.brentq(lambda x: self.cdf(x) - q, lo, hi,
                                     xtol=1e-14 * max(hi, 1.0)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((n, 2))
        return np.abs(self.nu + self.sigma * (g[:, 0] + 1j * g[:, 1]))

    @property
    def mean(self) -> float:
        t = self.k ** 2 / 2.0   # nu^2 / (2 sigma^2)
        val = (1.0 + t) * special.i0e(t / 2) + t * special.i1e(t / 2)
        return float(self.sigma * np.sqrt(np.pi / 2) * val)

    @property
    def var(self) -> float:
        return float(2 * self.sigma ** 2 + self.nu ** 2 - self.mean ** 2)


@dataclass(frozen=True)
class Nakagami:
    """Nakagami distribution; ``omega`` is the root-mean-square value."""

    m: float
    omega: float

    def __post_init__(self):
        if self.m <= 0 or self.omega <= 0:
            raise MomentError("Nakagami requires m > 0 and omega > 0")
        object.__setattr__(self, "_frozen", stats.nakagami(self.m, scale=self.omega))

    def pdf(self, x):
        return self._frozen.pdf(x)

    def cdf(self, x):
        return self._frozen.cdf(x)

    def sf(self, x):
        return self._frozen.sf(x)

    def quantile(self, q: float) -> float:
        return float(self._frozen.ppf(q))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._frozen.rvs(size=n, random_state=rng)

    @property
    def mean(self) -> float:
        return float(self._frozen.mean())

    @property
    def var(self) -> float:
        return float(self._frozen.var())


@dataclass(frozen=True)
class ScaledNCChiSquare:
    """Magnitude whose square follows ``lam * chi2_v(w)``."""

    lam: float
    w: float
    v: float

    def __post_init__(self):
        if self.lam <= 0 or self.w < 0 or self.v <= 0:
            raise MomentError("requires lam > 0, w >= 0, v > 0")
        if self.w > 0:
            sq = stats.ncx2(df=self.v, nc=self.w, scale=self.lam)
        else:
            sq = stats.chi2(df=self.v, scale=self.lam)
        object.__setattr__(self, "_sq", sq)

    @property
    def mean_sq(self) -> float:
        """E of the squared variable: lam (v + w)."""
        return self.lam * (self.v + self.w)

    @property
    def var_sq(self) -> float:
        """Var of the squared variable: 2 lam^2 (v + 2w)."""
        return 2 * self.lam ** 2 * (self.v + 2 * self.w)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = 2 * np.abs(x) * self._sq.pdf(x ** 2)
        return np.where(x >= 0, out, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self._sq.cdf(np.maximum(x, 0.0) ** 2), 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self._sq.sf(np.maximum(x, 0.0) ** 2), 1.0)

    def quantile(self, q: float) -> float:
        return float(np.sqrt(self._sq.ppf(q)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.sqrt(self._sq.rvs(size=n, random_state=rng))

    @property
    def mean(self) -> float:
        lo, hi = 0.0, self.quantile(1 - 1e-13)
        return _panel_integrate(lambda x: x * self.pdf(x), lo, hi, 400)

    @property
    def var(self) -> float:
        return self.mean_sq - self.mean ** 2


def chi_square_params(m: VoltageChangeMoments, formula: str = "matched"):
    """Fit ``lam * chi2_v(w)`` to the two-term weighted non-central sum.

    ``matched`` (default) matches mean and variance of the sum exactly;
    it is the printed parameterization with both the w and v denominators
    read as the half-variance normalizer (the literal transcriptions are
    available as ``printed`` and ``printed_w_fixed`` for comparison).
    """
    w_r = max(m.var_r, VAR_FLOOR)
    w_i = max(m.var_i, VAR_FLOOR)
    d_r2 = m.mu_r ** 2 / w_r
    d_i2 = m.mu_i ** 2 / w_i
    a_r = 1.0 + 2.0 * d_r2
    a_i = 1.0 + 2.0 * d_i2
    lam = (w_r ** 2 * a_r + w_i ** 2 * a_i) / (w_r * a_r + w_i * a_i)
    if formula == "matched":
        num = w_r * a_r + w_i * a_i
        den = w_r ** 2 * a_r + w_i ** 2 * a_i
        w = (w_r * d_r2 + w_i * d_i2) * num / den
        v = (w_r + w_i) * num / den
    elif formula == "printed_w_fixed":
        num = w_r + w_i + 2 * w_r * d_r2 + 2 * w_i * d_i2
        w = (w_r * d_r2 + w_i * d_i2) * num \
            / (w_r ** 2 + w_i ** 2 + 2 * w_r ** 2 * d_r2 + 2 * w_i ** 2 * d_i2)
        v = (w_r + w_i) * num \
            / (w_r + w_i + 2 * w_r ** 2 * d_r2 + 2 * w_i ** 2 * d_i2)
    elif formula == "printed":
        num = w_r + w_i + 2 * w_r * d_r2 + 2 * w_i * d_i2
        w = (w_r * d_r2 + w_i * d_i2) * num \
            / (w_r ** 2 + w_i ** 2 + 2 * w_r ** 2 * d_r2 + 2 * w_r ** 2 * d_i2)
        v = (w_r + w_i) * num \
            / (w_r + w_i + 2 * w_r ** 2 * d_r2 + 2 * w_i ** 2 * d_i2)
    else:
        raise ValueError(f"unknown formula {formula!r}")
    return float(lam), float(max(w, 0.0)), float(v)


def magnitude_distribution(m: VoltageChangeMoments, *,
                           zero_mean_tol: float = 1e-12):
    """Distribution of |dV|: Nakagami for a zero-mean change, else Rician."""
    if abs(m.mu_r) <= zero_mean_tol and abs(m.mu_i) <= zero_mean_tol:
        s2 = max(m.var_r, VAR_FLOOR) + max(m.var_i, VAR_FLOOR)
        theta = 2 * (max(m.var_r, VAR_FLOOR) ** 2 + max(m.var_i, VAR_FLOOR) ** 2
                     + 2 * m.c ** 2) / s2
        mm = s2 / theta
        return Nakagami(m=mm, omega=float(np.sqrt(mm * theta)))
    lam, w, v = chi_square_params(m)
    return Rician(k=float(np.sqrt(w)), sigma=float(np.sqrt(lam)))


def future_voltage_distribution(base_v: complex, m: VoltageChangeMoments) -> Rician:
    """Distribution of |base_v + dV|.

    ``base_v`` must be expressed in the same phase frame as the moments
    (rotate phase-b/c phasors onto the real axis first).  The mean shift
    adds to the base components; the spread is unchanged.
    """
    shifted = VoltageChangeMoments(
        mu_r=base_v.real + m.mu_r, mu_i=base_v.imag + m.mu_i,
        var_r=max(m.var_r, VAR_FLOOR), var_i=max(m.var_i, VAR_FLOOR),
        c=m.c, n_actors=m.n_actors)
    lam, w, v = chi_square_params(shifted)
    return Rician(k=float(np.sqrt(w)), sigma=float(np.sqrt(lam)))


def violation_probability(dist, v_min: float, v_max: float) -> float:
    """P(magnitude < v_min) + P(magnitude > v_max)."""
    if not v_min < v_max:
        raise ValueError("require v_min < v_max")
    p = float(dist.cdf(v_min)) + float(dist.sf(v_max))
    return min(max(p, 0.0), 1.0)
