"""Matrix symbols of the model operators and pointwise spectral analysis.

Everything here is a pure function of a wavevector and the model data:
the divergence-free projector, the linearized-operator symbol, the
dispersion relation of the rest state, closed-form critical wavenumbers,
stability classification for both steady states, a sampled sectoriality
certificate, per-atom propagators with their phi-functions, and the
maximal-regularity constant check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.integrate

from .errors import ConfigError, InvalidStateError, NumericError, SingularSymbolError
from .measures import SpectralMeasure

VERDICT_EXP_STABLE = "exp_stable"
VERDICT_ASYM_STABLE = "asym_stable"
VERDICT_EXP_UNSTABLE = "exp_unstable"

BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the model.

    lambda0: advection strength; lambda1: active-pressure coefficient;
    gamma0: sign-indefinite viscosity; gamma2: hyperviscosity (> 0);
    alpha: linear friction; beta: cubic friction (> 0); n: dimension.
    """

    lambda0: float
    lambda1: float
    gamma0: float
    gamma2: float
    alpha: float
    beta: float
    n: int = 2

    def __post_init__(self):
        if not (self.gamma2 > 0 and self.beta > 0):
            raise ConfigError("model requires gamma2 > 0 and beta > 0")
        if self.n not in (2, 3):
            raise ConfigError("space dimension n must be 2 or 3")


@dataclass(frozen=True)
class SteadyState:
    """Steady state of the model in transformed coordinates.

    kind "disordered": V = 0, M = alpha*I, no quadratic term.
    kind "ordered" (alpha < 0): V has the fixed swimming speed
    sqrt(-alpha/beta), M = 2*beta*V V^T, and the quadratic term is
    N(u) = -beta |u|^2 V - 2 beta (u.V) u.
    """

    kind: str
    V: np.ndarray
    M: np.ndarray
    p0: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float))
        self.V.setflags(write=False)
        self.M.setflags(write=False)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @classmethod
    def disordered(cls, params: ModelParams, p0: float = 0.0) -> "SteadyState":
        n = params.n
        return cls("disordered", np.zeros(n), params.alpha * np.eye(n), p0, params.beta)

    @classmethod
    def ordered(cls, params: ModelParams, direction, p0: float = 0.0) -> "SteadyState":
        if not params.alpha < 0:
            raise InvalidStateError("ordered state requires alpha < 0")
        d = np.asarray(direction, dtype=float)
        if d.shape != (params.n,) or not np.linalg.norm(d) > 0:
            raise InvalidStateError("ordered state needs a nonzero direction of length n")
        V = math.sqrt(-params.alpha / params.beta) * d / np.linalg.norm(d)
        return cls("ordered", V, 2.0 * params.beta * np.outer(V, V), p0, params.beta)

    def quadratic_coeffs(self) -> np.ndarray:
        """Tensor a[i,j,k] with N_i(u) = sum_jk a[i,j,k] u_j u_k (symmetric in j,k)."""
        n = self.n
        a = np.zeros((n, n, n))
        if self.kind == "ordered":
            for i in range(n):
                for j in range(n):
                    a[i, j, j] += -self.beta * self.V[i]
                    a[i, i, j] += -self.beta * self.V[j]
                    a[i, j, i] += -self.beta * self.V[j]
        return a


@dataclass(frozen=True)
class Witness:
    xi: np.ndarray
    direction: np.ndarray
    growth_rate: float


@dataclass(frozen=True)
class StabilityVerdict:
    stability: str
    spectral_bound: float
    witness: Optional[Witness] = None
    critical_band: Optional[tuple[float, float]] = None
    discriminant: Optional[float] = None


@dataclass(frozen=True)
class CriticalBand:
    """Roots of gamma2 s^2 + gamma0 s + alpha in the s = |xi|^2 variable."""

    exists: bool
    s_minus_sq: Optional[float]
    s_plus_sq: Optional[float]
    discriminant: float


def _close(a: float, b: float, rtol: float = BOUNDARY_RTOL) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


# ---------------------------------------------------------------------------
# pointwise symbols


def helmholtz_symbol(xi) -> np.ndarray:
    """Orthogonal projector onto {xi}^perp: I - xi xi^T / |xi|^2."""
    xi = np.asarray(xi, dtype=float)
    nsq = float(xi @ xi)
    if nsq == 0.0:
        raise SingularSymbolError("divergence-free projector undefined at xi = 0")
    return np.eye(len(xi)) - np.outer(xi, xi) / nsq


def project_solenoidal(u: SpectralMeasure, origin_policy: str = "drop") -> SpectralMeasure:
    """Apply the divergence-free projector atom by atom.

    Atoms at the origin are removed under policy "drop" (the result is
    then zero-free) and passed through unchanged under "keep" (constant
    vectors are divergence-free).
    """
    if origin_policy not in ("drop", "keep"):
        raise ConfigError(f"origin_policy must be 'drop' or 'keep', got {origin_policy!r}")
    if len(u) == 0:
        return u
    xi = u.wavevectors
    nsq = np.einsum("an,an->a", xi, xi)
    at_origin = nsq <= max(u.merge_tol, 0.0) ** 2
    dots = np.einsum("an,an->a", xi.astype(complex), u.coeffs)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(at_origin, 0.0, dots / np.where(at_origin, 1.0, nsq))
    coeffs = u.coeffs - corr[:, None] * xi
    if origin_policy == "keep":
        coeffs = np.where(at_origin[:, None], u.coeffs, coeffs)
        keep = np.ones(len(u), dtype=bool)
    else:
        keep = ~at_origin
    return SpectralMeasure(xi[keep], coeffs[keep], u.n, u.merge_tol)


def linearized_symbol(xi, params: ModelParams, state: SteadyState) -> np.ndarray:
    """Symbol of the linearized operator:

    (gamma2 |xi|^4 + gamma0 |xi|^2 + i lambda0 V.xi) I + P(xi) M.
    """
    xi = np.asarray(xi, dtype=float)
    nsq = float(xi @ xi)
    if nsq == 0.0:
        raise SingularSymbolError("linearized symbol undefined at xi = 0")
    a = params.gamma2 * nsq**2 + params.gamma0 * nsq + 1j * params.lambda0 * float(state.V @ xi)
    return a * np.eye(len(xi), dtype=complex) + helmholtz_symbol(xi) @ state.M


def disordered_symbol(k, params: ModelParams):
    """Scalar symbol of the rest-state operator at wavenumber k = |xi|."""
    k = np.asarray(k, dtype=float)
    ksq = k * k
    return params.gamma2 * ksq * ksq + params.gamma0 * ksq + params.alpha


def dispersion_disordered(k, params: ModelParams):
    """Growth rate of a plane-wave mode of the rest state:

    -(alpha + gamma0 k^2 + gamma2 k^4).
    """
    k = np.asarray(k, dtype=float)
    out = -(params.alpha + params.gamma0 * k**2 + params.gamma2 * k**4)
    return float(out) if out.ndim == 0 else out


def critical_wavenumbers(params: ModelParams) -> CriticalBand:
    """Both roots of gamma2 s^2 + gamma0 s + alpha when real and positive.

    The roots are the squared wavenumbers bounding the band of growing
    modes.  Uses the cancellation-free quadratic formula.  When the two
    roots are not both real and positive the band is reported absent,
    with the discriminant attached.
    """
    g2, g0, al = params.gamma2, params.gamma0, params.alpha
    disc = g0 * g0 - 4.0 * al * g2
    if disc < 0:
        return CriticalBand(False, None, None, disc)
    sq = math.sqrt(disc)
    if al == 0.0:
        roots = sorted((0.0, -g0 / g2))
    elif g0 == 0.0:
        r = sq / (2.0 * g2)
        roots = [-r, r]
    else:
        q = -0.5 * (g0 + math.copysign(sq, g0))
        roots = sorted((q / g2, al / q))
    if roots[0] > 0 and roots[1] > 0:
        return CriticalBand(True, roots[0], roots[1], disc)
    return CriticalBand(False, None, None, disc)


# ---------------------------------------------------------------------------
# stability classification


def classify_disordered(params: ModelParams, boundary_rtol: float = BOUNDARY_RTOL) -> StabilityVerdict:
    """Trichotomy for the rest state.

    Exponentially stable when gamma0 < 0 with 4 alpha > gamma0^2/gamma2
    or gamma0 >= 0 with alpha > 0; asymptotically stable on the
    respective boundaries; exponentially unstable otherwise.  Boundary
    ties are decided with relative tolerance `boundary_rtol`.
    """
    g0, g2, al = params.gamma0, params.gamma2, params.alpha
    if g0 < 0 and not _close(g0, 0.0, boundary_rtol):
        lhs, rhs = 4.0 * al, g0 * g0 / g2
        if _close(lhs, rhs, boundary_rtol):
            cls = VERDICT_ASYM_STABLE
        elif lhs > rhs:
            cls = VERDICT_EXP_STABLE
        else:
            cls = VERDICT_EXP_UNSTABLE
    else:
        if _close(al, 0.0, boundary_rtol):
            cls = VERDICT_ASYM_STABLE
        elif al > 0:
            cls = VERDICT_EXP_STABLE
        else:
            cls = VERDICT_EXP_UNSTABLE

    band = critical_wavenumbers(params)
    if g0 < 0:
        kstar_sq = -g0 / (2.0 * g2)
        rate_at_kstar = dispersion_disordered(math.sqrt(kstar_sq), params)
    else:
        kstar_sq = 0.0
        rate_at_kstar = -al
    spectral_bound = max(-al, rate_at_kstar)

    witness = None
    if cls == VERDICT_EXP_UNSTABLE:
        kstar = math.sqrt(kstar_sq)
        xi = np.zeros(params.n)
        xi[0] = kstar
        direction = np.zeros(params.n)
        direction[1] = 1.0
        rate = -al if kstar == 0.0 else dispersion_disordered(kstar, params)
        witness = Witness(xi, direction, rate)
    return StabilityVerdict(cls, spectral_bound, witness,
                            (band.s_minus_sq, band.s_plus_sq) if band.exists else None,
                            band.discriminant)


def classify_ordered(params: ModelParams, V, boundary_rtol: float = BOUNDARY_RTOL,
                     v_rtol: float = 1e-12) -> StabilityVerdict:
    """Dichotomy for the uniformly swimming state.

    Exponentially unstable when gamma0 < 0, with an explicit witness
    wavevector xi perpendicular to V at |xi|^2 = -gamma0/(2 gamma2) and
    direction x perpendicular to V on which the symbol's quadratic form
    equals gamma2|xi|^4 + gamma0|xi|^2 < 0; asymptotically stable when
    gamma0 >= 0 (the spectral bound 0 is approached as |xi| -> 0 but not
    attained).
    """
    V = np.asarray(V, dtype=float)
    if not params.alpha < 0:
        raise InvalidStateError("ordered state requires alpha < 0")
    target = math.sqrt(-params.alpha / params.beta)
    if abs(np.linalg.norm(V) - target) > v_rtol * target:
        raise InvalidStateError(
            f"|V| = {np.linalg.norm(V)!r} inconsistent with sqrt(-alpha/beta) = {target!r}")

    g0, g2 = params.gamma0, params.gamma2
    if g0 < 0 and not _close(g0, 0.0, boundary_rtol):
        kstar_sq = -g0 / (2.0 * g2)
        rate = -(g2 * kstar_sq**2 + g0 * kstar_sq)
        vhat = V / np.linalg.norm(V)
        perp = _unit_perp(vhat)
        xi = math.sqrt(kstar_sq) * perp
        direction = perp if params.n == 2 else np.cross(vhat, perp)
        witness = Witness(xi, direction, rate)
        return StabilityVerdict(VERDICT_EXP_UNSTABLE, rate, witness)
    return StabilityVerdict(VERDICT_ASYM_STABLE, 0.0, None)


def _unit_perp(v: np.ndarray) -> np.ndarray:
    """Deterministic unit vector perpendicular to v."""
    if len(v) == 2:
        return np.array([-v[1], v[0]]) / np.linalg.norm(v)
    e = np.zeros(3)
    e[int(np.argmin(np.abs(v)))] = 1.0
    p = np.cross(v, e)
    return p / np.linalg.norm(p)


# ---------------------------------------------------------------------------
# sectoriality scan


@dataclass(frozen=True)
class SectorialityReport:
    ok: bool
    omega: Optional[float]
    angle: Optional[float]
    modulus_margin: Optional[float]
    spectral_sup: float
    n_samples: int
    message: str = ""


def _solenoidal_eigenvalues(xi: np.ndarray, params: ModelParams, state: SteadyState) -> np.ndarray:
    """Eigenvalues of the symbol restricted to the solenoidal subspace at xi."""
    n = len(xi)
    sym = linearized_symbol(xi, params, state)
    # orthonormal basis of {xi}^perp
    q, _ = np.linalg.qr(np.column_stack([xi / np.linalg.norm(xi), np.eye(n)]))
    basis = q[:, 1:n]
    reduced = basis.T @ sym @ basis
    return np.linalg.eigvals(reduced)


def sectoriality_scan(params: ModelParams, state: SteadyState,
                      xi_min: float = 1e-2, xi_max: float = 1e2,
                      n_moduli: int = 512, n_dirs: int = 32,
                      omega_grid=None, min_modulus: float = 1e-12) -> SectorialityReport:
    """Sampled sector certificate for the shifted symbol.

    Scans |xi| log-uniformly on [xi_min, xi_max] over a deterministic
    direction set, and grid-searches the smallest shift omega >= 0 such
    that every sampled eigenvalue z of omega + symbol(xi) satisfies
    |arg z| < pi/2 and |z| >= min_modulus.  Reports the achieved angle
    and modulus margin.  This is a certificate on the sample set only,
    never a proof; a failed scan is reported, not raised.
    """
    n = params.n
    moduli = np.geomspace(xi_min, xi_max, n_moduli)
    if n == 2:
        angles = np.linspace(0.0, math.pi, n_dirs, endpoint=False)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        # Fibonacci sphere, deterministic
        i = np.arange(n_dirs)
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * (i + 0.5) / n_dirs
        r = np.sqrt(1.0 - z * z)
        dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])

    eigs = []
    for d in dirs:
        for m in moduli:
            eigs.append(_solenoidal_eigenvalues(m * d, params, state))
    eigs = np.concatenate(eigs)
    spectral_sup = float(np.max(-eigs.real))

    if omega_grid is None:
        omega_grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 121)])
    for omega in np.sort(np.asarray(omega_grid, dtype=float)):
        z = omega + eigs
        if np.any(z.real <= 0.0):
            continue
        mod = np.abs(z)
        if np.min(mod) < min_modulus:
            continue
        angle = float(np.max(np.abs(np.angle(z))))
        if angle < math.pi / 2:
            return SectorialityReport(True, float(omega), angle, float(np.min(mod)),
                                      spectral_sup, eigs.size)
    return SectorialityReport(False, None, None, None, spectral_sup, eigs.size,
                              message="no shift in the scanned range produced a sector")


# ---------------------------------------------------------------------------
# phi functions and propagators


def _series_ok(z: np.ndarray, threshold: float = 1e-4) -> np.ndarray:
    return np.abs(z) < threshold


def phi0(z):
    """exp(-z), elementwise."""
    return np.exp(-np.asarray(z, dtype=complex))


def phi1(z):
    """(1 - exp(-z))/z with a 4-term series for small |z|."""
    z = np.asarray(z, dtype=complex)
    small = _series_ok(z)
    zs = np.where(small, 0.0, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (1.0 - np.exp(-zs)) / np.where(small, 1.0, zs)
    series = 1.0 - z / 2.0 + z**2 / 6.0 - z**3 / 24.0
    out = np.where(small, series, direct)
    return complex(out) if out.ndim == 0 else out


def phi2(z):
    """(exp(-z) - 1 + z)/z^2 with a 4-term series for small |z|."""
    z = np.asarray(z, dtype=complex)
    small = _series_ok(z)
    zs = np.where(small, 1.0, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (np.exp(-zs) - 1.0 + zs) / zs**2
    series = 0.5 - z / 6.0 + z**2 / 24.0 - z**3 / 120.0
    out = np.where(small, series, direct)
    return complex(out) if out.ndim == 0 else out


def _dphi0(z):
    return -np.exp(-np.asarray(z, dtype=complex))


def _dphi1(z):
    z = np.asarray(z, dtype=complex)
    small = _series_ok(z, 1e-3)
    zs = np.where(small, 1.0, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (np.exp(-zs) * (zs + 1.0) - 1.0) / zs**2
    series = -0.5 + z / 3.0 - z**2 / 8.0 + z**3 / 30.0
    return np.where(small, series, direct)


def _dphi2(z):
    z = np.asarray(z, dtype=complex)
    small = _series_ok(z, 1e-3)
    zs = np.where(small, 1.0, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (zs * (1.0 - np.exp(-zs)) - 2.0 * (np.exp(-zs) - 1.0 + zs)) / zs**3
    series = -1.0 / 6.0 + z / 12.0 - z**2 / 40.0 + z**3 / 180.0
    return np.where(small, series, direct)


_PHI_TABLE = {0: (phi0, _dphi0), 1: (phi1, _dphi1), 2: (phi2, _dphi2)}


def rank_one_weights(which: int, h: float, a, tau, two_beta: float, tau_floor):
    """Scalar weights (w0, w1) so that f(h*(aI + 2 beta B)) = w0 I + w1 B.

    B is the rank-one-or-zero matrix P(xi) V V^T with B^2 = tau B; the
    eigen-decomposition gives w0 = f(h a) and w1 the divided difference
    of f(h .) between a and a + 2 beta tau, which switches to the exact
    derivative when tau underflows (tau < tau_floor).
    """
    f, df = _PHI_TABLE[which]
    a = np.asarray(a, dtype=complex)
    tau = np.asarray(tau, dtype=float)
    w0 = f(h * a)
    tiny = tau <= tau_floor
    tau_safe = np.where(tiny, 1.0, tau)
    w1_generic = (f(h * (a + two_beta * tau_safe)) - w0) / tau_safe
    w1_deriv = two_beta * h * df(h * a)
    w1 = np.where(tiny, w1_deriv, w1_generic)
    return w0, w1


def _rank_one_data(xi: np.ndarray, params: ModelParams, state: SteadyState):
    """Scalar part a, projected swimming vector P(xi)V, and tau = V.P(xi)V."""
    nsq = float(xi @ xi)
    if nsq == 0.0:
        pv = state.V.copy()
    else:
        pv = state.V - (float(xi @ state.V) / nsq) * xi
    tau = float(state.V @ pv)
    a = params.gamma2 * nsq**2 + params.gamma0 * nsq + 1j * params.lambda0 * float(state.V @ xi)
    return a, pv, tau


def propagator(xi, h: float, params: ModelParams, state: SteadyState) -> np.ndarray:
    """Matrix exp(-h * symbol(xi)) in closed form.

    Disordered: scalar exp(-h (gamma2|xi|^4 + gamma0|xi|^2 + alpha)) I.
    Ordered: with B = P(xi) V V^T and tau = V.P(xi)V (so B^2 = tau B),
    exp(-h(aI + 2 beta B)) = e^{-ha} (I + (e^{-2 beta h tau} - 1)/tau B),
    degenerating to e^{-ha}(I - 2 beta h B) when tau underflows.
    """
    xi = np.asarray(xi, dtype=float)
    if h <= 0:
        raise ValueError("propagator needs h > 0")
    nsq = float(xi @ xi)
    if nsq == 0.0:
        raise SingularSymbolError("propagator undefined at xi = 0")
    n = len(xi)
    if state.kind == "disordered":
        a = params.gamma2 * nsq**2 + params.gamma0 * nsq + params.alpha
        return math.exp(-h * a) * np.eye(n, dtype=complex)
    a, pv, tau = _rank_one_data(xi, params, state)
    two_beta = 2.0 * params.beta
    vmag_sq = float(state.V @ state.V)
    w0, w1 = rank_one_weights(0, h, a, tau, two_beta, tau_floor=1e-14 * vmag_sq)
    B = np.outer(pv, state.V)
    return complex(w0) * np.eye(n, dtype=complex) + complex(w1) * B


def phi_operator(which: int, xi, h: float, params: ModelParams, state: SteadyState) -> np.ndarray:
    """Matrix h * g_which(h * symbol(xi)) for the exponential integrators.

    which = 1 gives the operator (1 - exp(-h sigma)) sigma^{-1}, which = 2
    the second-order correction weight; both stay finite as sigma -> 0.
    """
    xi = np.asarray(xi, dtype=float)
    nsq = float(xi @ xi)
    n = len(xi)
    if state.kind == "disordered":
        a = params.gamma2 * nsq**2 + params.gamma0 * nsq + params.alpha
        f = _PHI_TABLE[which][0]
        return h * complex(f(h * a)) * np.eye(n, dtype=complex)
    a, pv, tau = _rank_one_data(xi, params, state)
    vmag_sq = float(state.V @ state.V)
    w0, w1 = rank_one_weights(which, h, a, tau, 2.0 * params.beta, tau_floor=1e-14 * vmag_sq)
    return h * (complex(w0) * np.eye(n, dtype=complex) + complex(w1) * np.outer(pv, state.V))


# ---------------------------------------------------------------------------
# maximal-regularity constant


def maxreg_constant_check(gamma2: float, xi_norm: float, p: float,
                          T: float = math.inf) -> tuple[float, float]:
    """Quadrature check of the hyperviscous L^p-in-time bound.

    numeric = || |xi|^4 exp(-gamma2 t |xi|^4) ||_{L^p(0,T)} by adaptive
    quadrature; bound = |xi|^(4-4/p) / (gamma2 p)^(1/p).  For T = inf the
    two agree; for finite T the numeric value is strictly smaller.
    Raises NumericError if the quadrature fails to converge or the bound
    is violated beyond 1e-10 relative.
    """
    if gamma2 <= 0 or xi_norm <= 0 or p < 1:
        raise ConfigError("maxreg check needs gamma2 > 0, |xi| > 0, p >= 1")
    k4 = xi_norm**4

    def integrand(t):
        return (k4 * math.exp(-gamma2 * t * k4)) ** p

    upper = T if math.isfinite(T) else np.inf
    val, err = scipy.integrate.quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-12, limit=200)
    if not math.isfinite(val) or (val > 0 and err > 1e-8 * val):
        raise NumericError(f"quadrature did not converge (value {val}, error {err})")
    numeric = val ** (1.0 / p)
    bound = xi_norm ** (4.0 - 4.0 / p) / (gamma2 * p) ** (1.0 / p)
    if numeric > bound * (1.0 + 1e-10):
        raise NumericError(f"maximal-regularity bound violated: {numeric} > {bound}")
    return numeric, bound
