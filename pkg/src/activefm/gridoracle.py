"""Periodic-box pseudospectral solver used as a cross-validation oracle.

This is a second, independent implementation of the same transformed
system: fields live on a dense FFT grid, nonlinear terms are evaluated
pointwise in physical space and dealiased, and the linear part is
applied per mode.  For initial data whose atoms sit on the box's
wavevector lattice inside the dealias radius, the atom path and this
grid path integrate the identical Galerkin system, so their
trajectories agree to accumulated roundoff.

The box is an oracle device only; cubic products are alias-free as long
as the retained radius stays below a quarter of the per-axis mode count
(the "1/2 rule"); the standard 2/3 rule is exact for quadratic products
only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, LatticeError
from .measures import SpectralMeasure
from .symbols import ModelParams, SteadyState, phi1, phi2, rank_one_weights

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    """Periodic box: per-axis resolution (powers of two) and box lengths."""

    shape: tuple
    box: tuple
    dealias: object = "2/3"      # "2/3", "1/2", or an explicit radius (float)

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))
        if len(self.shape) not in (2, 3) or len(self.box) != len(self.shape):
            raise ConfigError("grid needs 2 or 3 axes with matching box lengths")
        for s in self.shape:
            if s < 4 or (s & (s - 1)) != 0:
                raise ConfigError("per-axis resolution must be a power of two >= 4")
        if isinstance(self.dealias, str) and self.dealias not in ("2/3", "1/2"):
            raise ConfigError("dealias must be '2/3', '1/2' or an explicit radius")

    @property
    def n(self) -> int:
        return len(self.shape)

    def wavenumbers(self) -> list[np.ndarray]:
        """Per-axis wavevector components in fft order (2*pi/L * integers)."""
        return [TWO_PI * np.fft.fftfreq(s, d=b / s) for s, b in zip(self.shape, self.box)]

    def wavegrids(self) -> np.ndarray:
        """Stacked wavevector grids, shape (n, *shape)."""
        ks = np.meshgrid(*self.wavenumbers(), indexing="ij")
        return np.stack(ks)

    def dealias_radius(self) -> float:
        nyquist = min(math.pi * s / b for s, b in zip(self.shape, self.box))
        if self.dealias == "2/3":
            return (2.0 / 3.0) * nyquist
        if self.dealias == "1/2":
            return 0.5 * nyquist
        return float(self.dealias)

    def cubic_exact_radius(self) -> float:
        """Largest radial cutoff with alias-free cubic products."""
        return min(TWO_PI / b * (s / 4.0 - 1.0) for s, b in zip(self.shape, self.box))

    def dealias_mask(self, radius: Optional[float] = None) -> np.ndarray:
        r = self.dealias_radius() if radius is None else float(radius)
        kk = self.wavegrids()
        return np.einsum("i...,i...->...", kk, kk) <= r * r


class GridField:
    """Vector (or scalar) field on the box, stored as plane-wave coefficients.

    data[c, i, j(, l)] is the coefficient of exp(i k . x) for the mode k
    in fft order; the physical samples are N_tot * ifftn(data).
    """

    def __init__(self, spec: GridSpec, data: np.ndarray):
        self.spec = spec
        self.data = np.asarray(data, dtype=complex)
        if self.data.shape[1:] != spec.shape:
            raise ConfigError(f"data shape {self.data.shape} does not match grid {spec.shape}")

    @property
    def ncomp(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "GridField":
        return GridField(self.spec, self.data.copy())

    def physical(self) -> np.ndarray:
        """Complex physical samples on the grid, shape (ncomp, *shape)."""
        axes = tuple(range(1, 1 + self.spec.n))
        ntot = int(np.prod(self.spec.shape))
        return np.fft.ifftn(self.data, axes=axes) * ntot

    @classmethod
    def from_physical(cls, spec: GridSpec, phys: np.ndarray) -> "GridField":
        axes = tuple(range(1, 1 + spec.n))
        ntot = int(np.prod(spec.shape))
        return cls(spec, np.fft.fftn(phys, axes=axes) / ntot)

    @classmethod
    def zeros(cls, spec: GridSpec, ncomp: int) -> "GridField":
        return cls(spec, np.zeros((ncomp,) + spec.shape, complex))

    def grid_points(self) -> np.ndarray:
        axes = [np.linspace(0.0, b, s, endpoint=False)
                for s, b in zip(self.spec.shape, self.spec.box)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids)

    def sup_norm(self) -> float:
        phys = self.physical()
        return float(np.max(np.sqrt(np.einsum("c...,c...->...", phys, np.conj(phys)).real)))

    def max_divergence(self) -> float:
        kk = self.spec.wavegrids()
        div = np.einsum("i...,i...->...", 1j * kk, self.data)
        return float(np.max(np.abs(div)))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        phys = self.physical()
        scale = max(float(np.max(np.abs(phys))), 1e-300)
        return float(np.max(np.abs(phys.imag))) <= tol * scale

    def energy(self) -> float:
        """L^2 energy on the box via the coefficient Parseval identity."""
        vol = float(np.prod(self.spec.box))
        return vol * float(np.sum(np.abs(self.data) ** 2))


# ---------------------------------------------------------------------------
# lift / harvest


def lift(u: SpectralMeasure, spec: GridSpec, tol: float = 1e-12,
         radius: Optional[float] = None) -> GridField:
    """Place atom coefficients in their grid bins.

    Every atom must sit on the box's wavevector lattice to within `tol`
    and inside the dealias radius; violations raise LatticeError naming
    the atom.
    """
    r = spec.dealias_radius() if radius is None else float(radius)
    field = GridField.zeros(spec, u.ncomp)
    steps = np.array([TWO_PI / b for b in spec.box])
    for i in range(len(u)):
        xi = u.wavevectors[i]
        m = np.rint(xi / steps).astype(int)
        err = float(np.max(np.abs(m * steps - xi)))
        if err > tol:
            raise LatticeError(f"atom {i} off the grid lattice: xi={xi.tolist()} (error {err:.3e})")
        if float(np.linalg.norm(xi)) > r * (1.0 + 1e-12):
            raise LatticeError(f"atom {i} outside the dealias radius: |xi|={np.linalg.norm(xi):.6g}")
        for ax, mm in enumerate(m):
            if abs(int(mm)) > spec.shape[ax] // 2 - 1:
                raise LatticeError(f"atom {i} beyond the grid Nyquist range on axis {ax}")
        idx = tuple(int(mm) % spec.shape[ax] for ax, mm in enumerate(m))
        field.data[(slice(None),) + idx] += u.coeffs[i]
    return field


def to_measure(field: GridField, amp_tol: float = 0.0) -> SpectralMeasure:
    """Harvest nonzero grid bins into an atom set (inverse of lift)."""
    kk = field.spec.wavegrids()
    flat_k = kk.reshape(field.spec.n, -1).T
    flat_c = field.data.reshape(field.ncomp, -1).T
    mags = np.linalg.norm(flat_c, axis=1)
    keep = mags > amp_tol
    from .measures import normalize
    return normalize((flat_k[keep], flat_c[keep]), merge_tol=1e-12)


# ---------------------------------------------------------------------------
# linear factors and projection


def _grid_linear_weights(spec: GridSpec, h: float, params: ModelParams, state: SteadyState):
    """Per-mode weights for exp(-h sigma), phi1- and phi2-operators."""
    kk = spec.wavegrids()
    nsq = np.einsum("i...,i...->...", kk, kk)
    if state.kind == "disordered":
        a = params.gamma2 * nsq**2 + params.gamma0 * nsq + params.alpha
        return {"kind": "scalar",
                "exp": np.exp(-h * a).astype(complex),
                "phi1": h * phi1(h * a),
                "phi2": h * phi2(h * a)}
    V = state.V
    kv = np.einsum("i...,i->...", kk, V)
    origin = nsq == 0.0
    proj = np.where(origin, 0.0, kv / np.where(origin, 1.0, nsq))
    pv = V.reshape((spec.n,) + (1,) * spec.n) - proj[None, ...] * kk
    tau = np.einsum("i...,i->...", pv, V)
    a = params.gamma2 * nsq**2 + params.gamma0 * nsq + 1j * params.lambda0 * kv
    floor = 1e-14 * float(V @ V)
    weights = {which: rank_one_weights(which, h, a, tau, 2.0 * params.beta, floor)
               for which in (0, 1, 2)}
    return {"kind": "rank_one", "V": V, "pv": pv, "weights": weights, "h": h}


def _apply_linear(weights, which: str, data: np.ndarray) -> np.ndarray:
    if weights["kind"] == "scalar":
        return weights[which][None, ...] * data
    idx = {"exp": 0, "phi1": 1, "phi2": 2}[which]
    w0, w1 = weights["weights"][idx]
    scale = 1.0 if which == "exp" else weights["h"]
    vc = np.einsum("c...,c->...", data, weights["V"].astype(complex))
    return scale * (w0[None, ...] * data + w1[None, ...] * vc[None, ...] * weights["pv"])


def project_divergence_free(field: GridField, origin_policy: str = "drop") -> GridField:
    """Per-mode divergence-free projection; the mean mode follows the policy."""
    kk = field.spec.wavegrids()
    nsq = np.einsum("i...,i...->...", kk, kk)
    origin = nsq == 0.0
    dots = np.einsum("i...,i...->...", kk.astype(complex), field.data)
    corr = np.where(origin, 0.0, dots / np.where(origin, 1.0, nsq))
    data = field.data - corr[None, ...] * kk
    if origin_policy == "drop":
        data = np.where(origin[None, ...], 0.0, data)
    else:
        data = np.where(origin[None, ...], field.data, data)
    return GridField(field.spec, data)


# ---------------------------------------------------------------------------
# nonlinear term (pseudospectral)


def nonlinear_rhs(field: GridField, params: ModelParams, state: SteadyState,
                  cutoff: Optional[float] = None, origin_policy: str = "drop") -> GridField:
    """G(u) = -(beta P|u|^2 u + lambda0 P(u.grad)u - P N(u)) on the grid.

    Products are evaluated pointwise in physical space (without
    conjugation, matching the atom convolutions), transformed back, cut
    at the dealias radius (or the explicit `cutoff`), and projected.
    """
    spec = field.spec
    kk = spec.wavegrids()
    phys = field.physical()
    axes = tuple(range(1, 1 + spec.n))
    ntot = int(np.prod(spec.shape))

    terms = np.zeros_like(phys)
    # cubic damping: (u.u) u
    uu = np.einsum("c...,c...->...", phys, phys)
    terms += params.beta * uu[None, ...] * phys
    # advection: (u.grad)u
    if params.lambda0 != 0.0:
        grads = np.fft.ifftn(1j * kk[:, None, ...] * field.data[None, ...],
                             axes=tuple(a + 1 for a in axes)) * ntot
        adv = np.einsum("m...,mc...->c...", phys, grads)
        terms += params.lambda0 * adv
    # steady-state quadratic term
    if state.kind == "ordered":
        V = state.V
        uv = np.einsum("c...,c->...", phys, V.astype(complex))
        nterm = -state.beta * uu[None, ...] * V.reshape((spec.n,) + (1,) * spec.n) \
                - 2.0 * state.beta * uv[None, ...] * phys
        terms -= nterm

    ghat = np.fft.fftn(terms, axes=axes) / ntot
    mask = spec.dealias_mask(cutoff)
    ghat = np.where(mask[None, ...], ghat, 0.0)
    out = project_divergence_free(GridField(spec, -ghat), origin_policy)
    return out


# ---------------------------------------------------------------------------
# stepping


def grid_step(field: GridField, t: float, h: float, params: ModelParams,
              state: SteadyState, stepper: str = "etd2rk",
              cutoff: Optional[float] = None, origin_policy: str = "drop",
              forcing=None, linearized: bool = False) -> GridField:
    """One ExpEuler/ETD2RK step matching the atom path's semantics.

    `forcing`, when given, is a callable t -> GridField.  `cutoff`
    overrides the dealias radius so the retained mode set can be made
    identical to an atom-path truncation ball.
    """
    spec = field.spec
    weights = _grid_linear_weights(spec, h, params, state)
    mask = spec.dealias_mask(cutoff)[None, ...]

    def rhs(fld, tt):
        if linearized:
            g = np.zeros_like(fld.data)
        else:
            g = nonlinear_rhs(fld, params, state, cutoff, origin_policy).data
        if forcing is not None:
            g = g + np.where(mask, forcing(tt).data, 0.0)
        return g

    f0 = rhs(field, t)
    stage = _apply_linear(weights, "exp", field.data) + _apply_linear(weights, "phi1", f0)
    stage = np.where(mask, stage, 0.0)
    if stepper == "exp_euler":
        return GridField(spec, stage)
    if stepper != "etd2rk":
        raise ConfigError("stepper must be 'exp_euler' or 'etd2rk'")
    f1 = rhs(GridField(spec, stage), t + h)
    out = stage + _apply_linear(weights, "phi2", f1 - f0)
    return GridField(spec, np.where(mask, out, 0.0))


# ---------------------------------------------------------------------------
# brute-force product and pressure oracles


def brute_force_product(u: SpectralMeasure, v: SpectralMeasure, spec: GridSpec,
                        mode: str = "auto") -> GridField:
    """Pointwise physical-space product of two lifted atom sets.

    Valid (alias-free everywhere) only when the per-axis index ranges of
    the factors sum to less than half the resolution; outside that range
    an incompatibility error is raised.
    """
    fu = lift(u, spec, radius=np.inf)
    fv = lift(v, spec, radius=np.inf)
    for ax in range(spec.n):
        step = TWO_PI / spec.box[ax]
        mu = max((abs(x[ax]) for x in u.wavevectors), default=0.0) / step
        mv = max((abs(x[ax]) for x in v.wavevectors), default=0.0) / step
        if mu + mv > spec.shape[ax] // 2 - 1:
            raise LatticeError(f"product would alias on axis {ax}: index reach {mu + mv:.1f}")
    pu, pv = fu.physical(), fv.physical()
    if mode == "auto":
        mode = "scale" if (u.ncomp == 1 or v.ncomp == 1) else "dot"
    if mode == "scale":
        prod = pu * pv if u.ncomp == 1 else pv * pu
    elif mode == "dot":
        prod = np.einsum("c...,c...->...", pu, pv)[None, ...]
    elif mode == "componentwise":
        prod = pu * pv
    else:
        raise ConfigError(f"unsupported product mode {mode!r}")
    return GridField.from_physical(spec, prod)


def grid_pressure_potential(u: SpectralMeasure, params: ModelParams, state: SteadyState,
                            spec: GridSpec) -> GridField:
    """Scalar pressure potential q via a spectral Poisson solve.

    Assembles the nonlinear bracket pointwise on the grid and inverts
    grad q = -(I - P) bracket, mode by mode.
    """
    field = lift(u, spec, radius=np.inf)
    phys = field.physical()
    kk = spec.wavegrids()
    axes = tuple(range(1, 1 + spec.n))
    ntot = int(np.prod(spec.shape))

    uu = np.einsum("c...,c...->...", phys, phys)
    bracket = np.einsum("cd,d...->c...", state.M.astype(complex), phys)
    bracket += params.beta * uu[None, ...] * phys
    if params.lambda0 != 0.0:
        grads = np.fft.ifftn(1j * kk[:, None, ...] * field.data[None, ...],
                             axes=tuple(a + 1 for a in axes)) * ntot
        bracket += params.lambda0 * np.einsum("m...,mc...->c...", phys, grads)
    if state.kind == "ordered":
        V = state.V
        uv = np.einsum("c...,c->...", phys, V.astype(complex))
        bracket -= (-state.beta * uu[None, ...] * V.reshape((spec.n,) + (1,) * spec.n)
                    - 2.0 * state.beta * uv[None, ...] * phys)

    what = np.fft.fftn(bracket, axes=axes) / ntot
    nsq = np.einsum("i...,i...->...", kk, kk)
    origin = nsq == 0.0
    kw = np.einsum("i...,i...->...", kk.astype(complex), what)
    qhat = np.where(origin, 0.0, 1j * kw / np.where(origin, 1.0, nsq))
    return GridField(spec, qhat[None, ...])
