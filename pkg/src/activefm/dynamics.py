"""Nonlinear evolution of the transformed system on a truncated wavevector lattice.

The state is a finite atom set whose wavevectors lie on the integer
lattice generated by a basis of wavevectors; convolutions stay on the
lattice, so merging is exact on integer keys.  Time stepping applies the
exact per-atom linear semigroup and an exponential integrator (ExpEuler
or ETD2RK) for the nonlinear part.

Sign convention: the system is stepped as

    u_t = -(A u) + f + G(u),

where A is the linearized operator about the chosen steady state and
G(u) = -(beta P|u|^2 u + lambda0 P (u.grad) u - P N(u)) collects the
nonlinear terms moved to the right-hand side; :func:`nonlinearity`
returns G.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (AtomCapError, ConfigError, ExperimentError, InvalidStateError,
                     LatticeError, NumericError)
from .measures import SpectralMeasure, fm_norm, normalize, zero_measure, evaluate
from .symbols import (ModelParams, SteadyState, dispersion_disordered, phi1, phi2,
                      rank_one_weights, _unit_perp)

TWO_PI = 2.0 * math.pi

# raw pairwise workload guard for the convolution kernels (memory protection)
PAIR_BUDGET = 50_000_000


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class TruncationPolicy:
    """Galerkin truncation: lattice generators, radial cutoff, drop rule, cap."""

    basis: np.ndarray            # (n, n), rows are generator wavevectors
    k_max: float
    drop_tol: float = 0.0        # drop atoms whose FM mass falls below this
    atom_cap: int = 100_000
    origin_policy: str = "drop"

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise ConfigError("lattice basis must be a square list of generator wavevectors")
        if abs(np.linalg.det(basis)) < 1e-300:
            raise ConfigError("lattice basis is singular")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        if not self.k_max > 0:
            raise ConfigError("k_max must be > 0")
        if self.drop_tol < 0:
            raise ConfigError("drop_tol must be >= 0")
        if self.atom_cap < 1:
            raise ConfigError("atom_cap must be >= 1")
        if self.origin_policy not in ("drop", "keep"):
            raise ConfigError("origin_policy must be 'drop' or 'keep'")

    @property
    def n(self) -> int:
        return self.basis.shape[0]


@dataclass
class SimConfig:
    params: ModelParams
    state: SteadyState
    u0: SpectralMeasure
    truncation: TruncationPolicy
    t_end: float
    dt: float
    stepper: str = "etd2rk"
    forcing: Optional[Callable[[float], SpectralMeasure]] = None
    blowup_fm_threshold: Optional[float] = None
    diagnostics_stride: int = 1
    linearized: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")
        if self.stepper not in ("exp_euler", "etd2rk"):
            raise ConfigError("stepper must be 'exp_euler' or 'etd2rk'")
        if self.diagnostics_stride < 1:
            raise ConfigError("diagnostics_stride must be >= 1")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    fm_norm: float
    fm4_norm: float
    atom_count: int
    sup_sample: float
    max_mode_amplitude: float
    perturbation_norm: float
    max_imag_sampled: float


@dataclass(frozen=True)
class Outcome:
    kind: str                   # "completed" | "blowup" | "atom_cap_exceeded"
    t: Optional[float] = None


@dataclass
class Trajectory:
    times: list[float]
    snapshots: list[SpectralMeasure]
    diagnostics: list[DiagnosticsRecord]
    outcome: Outcome
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# lattice bookkeeping


class Lattice:
    """Integer-combination lattice of generator wavevectors."""

    def __init__(self, basis):
        self.basis = np.asarray(basis, dtype=float)
        self.n = self.basis.shape[0]
        self.inv_basis = np.linalg.inv(self.basis)

    def xi(self, keys: np.ndarray) -> np.ndarray:
        return keys.astype(float) @ self.basis

    def keys_of_wavevectors(self, wavevectors: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        if len(wavevectors) == 0:
            return np.zeros((0, self.n), dtype=np.int64)
        m = np.rint(wavevectors @ self.inv_basis).astype(np.int64)
        err = np.linalg.norm(self.xi(m) - wavevectors, axis=1)
        bad = np.nonzero(err > tol)[0]
        if bad.size:
            i = int(bad[0])
            raise LatticeError(
                f"atom off the wavevector lattice: xi={wavevectors[i].tolist()} (error {err[i]:.3e})")
        return m

    def from_measure(self, u: SpectralMeasure, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        keys = self.keys_of_wavevectors(u.wavevectors, tol)
        keys, coeffs = _merge_keys(keys, np.array(u.coeffs))
        return keys, coeffs

    def to_measure(self, keys: np.ndarray, coeffs: np.ndarray,
                   merge_tol: float = 1e-9) -> SpectralMeasure:
        return SpectralMeasure(self.xi(keys), coeffs, self.n, merge_tol)

    def ball_keys(self, k_max: float) -> np.ndarray:
        """All integer keys whose wavevector lies in |xi| <= k_max."""
        col_norms = np.linalg.norm(self.inv_basis, axis=0)
        ranges = [np.arange(-int(math.ceil(k_max * c)) - 1, int(math.ceil(k_max * c)) + 2)
                  for c in col_norms]
        grids = np.meshgrid(*ranges, indexing="ij")
        keys = np.column_stack([g.ravel() for g in grids]).astype(np.int64)
        xi = self.xi(keys)
        keep = np.einsum("an,an->a", xi, xi) <= k_max * k_max
        return keys[keep]


def _merge_keys(keys: np.ndarray, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coalesce repeated integer keys by coefficient addition (sorted keys)."""
    if len(keys) == 0:
        return keys, coeffs
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    acc = np.zeros((len(uniq), coeffs.shape[1]), dtype=complex)
    np.add.at(acc, inv.ravel(), coeffs)
    return uniq, acc


def _concat(parts: list[tuple[np.ndarray, np.ndarray]], n: int, ncomp: int):
    parts = [(k, c) for k, c in parts if len(k)]
    if not parts:
        return np.zeros((0, n), np.int64), np.zeros((0, ncomp), complex)
    keys = np.concatenate([k for k, _ in parts])
    coeffs = np.concatenate([c for _, c in parts])
    return _merge_keys(keys, coeffs)


# ---------------------------------------------------------------------------
# convolution kernels (pairwise, on integer keys)


def _check_cap(would_be: int, cap: int):
    if would_be > cap:
        raise AtomCapError(would_be, cap)


def _conv_scaled(keys1, keys2, c2, weights):
    """Atoms at key1+key2 with coefficient weights[a,b] * c2[b]."""
    a, b = len(keys1), len(keys2)
    _check_cap(a * b, PAIR_BUDGET)
    keys = (keys1[:, None, :] + keys2[None, :, :]).reshape(a * b, -1)
    coeffs = (weights[:, :, None] * c2[None, :, :]).reshape(a * b, -1)
    return _merge_keys(keys, coeffs)


def _conv_dot(keys1, c1, keys2, c2):
    """Scalar atoms at key1+key2 with coefficient c1[a] . c2[b] (no conjugation)."""
    a, b = len(keys1), len(keys2)
    _check_cap(a * b, PAIR_BUDGET)
    keys = (keys1[:, None, :] + keys2[None, :, :]).reshape(a * b, -1)
    coeffs = (c1 @ c2.T).reshape(a * b, 1)
    return _merge_keys(keys, coeffs)


def _advection(keys, coeffs, lat: Lattice):
    """(u.grad)u: coefficient i (c_a . xi_b) c_b at key_a + key_b."""
    xi2 = lat.xi(keys)
    weights = 1j * (coeffs @ xi2.T.astype(complex))
    return _conv_scaled(keys, keys, coeffs, weights)


def _cubic(keys, coeffs, lat: Lattice):
    """|u|^2 u via the scalar square u.u followed by one more convolution."""
    wkeys, wc = _conv_dot(keys, coeffs, keys, coeffs)
    weights = np.ascontiguousarray(
        np.broadcast_to(wc[:, 0][:, None], (len(wkeys), len(keys))))
    return _conv_scaled(wkeys, keys, coeffs, weights)


def _quadratic_state(keys, coeffs, lat: Lattice, state: SteadyState):
    """N(u) = -beta |u|^2 V - 2 beta (u.V) u for the ordered state."""
    beta, V = state.beta, state.V
    wkeys, wc = _conv_dot(keys, coeffs, keys, coeffs)
    part1 = (wkeys, -beta * wc[:, 0][:, None] * V[None, :].astype(complex))
    weights = -2.0 * beta * np.ascontiguousarray(
        np.broadcast_to((coeffs @ V.astype(complex))[:, None], (len(keys), len(keys))))
    part2 = _conv_scaled(keys, keys, coeffs, weights)
    return _concat([part1, part2], lat.n, lat.n)


def _project_keys(keys, coeffs, lat: Lattice, origin_policy: str):
    """Divergence-free projection per atom; origin handled by policy."""
    if len(keys) == 0:
        return keys, coeffs
    xi = lat.xi(keys)
    nsq = np.einsum("an,an->a", xi, xi)
    at_origin = np.all(keys == 0, axis=1)
    dots = np.einsum("an,an->a", xi.astype(complex), coeffs)
    corr = np.where(at_origin, 0.0, dots / np.where(at_origin, 1.0, nsq))
    out = coeffs - corr[:, None] * xi
    if origin_policy == "keep":
        out = np.where(at_origin[:, None], coeffs, out)
        return keys, out
    keep = ~at_origin
    return keys[keep], out[keep]


def _truncate_keys(keys, coeffs, lat: Lattice, trunc: TruncationPolicy):
    if len(keys) == 0:
        return keys, coeffs
    xi = lat.xi(keys)
    keep = np.einsum("an,an->a", xi, xi) <= trunc.k_max * trunc.k_max
    if trunc.origin_policy == "drop":
        keep &= ~np.all(keys == 0, axis=1)
    mass = (TWO_PI) ** (lat.n / 2.0) * np.linalg.norm(coeffs, axis=1)
    keep &= mass >= trunc.drop_tol if trunc.drop_tol > 0 else mass > 0.0
    keys, coeffs = keys[keep], coeffs[keep]
    _check_cap(len(keys), trunc.atom_cap)
    return keys, coeffs


def _nonlinear_rhs_keys(keys, coeffs, lat: Lattice, params: ModelParams,
                        state: SteadyState, trunc: TruncationPolicy):
    """G(u) = -(beta P|u|^2 u + lambda0 P (u.grad) u - P N(u)), truncated."""
    _check_cap(len(keys), trunc.atom_cap)
    parts = []
    if len(keys):
        ck, cc = _cubic(keys, coeffs, lat)
        parts.append((ck, params.beta * cc))
        if params.lambda0 != 0.0:
            ak, ac = _advection(keys, coeffs, lat)
            parts.append((ak, params.lambda0 * ac))
        if state.kind == "ordered":
            nk, nc = _quadratic_state(keys, coeffs, lat, state)
            parts.append((nk, -nc))
    bkeys, bcoeffs = _concat(parts, lat.n, lat.n)
    bkeys, bcoeffs = _project_keys(bkeys, bcoeffs, lat, trunc.origin_policy)
    bkeys, bcoeffs = _truncate_keys(bkeys, bcoeffs, lat, trunc)
    return bkeys, -bcoeffs


def nonlinearity(u: SpectralMeasure, params: ModelParams, state: SteadyState,
                 trunc: TruncationPolicy) -> SpectralMeasure:
    """Right-hand-side nonlinearity G(u) of u_t = -(A u) + f + G(u).

    G collects the projected advection, cubic damping and steady-state
    quadratic terms with the sign they carry on the right-hand side.
    The result is divergence-free and truncated per the policy.
    """
    lat = Lattice(trunc.basis)
    keys, coeffs = lat.from_measure(u)
    gk, gc = _nonlinear_rhs_keys(keys, coeffs, lat, params, state, trunc)
    return lat.to_measure(gk, gc, u.merge_tol)


# ---------------------------------------------------------------------------
# per-atom linear operators


class _LinearOps:
    """exp(-h sigma), phi1 and phi2 weights for one key set."""

    def __init__(self, keys, lat: Lattice, h: float, params: ModelParams, state: SteadyState):
        xi = lat.xi(keys)
        nsq = np.einsum("an,an->a", xi, xi)
        self.state = state
        if state.kind == "disordered":
            a = params.gamma2 * nsq**2 + params.gamma0 * nsq + params.alpha
            self.w_exp = np.exp(-h * a).astype(complex)
            self.w_phi1 = h * phi1(h * a)
            self.w_phi2 = h * phi2(h * a)
        else:
            V = state.V
            at_origin = nsq == 0.0
            proj = np.where(at_origin, 0.0, (xi @ V) / np.where(at_origin, 1.0, nsq))
            self.pv = V[None, :] - proj[:, None] * xi
            self.tau = self.pv @ V
            a = (params.gamma2 * nsq**2 + params.gamma0 * nsq
                 + 1j * params.lambda0 * (xi @ V))
            floor = 1e-14 * float(V @ V)
            self.V = V
            self.weights = {
                which: rank_one_weights(which, h, a, self.tau, 2.0 * params.beta, floor)
                for which in (0, 1, 2)
            }
            self.h = h

    def _apply(self, which: int, coeffs: np.ndarray) -> np.ndarray:
        if self.state.kind == "disordered":
            w = {0: self.w_exp, 1: self.w_phi1, 2: self.w_phi2}[which]
            return w[:, None] * coeffs
        w0, w1 = self.weights[which]
        scale = 1.0 if which == 0 else self.h
        out = w0[:, None] * coeffs + (w1 * (coeffs @ self.V.astype(complex)))[:, None] * self.pv
        return scale * out

    def expm(self, coeffs):
        return self._apply(0, coeffs)

    def phi1(self, coeffs):
        return self._apply(1, coeffs)

    def phi2(self, coeffs):
        return self._apply(2, coeffs)


# ---------------------------------------------------------------------------
# stepping


def _forcing_keys(cfg: SimConfig, lat: Lattice, t: float):
    if cfg.forcing is None:
        return np.zeros((0, lat.n), np.int64), np.zeros((0, lat.n), complex)
    f = cfg.forcing(t)
    return lat.from_measure(f)


def _rhs_keys(keys, coeffs, t, cfg: SimConfig, lat: Lattice):
    """F(u, t) = G(u) + f(t) (G omitted on linearized runs)."""
    parts = []
    if not cfg.linearized and len(keys):
        parts.append(_nonlinear_rhs_keys(keys, coeffs, lat, cfg.params, cfg.state, cfg.truncation))
    fk, fc = _forcing_keys(cfg, lat, t)
    if len(fk):
        parts.append((fk, fc))
    return _concat(parts, lat.n, lat.n)


def _step_keys(keys, coeffs, t, h, cfg: SimConfig, lat: Lattice):
    params, state, trunc = cfg.params, cfg.state, cfg.truncation
    f0k, f0c = _rhs_keys(keys, coeffs, t, cfg, lat)
    ops_u = _LinearOps(keys, lat, h, params, state)
    pieces = [(keys, ops_u.expm(coeffs))]
    if len(f0k):
        ops_f = _LinearOps(f0k, lat, h, params, state)
        pieces.append((f0k, ops_f.phi1(f0c)))
    skeys, scoeffs = _concat(pieces, lat.n, lat.n)
    skeys, scoeffs = _truncate_keys(skeys, scoeffs, lat, trunc)
    if cfg.stepper == "exp_euler":
        return skeys, scoeffs

    f1k, f1c = _rhs_keys(skeys, scoeffs, t + h, cfg, lat)
    dkeys, dcoeffs = _concat([(f1k, f1c), (f0k, -f0c)], lat.n, lat.n)
    pieces = [(skeys, scoeffs)]
    if len(dkeys):
        ops_d = _LinearOps(dkeys, lat, h, params, state)
        pieces.append((dkeys, ops_d.phi2(dcoeffs)))
    okeys, ocoeffs = _concat(pieces, lat.n, lat.n)
    return _truncate_keys(okeys, ocoeffs, lat, trunc)


def step(u: SpectralMeasure, t: float, h: float, cfg: SimConfig) -> SpectralMeasure:
    """One exponential-integrator step from time t."""
    if h <= 0:
        raise ConfigError("step size must be > 0")
    lat = Lattice(cfg.truncation.basis)
    keys, coeffs = lat.from_measure(u)
    okeys, ocoeffs = _step_keys(keys, coeffs, t, h, cfg, lat)
    return lat.to_measure(okeys, ocoeffs, u.merge_tol)


# ---------------------------------------------------------------------------
# diagnostics


def default_sample_points(n: int, per_axis: int = 8, box: float = TWO_PI) -> np.ndarray:
    axes = [np.linspace(0.0, box, per_axis, endpoint=False) for _ in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def diagnostics(u: SpectralMeasure, sample_points=None, t: float = 0.0) -> DiagnosticsRecord:
    """Norms, atom count and sampled sup-norm of a snapshot.

    The sampled sup-norm is consistent with the embedding into bounded
    continuous functions: it never exceeds (2*pi)**(-n/2) times the FM
    norm, whatever the sample set.
    """
    if sample_points is None:
        sample_points = default_sample_points(u.n)
    vals = evaluate(u, sample_points)
    sup = float(np.max(np.linalg.norm(vals, axis=1))) if vals.size else 0.0
    max_imag = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    fm0 = fm_norm(u, 0.0)
    return DiagnosticsRecord(
        t=t,
        fm_norm=fm0,
        fm4_norm=fm_norm(u, 4.0),
        atom_count=len(u),
        sup_sample=sup,
        max_mode_amplitude=u.max_coefficient(),
        perturbation_norm=fm0,
        max_imag_sampled=max_imag,
    )


# ---------------------------------------------------------------------------
# evolution


def _stiffness_audit(lat: Lattice, cfg: SimConfig) -> float:
    """dt times the largest linear rate over the truncated lattice ball."""
    keys = lat.ball_keys(cfg.truncation.k_max)
    if len(keys) == 0:
        return 0.0
    xi = lat.xi(keys)
    nsq = np.einsum("an,an->a", xi, xi)
    p, st = cfg.params, cfg.state
    a = np.abs(p.gamma2 * nsq**2 + p.gamma0 * nsq + 1j * p.lambda0 * (xi @ st.V))
    extra = abs(p.alpha) if st.kind == "disordered" else 2.0 * p.beta * float(st.V @ st.V)
    return float(cfg.dt * (np.max(a) + extra))


def evolve(cfg: SimConfig) -> Trajectory:
    """Step the transformed system from 0 to t_end.

    Stops early when the FM norm crosses the blow-up threshold (the
    crossing time is the numerical proxy for the maximal existence time)
    or when the atom cap is exceeded.  Diagnostics and snapshots are
    recorded every `diagnostics_stride` steps.
    """
    lat = Lattice(cfg.truncation.basis)
    keys, coeffs = lat.from_measure(cfg.u0)
    if len(keys) and not cfg.u0.is_solenoidal(1e-8):
        raise ConfigError("initial data is not divergence-free")
    if cfg.truncation.origin_policy == "drop" and not cfg.u0.is_zero_free():
        raise ConfigError("initial data has an atom at the origin but origin_policy is 'drop'")
    keys, coeffs = _truncate_keys(keys, coeffs, lat, cfg.truncation)

    initial_norm = fm_norm(cfg.u0, 0.0)
    threshold = cfg.blowup_fm_threshold
    if threshold is None:
        threshold = max(1e6, 1e6 * initial_norm)
    initially_real = cfg.u0.is_real_field()

    sample_points = default_sample_points(lat.n)
    n_steps = int(round(cfg.t_end / cfg.dt)) if cfg.t_end > 0 else 0

    times: list[float] = [0.0]
    snapshots: list[SpectralMeasure] = [lat.to_measure(keys, coeffs, cfg.u0.merge_tol)]
    diags: list[DiagnosticsRecord] = [diagnostics(snapshots[0], sample_points, 0.0)]
    outcome = Outcome("completed", cfg.t_end)
    meta = {"dt_times_max_rate": _stiffness_audit(lat, cfg), "n_steps": n_steps,
            "blowup_fm_threshold": threshold}

    def record(t, k, c):
        snap = lat.to_measure(k, c, cfg.u0.merge_tol)
        times.append(t)
        snapshots.append(snap)
        diags.append(diagnostics(snap, sample_points, t))
        if initially_real and not snap.is_real_field(1e-8):
            raise NumericError(f"Hermitian pairing lost at t={t}")

    for i in range(n_steps):
        t = i * cfg.dt
        try:
            keys, coeffs = _step_keys(keys, coeffs, t, cfg.dt, cfg, lat)
        except AtomCapError:
            outcome = Outcome("atom_cap_exceeded", t)
            break
        t_next = (i + 1) * cfg.dt
        norm_now = (TWO_PI) ** (lat.n / 2.0) * float(np.sum(np.linalg.norm(coeffs, axis=1))) \
            if len(coeffs) else 0.0
        on_stride = (i + 1) % cfg.diagnostics_stride == 0 or (i + 1) == n_steps
        if norm_now >= threshold:
            record(t_next, keys, coeffs)
            outcome = Outcome("blowup", t_next)
            break
        if on_stride:
            record(t_next, keys, coeffs)

    return Trajectory(times, snapshots, diags, outcome, meta)


# ---------------------------------------------------------------------------
# steady states and seeds


def steady_state_transform(kind: str, params: ModelParams, V_direction=None,
                           p0: float = 0.0) -> SteadyState:
    """Steady-state data for the transformed system.

    "disordered": V = 0, M = alpha I, no quadratic term.  "ordered"
    (alpha < 0): V = sqrt(-alpha/beta) * V_direction, M = 2 beta V V^T,
    quadratic term N(u) = -beta|u|^2 V - 2 beta (u.V) u.  The original
    field is recovered as v = u + V and the transformed pressure is
    q = p - lambda1 |v|^2.
    """
    if kind == "disordered":
        return SteadyState.disordered(params, p0)
    if kind == "ordered":
        if V_direction is None:
            raise InvalidStateError("ordered state needs a swimming direction")
        return SteadyState.ordered(params, V_direction, p0)
    raise ConfigError(f"unknown steady-state kind {kind!r}")


def seed_direction(k, V=None) -> np.ndarray:
    """Unit coefficient direction perpendicular to k (and to V when given)."""
    k = np.asarray(k, dtype=float)
    n = len(k)
    if V is None or not np.linalg.norm(np.asarray(V)) > 0:
        return _unit_perp(k)
    V = np.asarray(V, dtype=float)
    if n == 2:
        c = _unit_perp(V)
        if abs(float(c @ k)) > 1e-10 * np.linalg.norm(k):
            raise ExperimentError(
                "in two dimensions a seed perpendicular to both k and V needs k parallel to V")
        return c
    w = np.cross(k, V)
    if np.linalg.norm(w) > 1e-12 * np.linalg.norm(k) * np.linalg.norm(V):
        return w / np.linalg.norm(w)
    return _unit_perp(V)


def pair_seed(k, amplitude: float, direction=None, V=None) -> SpectralMeasure:
    """Hermitian pair amplitude * (direction e^{ik.x} + c.c. atom)."""
    from .measures import hermitian_pair
    k = np.asarray(k, dtype=float)
    c = np.asarray(direction, dtype=float) if direction is not None else seed_direction(k, V)
    return hermitian_pair(k, amplitude * c.astype(complex))


def random_real_solenoidal(rng: np.random.Generator, trunc: TruncationPolicy,
                           n_pairs: int, target_fm_norm: float,
                           key_max: int = 2) -> SpectralMeasure:
    """Random real divergence-free field on the truncation lattice."""
    lat = Lattice(trunc.basis)
    n = lat.n
    cands = []
    ball = lat.ball_keys(trunc.k_max)
    for m in ball:
        if np.all(np.abs(m) <= key_max) and np.any(m != 0):
            t = tuple(int(v) for v in m)
            if t > tuple(-v for v in t):  # one of each Hermitian pair
                cands.append(t)
    if not cands:
        raise ConfigError("no lattice modes available for a random seed")
    idx = rng.choice(len(cands), size=min(n_pairs, len(cands)), replace=False)
    atoms = []
    for j in np.sort(idx):
        m = np.array(cands[int(j)], dtype=np.int64)
        xi = lat.xi(m[None, :])[0]
        c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        c -= (np.dot(xi.astype(complex), c) / float(xi @ xi)) * xi
        if np.linalg.norm(c) < 1e-12:
            continue
        atoms.append((xi, c))
        atoms.append((-xi, np.conj(c)))
    u = normalize(atoms)
    norm = fm_norm(u, 0.0)
    if norm == 0:
        raise ConfigError("random seed degenerated to zero")
    from .measures import scale as _scale
    return _scale(u, target_fm_norm / norm)


# ---------------------------------------------------------------------------
# growth-rate experiment


@dataclass(frozen=True)
class GrowthResult:
    measured_rate: float
    predicted_rate: float
    rel_error: float
    n_fit_points: int
    window: tuple[float, float]


def growth_rate_experiment(state: SteadyState, params: ModelParams, k_seed,
                           epsilon: float, linearized: bool, horizon: float,
                           dt: Optional[float] = None,
                           trunc: Optional[TruncationPolicy] = None,
                           stepper: str = "etd2rk") -> GrowthResult:
    """Measure the exponential rate of a seeded single-mode perturbation.

    Seeds a Hermitian pair of amplitude epsilon at +-k_seed with the
    coefficient perpendicular to k_seed (and to V for ordered-state
    runs), evolves, and fits d/dt log of the perturbation FM norm over
    the window [0.1*horizon, first time the mode amplitude exceeds
    10*epsilon].  The prediction is the rest-state dispersion rate at
    |k_seed|, or -(gamma2|k|^4 + gamma0|k|^2) for the ordered witness.
    """
    k = np.asarray(k_seed, dtype=float)
    if not np.linalg.norm(k) > 0:
        raise ExperimentError("k_seed must be nonzero")
    if not epsilon > 0:
        raise ExperimentError("epsilon must be > 0")
    n = params.n
    if trunc is None:
        kn = np.linalg.norm(k)
        if n == 2:
            basis = np.vstack([k, kn * _unit_perp(k)])
        else:
            p1 = _unit_perp(k)
            p2 = np.cross(k / kn, p1)
            basis = np.vstack([k, kn * p1, kn * p2])
        trunc = TruncationPolicy(basis=basis, k_max=3.5 * kn, drop_tol=0.0,
                                 atom_cap=20_000, origin_policy="drop")
    if dt is None:
        dt = horizon / 400.0
    V = state.V if state.kind == "ordered" else None
    u0 = pair_seed(k, epsilon, V=V)
    cfg = SimConfig(params=params, state=state, u0=u0, truncation=trunc,
                    t_end=horizon, dt=dt, stepper=stepper, linearized=linearized)
    traj = evolve(cfg)

    ts = np.array([d.t for d in traj.diagnostics])
    norms = np.array([d.fm_norm for d in traj.diagnostics])
    amps = np.array([d.max_mode_amplitude for d in traj.diagnostics])
    crossing = np.nonzero(amps > 10.0 * epsilon)[0]
    hi = int(crossing[0]) if crossing.size else len(ts)
    window = (ts >= 0.1 * horizon) & (np.arange(len(ts)) < hi) & (norms > 0)
    if int(np.count_nonzero(window)) < 2:
        raise ExperimentError("growth fit window is empty (immediate saturation); "
                              "reduce the seed amplitude epsilon")
    tw, nw = ts[window], np.log(norms[window])
    slope = float(np.polyfit(tw, nw, 1)[0])

    if state.kind == "disordered":
        predicted = float(dispersion_disordered(float(np.linalg.norm(k)), params))
    else:
        nsq = float(k @ k)
        predicted = -(params.gamma2 * nsq**2 + params.gamma0 * nsq)
    rel = abs(slope - predicted) / max(abs(predicted), 1e-300)
    return GrowthResult(slope, predicted, rel, int(np.count_nonzero(window)),
                        (float(tw[0]), float(tw[-1])))


# ---------------------------------------------------------------------------
# pressure recovery


@dataclass
class PressureRecovery:
    grad_q: SpectralMeasure          # gradient field, coefficients parallel to xi
    q: SpectralMeasure               # scalar potential, defined up to a constant
    origin_atoms: list               # bracket atoms at xi = 0 (reported, never dropped silently)


def _pairwise_measure(u: SpectralMeasure, v: SpectralMeasure, weights) -> SpectralMeasure:
    pairs = len(u) * len(v)
    if pairs == 0:
        return zero_measure(u.n, v.ncomp, max(u.merge_tol, v.merge_tol))
    xi = (u.wavevectors[:, None, :] + v.wavevectors[None, :, :]).reshape(pairs, u.n)
    coeffs = (weights[:, :, None] * v.coeffs[None, :, :]).reshape(pairs, -1)
    return normalize((xi, coeffs), merge_tol=max(u.merge_tol, v.merge_tol))


def nonlinear_bracket(u: SpectralMeasure, params: ModelParams,
                      state: SteadyState) -> SpectralMeasure:
    """lambda0 (u.grad)u + (M + beta|u|^2) u - N(u), unprojected."""
    from .measures import combine, multiply, restrict, scale
    parts = []
    if params.lambda0 != 0.0 and len(u):
        w = 1j * (u.coeffs @ u.wavevectors.T.astype(complex))
        parts.append(scale(_pairwise_measure(u, u, w), params.lambda0))
    parts.append(restrict(u, lambda xi: state.M))
    uu = multiply(u, u, "dot")
    parts.append(scale(multiply(uu, u), params.beta))
    if state.kind == "ordered" and len(u):
        V = state.V
        n1 = restrict(uu, lambda xi: (-state.beta * V)[:, None])
        wv = np.broadcast_to((u.coeffs @ V.astype(complex))[:, None], (len(u), len(u)))
        n2 = scale(_pairwise_measure(u, u, np.array(wv)), -2.0 * state.beta)
        parts.append(scale(combine(n1, n2), -1.0))
    return combine(*parts)


def recover_pressure(u: SpectralMeasure, params: ModelParams,
                     state: SteadyState) -> PressureRecovery:
    """Pressure gradient of the transformed system:

    grad q = -(I - P)[lambda0 (u.grad)u + (M + beta|u|^2)u - N(u)],

    plus the scalar potential q_j = -i (xi_j . c_j)/|xi_j|^2 per atom.
    Bracket atoms at the origin cannot be attributed to a gradient and
    are reported (a constant force is absorbed into the background
    pressure).
    """
    bracket = nonlinear_bracket(u, params, state)
    if len(bracket) == 0:
        return PressureRecovery(zero_measure(u.n, u.n), zero_measure(u.n, 1), [])
    nsq = np.einsum("an,an->a", bracket.wavevectors, bracket.wavevectors)
    at_origin = nsq <= max(bracket.merge_tol, 0.0) ** 2
    origin_atoms = [a for a, o in zip(bracket.atoms(), at_origin) if o]
    xi = bracket.wavevectors[~at_origin]
    c = bracket.coeffs[~at_origin]
    nz = nsq[~at_origin]
    dots = np.einsum("an,an->a", xi.astype(complex), c)
    grad_c = -(dots / nz)[:, None] * xi
    nonzero = np.linalg.norm(grad_c, axis=1) > 0.0  # solenoidal bracket atoms drop out
    xi, grad_c, nz = xi[nonzero], grad_c[nonzero], nz[nonzero]
    grad_q = SpectralMeasure(xi, grad_c, u.n, bracket.merge_tol)
    q_c = (-1j * np.einsum("an,an->a", xi.astype(complex), grad_c) / nz)[:, None]
    q = SpectralMeasure(xi, q_c, u.n, bracket.merge_tol)
    return PressureRecovery(grad_q, q, origin_atoms)


def pressure_in_original_variables(rec: PressureRecovery, u: SpectralMeasure,
                                   params: ModelParams, state: SteadyState) -> SpectralMeasure:
    """p - p0 = q + lambda1 |u + V|^2 as a scalar atom set (constant part at xi=0)."""
    from .measures import combine, multiply, normalize as _normalize, scale
    v_atoms = [(u.wavevectors[i], u.coeffs[i]) for i in range(len(u))]
    v_atoms.append((np.zeros(u.n), state.V.astype(complex)))
    v = _normalize(v_atoms, merge_tol=u.merge_tol)
    vv = multiply(v, v, "dot")
    return combine(rec.q, scale(vv, params.lambda1))


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass
class ManufacturedSolution:
    """Finite atom set with smooth time-dependent coefficients."""

    wavevectors: np.ndarray                        # (A, n)
    coeff_fn: Callable[[float], np.ndarray]        # -> (A, n) complex
    dcoeff_fn: Callable[[float], np.ndarray]       # analytic time derivative

    def measure_at(self, t: float) -> SpectralMeasure:
        return normalize((np.asarray(self.wavevectors, float), self.coeff_fn(t)))


def _apply_linear_symbol(keys, coeffs, lat: Lattice, params: ModelParams,
                         state: SteadyState) -> np.ndarray:
    """A u per atom, valid on divergence-free coefficients."""
    xi = lat.xi(keys)
    nsq = np.einsum("an,an->a", xi, xi)
    if state.kind == "disordered":
        a = params.gamma2 * nsq**2 + params.gamma0 * nsq + params.alpha
        return a[:, None] * coeffs
    V = state.V
    at_origin = nsq == 0.0
    proj = np.where(at_origin, 0.0, (xi @ V) / np.where(at_origin, 1.0, nsq))
    pv = V[None, :] - proj[:, None] * xi
    a = params.gamma2 * nsq**2 + params.gamma0 * nsq + 1j * params.lambda0 * (xi @ V)
    return a[:, None] * coeffs + (2.0 * params.beta * (coeffs @ V.astype(complex)))[:, None] * pv


def manufactured_forcing(sol: ManufacturedSolution, params: ModelParams,
                         state: SteadyState, trunc: TruncationPolicy) -> Callable[[float], SpectralMeasure]:
    """Forcing that makes `sol` an exact trajectory of the truncated system:

    f(t) = d/dt u* + A u* - G(u*), assembled exactly in atoms with the
    same truncation the solver uses.
    """
    lat = Lattice(trunc.basis)
    u0 = sol.measure_at(0.0)
    keys = lat.keys_of_wavevectors(np.asarray(sol.wavevectors, float))
    if not u0.is_solenoidal(1e-10):
        raise ConfigError("manufactured solution must be divergence-free")
    if not u0.is_zero_free():
        raise ConfigError("manufactured solution must have no atom at the origin")
    if not u0.is_real_field(1e-10):
        raise ConfigError("manufactured solution must be a real field")

    def forcing(t: float) -> SpectralMeasure:
        C = np.asarray(sol.coeff_fn(t), dtype=complex)
        dC = np.asarray(sol.dcoeff_fn(t), dtype=complex)
        lin = _apply_linear_symbol(keys, C, lat, params, state)
        gk, gc = _nonlinear_rhs_keys(keys, C, lat, params, state, trunc)
        fk, fc = _concat([(keys, dC + lin), (gk, -gc)], lat.n, lat.n)
        return lat.to_measure(fk, fc)

    return forcing
