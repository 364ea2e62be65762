"""Built-in verification suites for the command-line `verify` command.

Each suite returns a list of CheckResult records; the CLI prints one
pass/fail line per check with its margin.  The random families are
driven by a single seed for reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import dynamics, gridoracle, measures, symbols

TWO_PI = 2.0 * math.pi


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


# ---------------------------------------------------------------------------
# exact coefficient family: Gaussian integers with integer modulus
#
# Coefficients drawn from this pool (optionally scaled by powers of two)
# keep every step of the product / norm arithmetic exactly representable
# in binary floating point: moduli are integers, products of moduli are
# integers, and coefficient sums stay Gaussian integers.  That lets the
# algebra inequality be checked with no tolerance at all.

_PYTHAGOREAN = [(0, 1), (0, 2), (0, 3), (0, 5), (3, 4), (5, 12), (8, 15), (7, 24), (20, 21)]


def _exact_pool() -> list[complex]:
    pool = []
    for a, b in _PYTHAGOREAN:
        for re, im in ((a, b), (b, a)):
            for sr in (1, -1):
                for si in (1, -1):
                    pool.append(complex(sr * re, si * im))
    return sorted(set(pool), key=lambda z: (z.real, z.imag))


EXACT_COEFFICIENTS = _exact_pool()


def random_exact_scalar_measure(rng: np.random.Generator, n: int, n_atoms: int,
                                integer_lattice: bool) -> measures.SpectralMeasure:
    """Scalar measure whose norm arithmetic is exact in doubles.

    Wavevectors within one measure are kept distinct: merging two pool
    coefficients would generally leave the integer-modulus family.
    """
    atoms = []
    seen = set()
    picks = rng.integers(len(EXACT_COEFFICIENTS), size=4 * n_atoms)
    scales = rng.integers(-2, 3, size=4 * n_atoms)
    if integer_lattice:
        draws = rng.integers(-3, 4, size=(4 * n_atoms, n)).astype(float)
    else:
        draws = rng.standard_normal((4 * n_atoms, n))
    for i in range(len(draws)):
        if len(atoms) >= n_atoms:
            break
        xi = draws[i]
        if integer_lattice and not np.any(xi):
            xi[0] = 1.0
        key = tuple(xi.tolist())
        if key in seen:
            continue
        seen.add(key)
        c = EXACT_COEFFICIENTS[int(picks[i])] * 2.0 ** int(scales[i])
        atoms.append((xi, np.array([c])))
    if len(atoms) < n_atoms:  # pathological collision streak; top up one by one
        while len(atoms) < n_atoms:
            xi = rng.standard_normal(n)
            atoms.append((xi, np.array([EXACT_COEFFICIENTS[0]])))
    return measures.normalize(atoms)


def exact_mass(u: measures.SpectralMeasure) -> float:
    """Total variation sum |c_j| (no (2*pi)**(n/2) factor)."""
    if len(u) == 0:
        return 0.0
    return math.fsum(np.linalg.norm(u.coeffs, axis=1).tolist())


# ---------------------------------------------------------------------------
# suites


def check_algebra(seed: int = 0, cases: int = 2000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    violations = 0
    equal_expected = 0
    equal_seen = 0
    min_margin = math.inf
    for trial in range(cases):
        n = 2 if trial % 2 == 0 else 3
        lattice = trial % 3 == 0
        u = random_exact_scalar_measure(rng, n, int(rng.integers(1, 6)), lattice)
        v = random_exact_scalar_measure(rng, n, int(rng.integers(1, 6)), lattice)
        w = measures.multiply(u, v)
        lhs, rhs = exact_mass(w), exact_mass(u) * exact_mass(v)
        if lhs > rhs:
            violations += 1
        else:
            min_margin = min(min_margin, rhs - lhs)
        if len(w) == len(u) * len(v):
            equal_expected += 1
            if lhs == rhs:
                equal_seen += 1
    ok = violations == 0 and equal_seen == equal_expected
    results.append(CheckResult(
        "algebra.product_inequality", ok,
        f"{cases} products, 0 tolerance, violations={violations}, "
        f"equality {equal_seen}/{equal_expected}, min margin {min_margin:.3e}"))

    # normalize idempotence
    worst = 0.0
    for _ in range(200):
        atoms = [(rng.standard_normal(2), rng.standard_normal(2) + 1j * rng.standard_normal(2))
                 for _ in range(int(rng.integers(1, 10)))]
        m1 = measures.normalize(atoms)
        m2 = measures.normalize(list(zip(m1.wavevectors, m1.coeffs)), merge_tol=m1.merge_tol)
        if len(m1) != len(m2):
            worst = math.inf
            break
        worst = max(worst, float(np.max(np.abs(m1.coeffs - m2.coeffs), initial=0.0)))
    results.append(CheckResult("algebra.normalize_idempotent", worst == 0.0,
                               f"max coefficient change on re-normalize {worst:.3e}"))

    # multiplier composition: (u|psi)|phi == u|(phi psi), up to one rounding
    worst = 0.0
    for _ in range(100):
        u = random_exact_scalar_measure(rng, 2, 4, False)
        a, b = rng.standard_normal(2)
        psi = lambda xi, a=a: a * float(xi @ xi)
        phi = lambda xi, b=b: b + float(xi[0])
        lhsm = measures.restrict(measures.restrict(u, psi), phi)
        rhsm = measures.restrict(u, lambda xi: phi(xi) * psi(xi))
        ref = max(float(np.max(np.abs(rhsm.coeffs), initial=0.0)), 1e-300)
        worst = max(worst, float(np.max(np.abs(lhsm.coeffs - rhsm.coeffs), initial=0.0)) / ref)
    results.append(CheckResult("algebra.restrict_composition", worst < 1e-12,
                               f"max relative atom difference {worst:.3e} (tol 1e-12)"))
    return results


def check_symbols(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    # dispersion against an independent Horner evaluation; the relative
    # scale is the polynomial's term magnitude (the value itself crosses
    # zero, where no two evaluation orders can agree to relative eps)
    worst = 0.0
    for _ in range(500):
        g2 = float(rng.uniform(0.25, 4.0))
        g0 = float(rng.uniform(-3.0, 3.0))
        al = float(rng.uniform(-2.0, 3.0))
        k = float(rng.uniform(0.0, 2.0))
        p = symbols.ModelParams(1.0, 0.0, g0, g2, al, 1.0, 2)
        mine = symbols.dispersion_disordered(k, p)
        horner = -(al + k * k * (g0 + k * k * g2))
        scale = abs(al) + abs(g0) * k * k + g2 * k**4 + abs(horner)
        worst = max(worst, abs(mine - horner) / max(scale, 1e-300))
    results.append(CheckResult("symbols.dispersion_horner", worst < 1e-14,
                               f"max rel deviation {worst:.3e} (tol 1e-14)"))

    # projector properties
    worst = 0.0
    for _ in range(200):
        n = 2 if rng.integers(2) == 0 else 3
        xi = rng.standard_normal(n)
        P = symbols.helmholtz_symbol(xi)
        worst = max(worst,
                    float(np.max(np.abs(P @ P - P))),
                    float(np.max(np.abs(P - P.T))),
                    float(np.max(np.abs(P @ xi))),
                    abs(np.trace(P) - (n - 1)))
    results.append(CheckResult("symbols.helmholtz_projector", worst < 1e-13,
                               f"max deviation {worst:.3e} (tol 1e-13)"))

    # closed-form propagator against a dense matrix exponential
    worst = 0.0
    for _ in range(100):
        n = 2 if rng.integers(2) == 0 else 3
        al = float(rng.uniform(-2.0, -0.1))
        p = symbols.ModelParams(float(rng.uniform(-1, 1)), 0.0, float(rng.uniform(-2, 2)),
                                float(rng.uniform(0.5, 2.0)), al, float(rng.uniform(0.5, 2.0)), n)
        d = rng.standard_normal(n)
        st = symbols.SteadyState.ordered(p, d)
        xi = rng.standard_normal(n)
        h = float(rng.uniform(0.05, 1.0))
        mine = symbols.propagator(xi, h, p, st)
        dense = scipy.linalg.expm(-h * symbols.linearized_symbol(xi, p, st))
        worst = max(worst, float(np.max(np.abs(mine - dense))))
    results.append(CheckResult("symbols.propagator_expm", worst < 1e-12,
                               f"max entry deviation {worst:.3e} (tol 1e-12)"))

    # semigroup law
    worst = 0.0
    for _ in range(100):
        p = symbols.ModelParams(1.0, 0.0, float(rng.uniform(-2, 2)),
                                float(rng.uniform(0.5, 2.0)), -1.0, 1.0, 2)
        st = symbols.SteadyState.ordered(p, rng.standard_normal(2))
        xi = rng.standard_normal(2)
        h1, h2 = float(rng.uniform(0.05, 0.5)), float(rng.uniform(0.05, 0.5))
        lhs = symbols.propagator(xi, h1 + h2, p, st)
        rhs = symbols.propagator(xi, h1, p, st) @ symbols.propagator(xi, h2, p, st)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    results.append(CheckResult("symbols.propagator_semigroup", worst < 1e-12,
                               f"max entry deviation {worst:.3e} (tol 1e-12)"))

    # classification against the closed-form conditions
    mismatches = 0
    for g0 in np.linspace(-2.0, 2.0, 41):
        for al in np.linspace(-1.0, 2.0, 41):
            p = symbols.ModelParams(1.0, 0.0, float(g0), 1.0, float(al), 1.0, 2)
            got = symbols.classify_disordered(p).stability
            if g0 < 0:
                want = ("exp_stable" if 4 * al > g0 * g0 else
                        "asym_stable" if 4 * al == g0 * g0 else "exp_unstable")
            else:
                want = ("exp_stable" if al > 0 else
                        "asym_stable" if al == 0 else "exp_unstable")
            mismatches += got != want
    for g0, al in ((-2.0, 1.0), (-1.0, 0.25), (1.0, 0.0), (0.0, 0.0)):
        p = symbols.ModelParams(1.0, 0.0, g0, 1.0, al, 1.0, 2)
        mismatches += symbols.classify_disordered(p).stability != "asym_stable"
    results.append(CheckResult("symbols.classification_trichotomy", mismatches == 0,
                               f"{mismatches} mismatches on 41x41 grid + boundary points"))
    return results


def check_maxreg() -> list[CheckResult]:
    worst = 0.0
    for p in (1.0, 2.0, 4.0):
        for g2 in (0.5, 1.0, 2.0):
            for k in (0.5, 1.0, 2.0):
                numeric, bound = symbols.maxreg_constant_check(g2, k, p)
                worst = max(worst, abs(numeric - bound) / bound)
    res = [CheckResult("maxreg.constant_quadrature", worst < 1e-8,
                       f"max rel deviation from closed form {worst:.3e} (tol 1e-8)")]
    numeric, bound = symbols.maxreg_constant_check(2.0, 1.0, 1.0)
    res.append(CheckResult("maxreg.p1_equality", abs(numeric - 0.5) < 1e-10 and abs(bound - 0.5) < 1e-12,
                           f"numeric {numeric!r}, bound {bound!r}, expected 0.5"))
    return res


def _dual_path_run(params: symbols.ModelParams, seed: int, steps: int, dt: float,
                   grid_n: int = 32, box: float = 2.0 * TWO_PI):
    """Run atom and grid paths from the same data; return relative sup gaps."""
    state = symbols.SteadyState.disordered(params)
    step_k = TWO_PI / box
    basis = np.eye(2) * step_k
    k_max = 4.3 * step_k  # sits between lattice shells
    trunc = dynamics.TruncationPolicy(basis=basis, k_max=k_max, drop_tol=0.0,
                                      atom_cap=100_000, origin_policy="drop")
    # amplitude high enough that the cubic coupling contributes well above
    # the comparison tolerance (a broken nonlinearity must not slip through)
    rng = np.random.default_rng(seed)
    u0 = dynamics.random_real_solenoidal(rng, trunc, n_pairs=4,
                                         target_fm_norm=1.0, key_max=2)
    spec = gridoracle.GridSpec((grid_n, grid_n), (box, box))
    if k_max > spec.cubic_exact_radius():
        raise ValueError("cutoff too large for alias-free cubic products")
    field = gridoracle.lift(u0, spec, radius=k_max)

    cfg = dynamics.SimConfig(params=params, state=state, u0=u0, truncation=trunc,
                             t_end=steps * dt, dt=dt, stepper="etd2rk")
    u = u0
    gap_first = None

    def gap(um, fld):
        atom_phys = gridoracle.lift(um, spec, radius=k_max).physical()
        grid_phys = fld.physical()
        ref = max(float(np.max(np.abs(grid_phys))), 1e-300)
        return float(np.max(np.abs(atom_phys - grid_phys))) / ref

    for i in range(steps):
        u = dynamics.step(u, i * dt, dt, cfg)
        field = gridoracle.grid_step(field, i * dt, dt, params, state,
                                     stepper="etd2rk", cutoff=k_max)
        if i == 0:
            gap_first = gap(u, field)
    return gap_first, gap(u, field)


def check_oracle(seed: int = 0) -> list[CheckResult]:
    results = []
    stable = symbols.ModelParams(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2)
    unstable = symbols.ModelParams(1.0, 0.0, -1.0, 1.0, 3.0 / 16.0, 1.0, 2)
    for label, params in (("stable", stable), ("unstable", unstable)):
        first, final = _dual_path_run(params, seed, steps=40, dt=0.05)
        results.append(CheckResult(
            f"oracle.dual_path_{label}", first < 1e-10 and final < 1e-6,
            f"rel sup gap: 1 step {first:.3e} (tol 1e-10), 40 steps {final:.3e} (tol 1e-6)"))
    return results


SUITES = {
    "algebra": lambda seed: check_algebra(seed),
    "symbols": lambda seed: check_symbols(seed),
    "maxreg": lambda seed: check_maxreg(),
    "oracle": lambda seed: check_oracle(seed),
}


def run_suites(names, seed: int = 0) -> list[CheckResult]:
    out = []
    for name in names:
        out.extend(SUITES[name](seed))
    return out
