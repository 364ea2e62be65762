"""Atom-set algebra: construction, norms, products, multipliers, sampling."""

import math

import numpy as np
import pytest

from activefm import measures
from activefm.errors import AtomCapError, DimensionMismatchError, SingularSymbolError
from activefm.measures import (combine, evaluate, fm_norm, hermitian_pair, multiply,
                               normalize, restrict, scale, zero_measure)

from conftest import random_measure, random_real_measure

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# normalize


def test_normalize_coalesces_by_addition():
    m = normalize([(np.array([1.0, 0.0]), np.array([0, 1], complex)),
                   (np.array([1.0, 0.0]), np.array([0, 2], complex))])
    assert len(m) == 1
    assert np.allclose(m.coeffs[0], [0, 3])


def test_normalize_drop_rule():
    m = normalize([(np.array([1.0, 0.0]), np.array([0, 1e-18], complex))], drop_tol=1e-14)
    assert len(m) == 0


def test_normalize_keeps_distinct_atoms():
    m = normalize([(np.array([1.0, 0.0]), np.array([0, 1], complex)),
                   (np.array([0.0, 1.0]), np.array([1, 0], complex))])
    assert len(m) == 2


def test_normalize_merges_within_tolerance():
    m = normalize([(np.array([1.0, 0.0]), np.array([1, 0], complex)),
                   (np.array([1.0 + 2e-10, 0.0]), np.array([1, 0], complex))],
                  merge_tol=1e-9)
    assert len(m) == 1
    assert np.allclose(m.coeffs[0], [2, 0])


def test_normalize_idempotent(rng):
    for _ in range(30):
        m1 = random_measure(rng, n_atoms=8)
        m2 = normalize(list(zip(m1.wavevectors, m1.coeffs)), merge_tol=m1.merge_tol)
        assert len(m1) == len(m2)
        assert np.array_equal(m1.wavevectors, m2.wavevectors)
        assert np.array_equal(m1.coeffs, m2.coeffs)


def test_normalize_rejects_mixed_dimensions():
    with pytest.raises(DimensionMismatchError):
        normalize([(np.array([1.0, 0.0]), np.array([1, 0], complex)),
                   (np.array([1.0, 0.0, 0.0]), np.array([1, 0, 0], complex))])


def test_normalize_rejects_nonfinite():
    with pytest.raises(ValueError):
        normalize([(np.array([1.0, 0.0]), np.array([np.nan, 0], complex))])


# ---------------------------------------------------------------------------
# fm_norm


def test_fm_norm_single_plane_wave():
    # unit-coefficient plane wave has norm (2*pi)**(n/2)
    for n in (2, 3):
        k = np.zeros(n)
        k[0] = 1.7
        c = np.zeros(n, complex)
        c[-1] = 1.0
        m = normalize([(k, c)])
        assert fm_norm(m) == pytest.approx((2 * math.pi) ** (n / 2), rel=1e-15)


def test_fm_norm_empty():
    assert fm_norm(zero_measure(2), 0.0) == 0.0
    assert fm_norm(zero_measure(3), 4.0) == 0.0


def test_fm_norm_weighted_sum():
    # independent direct-summation oracle: 2*pi*(1^4*2 + 2^4*1) = 36*pi
    m = normalize([(np.array([1.0, 0.0]), np.array([0, 2], complex)),
                   (np.array([0.0, 2.0]), np.array([1, 0], complex))])
    expected = TWO_PI * sum(np.linalg.norm(xi) ** 4 * np.linalg.norm(c)
                            for xi, c in zip(m.wavevectors, m.coeffs))
    got = fm_norm(m, 4.0)
    assert got == pytest.approx(expected, rel=1e-15)
    assert got == pytest.approx(36.0 * math.pi, rel=1e-14)
    assert got == pytest.approx(113.097, rel=1e-5)


def test_fm_norm_reorder_and_split_invariance(rng):
    m = random_measure(rng, n_atoms=6)
    base = fm_norm(m)
    perm = rng.permutation(len(m))
    m2 = normalize((m.wavevectors[perm], m.coeffs[perm]), merge_tol=m.merge_tol)
    assert fm_norm(m2) == base
    # split the first atom in two co-located halves
    atoms = list(zip(m.wavevectors, m.coeffs))
    xi0, c0 = atoms[0]
    split = [(xi0, 0.25 * c0), (xi0, 0.75 * c0)] + atoms[1:]
    assert fm_norm(normalize(split)) == pytest.approx(base, rel=1e-15)


def test_fm_norm_origin_mass_has_zero_weight():
    m = normalize([(np.zeros(2), np.array([3, 4], complex))])
    assert fm_norm(m, 0.0) == pytest.approx(TWO_PI * 5.0, rel=1e-15)
    assert fm_norm(m, 2.0) == 0.0


# ---------------------------------------------------------------------------
# multiply


def test_multiply_exponent_addition():
    u = normalize([(np.array([1.0, 2.0]), np.array([2.0 + 1j], complex))])
    v = normalize([(np.array([-0.5, 3.0]), np.array([0.5j], complex))])
    w = multiply(u, v)
    assert len(w) == 1
    assert np.allclose(w.wavevectors[0], [0.5, 5.0])
    assert w.coeffs[0, 0] == (2.0 + 1j) * 0.5j


def test_multiply_cosine_square():
    # (2 cos(k.x))^2 = e^{2ik.x} + 2 + e^{-2ik.x}
    k = np.array([1.0, 0.0])
    u = normalize([(k, np.array([1.0 + 0j])), (-k, np.array([1.0 + 0j]))])
    w = multiply(u, u)
    assert len(w) == 3
    got = {tuple(w.wavevectors[i]): w.coeffs[i, 0] for i in range(3)}
    assert got[(2.0, 0.0)] == 1.0
    assert got[(0.0, 0.0)] == 2.0
    assert got[(-2.0, 0.0)] == 1.0


def test_multiply_random_pair_brute_force_and_sampling(rng):
    # brute-force double loop over all 35 pairs, plus real-space samples
    u = random_measure(rng, n=2, ncomp=1, n_atoms=5)
    v = random_measure(rng, n=2, ncomp=1, n_atoms=7)
    w = multiply(u, v)
    expect = {}
    for i in range(len(u)):
        for j in range(len(v)):
            key = tuple(np.round((u.wavevectors[i] + v.wavevectors[j]) / 1e-9).astype(int))
            expect[key] = expect.get(key, 0.0) + u.coeffs[i, 0] * v.coeffs[j, 0]
    assert len(w) == len(expect)
    for idx in range(len(w)):
        key = tuple(np.round(w.wavevectors[idx] / 1e-9).astype(int))
        assert w.coeffs[idx, 0] == pytest.approx(expect[key], rel=1e-12, abs=1e-14)
    # algebra inequality
    assert fm_norm(w) <= (2 * math.pi) ** (-1) * fm_norm(u) * fm_norm(v) * (1 + 1e-14)
    # pointwise product agreement
    pts = rng.standard_normal((40, 2))
    uv = evaluate(u, pts)[:, 0] * evaluate(v, pts)[:, 0]
    assert np.allclose(evaluate(w, pts)[:, 0], uv, rtol=1e-11, atol=1e-12)


def test_multiply_real_fields_stay_real(rng):
    u = random_real_measure(rng, n_pairs=3)
    v = random_real_measure(rng, n_pairs=2)
    w = multiply(u, v, "dot")
    assert w.is_real_field(1e-10)


def test_multiply_modes(rng):
    u = random_measure(rng, n=2, ncomp=2, n_atoms=3)
    v = random_measure(rng, n=2, ncomp=2, n_atoms=3)
    dot = multiply(u, v, "dot")
    assert dot.ncomp == 1
    outer = multiply(u, v, "outer")
    assert outer.ncomp == 4
    comp = multiply(u, v, "componentwise")
    assert comp.ncomp == 2
    with pytest.raises(ValueError):
        multiply(u, v)  # vector fields need an explicit mode


def test_multiply_atom_cap():
    u = random_measure(np.random.default_rng(0), ncomp=1, n_atoms=8)
    with pytest.raises(AtomCapError) as err:
        multiply(u, u, atom_cap=10)
    assert err.value.would_be == 64


# ---------------------------------------------------------------------------
# restrict


def test_restrict_identity(rng):
    u = random_measure(rng, n=2, ncomp=2)
    v = restrict(u, lambda xi: np.eye(2))
    assert np.array_equal(v.coeffs, u.coeffs)


def test_restrict_composition(rng):
    u = random_measure(rng, n=2, ncomp=2, n_atoms=6)
    psi = lambda xi: float(xi @ xi)
    phi = lambda xi: 0.3 + float(xi[0])
    lhs = restrict(restrict(u, psi), phi)
    rhs = restrict(u, lambda xi: phi(xi) * psi(xi))
    ref = np.max(np.abs(rhs.coeffs))
    assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) <= 1e-13 * ref


def test_restrict_scalar_weight():
    u = normalize([(np.array([1.0, 0.0]), np.array([1, 0], complex)),
                   (np.array([0.0, 2.0]), np.array([0, 1], complex))])
    v = restrict(u, lambda xi: float(xi @ xi))
    got = {tuple(v.wavevectors[i]): v.coeffs[i] for i in range(2)}
    assert np.allclose(got[(1.0, 0.0)], [1, 0])
    assert np.allclose(got[(0.0, 2.0)], [0, 4])


def test_restrict_contraction_never_grows_norm(rng):
    u = random_measure(rng, n=2, ncomp=2, n_atoms=10)
    sym = lambda xi: math.sin(float(xi[0]))  # |psi| <= 1
    v = restrict(u, sym)
    assert fm_norm(v) <= fm_norm(u) * (1 + 1e-15)


def test_restrict_singular_symbol_names_atom():
    u = normalize([(np.zeros(2), np.array([1, 0], complex)),
                   (np.array([1.0, 0.0]), np.array([0, 1], complex))])

    def bad(xi):
        nsq = float(xi @ xi)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.eye(2) - np.outer(xi, xi) / nsq

    with pytest.raises(SingularSymbolError) as err:
        restrict(u, bad)
    assert "atom 0" in str(err.value)


def test_multiplier_norm_identity(rng):
    # |restrict| <= sup |sigma| with equality attained on a single atom
    u = random_measure(rng, n=2, ncomp=2, n_atoms=8)
    sym = lambda xi: 1.0 / (1.0 + float(xi @ xi))
    sup = max(sym(xi) for xi in u.wavevectors)
    assert fm_norm(restrict(u, sym)) <= sup * fm_norm(u) * (1 + 1e-14)
    single = normalize([(np.array([1.0, 2.0]), np.array([3, 4], complex))])
    assert fm_norm(restrict(single, sym)) == pytest.approx(
        sym(single.wavevectors[0]) * fm_norm(single), rel=1e-15)


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_at_origin_returns_coefficient():
    c = np.array([1.5, -2.0j], complex)
    u = normalize([(np.array([0.7, -0.3]), c)])
    assert np.allclose(evaluate(u, np.zeros(2)), c)


def test_evaluate_hermitian_pair_is_real(rng):
    u = hermitian_pair([1.3, -0.4], [0.2 + 0.7j, 1.0 - 0.1j])
    pts = rng.standard_normal((25, 2))
    vals = evaluate(u, pts)
    assert np.max(np.abs(vals.imag)) < 1e-14 * np.max(np.abs(vals))


def test_evaluate_matches_fft_on_integer_lattice(rng):
    # FFT oracle: atoms on the integer lattice of a 2pi-periodic box
    grid_n = 16
    u = random_real_measure(rng, n_pairs=5, lattice=True)
    x = np.linspace(0.0, 2 * math.pi, grid_n, endpoint=False)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    direct = evaluate(u, pts)[:, 0].reshape(grid_n, grid_n)

    coeff_grid = np.zeros((grid_n, grid_n), complex)
    for xi, c in zip(u.wavevectors, u.coeffs):
        i, j = int(round(xi[0])) % grid_n, int(round(xi[1])) % grid_n
        coeff_grid[i, j] += c[0]
    via_fft = np.fft.ifftn(coeff_grid) * grid_n**2
    ref = np.max(np.abs(via_fft))
    assert np.max(np.abs(direct - via_fft)) <= 1e-12 * ref


# ---------------------------------------------------------------------------
# helpers and IO


def test_combine_and_scale(rng):
    u = random_measure(rng, n_atoms=4)
    v = random_measure(rng, n_atoms=3)
    w = combine(u, v)
    assert fm_norm(w) <= fm_norm(u) + fm_norm(v) + 1e-12
    s = scale(u, 2.0)
    assert fm_norm(s) == pytest.approx(2 * fm_norm(u), rel=1e-15)


def test_flags(rng):
    u = random_real_measure(rng, n_pairs=3)
    assert u.is_real_field()
    assert u.is_zero_free()
    v = normalize([(np.zeros(2), np.array([1, 0], complex))])
    assert not v.is_zero_free()


def test_snapshot_roundtrip(tmp_path, rng):
    u = random_real_measure(rng, n_pairs=3)
    v = random_measure(rng, n_atoms=2)
    path = tmp_path / "snap.jsonl"
    measures.write_snapshots(path, [(0.0, u), (0.5, v)], manifest_hash="abc123")
    out = measures.read_snapshots(path)
    assert len(out) == 2
    t0, u2, flags0 = out[0]
    assert t0 == 0.0
    assert "real_field" in flags0
    assert len(u2) == len(u)
    assert np.allclose(u2.wavevectors, u.wavevectors)
    assert np.allclose(u2.coeffs, u.coeffs)
    first = path.read_text().splitlines()[0]
    assert "abc123" in first and '"n"' in first and '"flags"' in first
