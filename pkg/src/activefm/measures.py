"""Velocity fields as finite sums of plane waves.

A field u(x) = sum_j c_j exp(i xi_j . x) is stored as a finite set of
atoms (xi_j, c_j) with xi_j a real wavevector and c_j a complex
coefficient vector.  This is the atomic part of the space of Fourier
transforms of finite Radon measures: all norms, products and multiplier
actions reduce to exact arithmetic on the atom set, which is what makes
the representation useful as a reference for spectral solvers.

Conventions
-----------
* The FM norm of the field is (2*pi)**(n/2) times the total variation of
  the underlying measure, i.e. (2*pi)**(n/2) * sum_j |c_j|_2.  A single
  plane wave with unit coefficient therefore has norm (2*pi)**(n/2).
* Coefficient vectors may have any length: n components for velocity
  fields, 1 for scalar fields (pressure, |u|^2), n*n for outer products.
* Atoms are keyed by the plane-wave wavevector.  Measures are immutable
  after construction; every operation returns a new value.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AtomCapError, DimensionMismatchError, SingularSymbolError

DEFAULT_MERGE_TOL = 1e-9


@dataclass(frozen=True)
class Atom:
    """One plane wave: coefficient `c` at wavevector `xi`."""

    xi: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=complex))
        if self.xi.ndim != 1 or self.xi.shape[0] not in (2, 3):
            raise DimensionMismatchError(f"wavevector must have 2 or 3 components, got shape {self.xi.shape}")
        if self.c.ndim != 1:
            raise ValueError("coefficient must be a 1-d complex vector")
        if not np.all(np.isfinite(self.xi)) or not np.all(np.isfinite(self.c.view(float))):
            raise ValueError("atom has non-finite wavevector or coefficient")


class SpectralMeasure:
    """Immutable finite atom set representing a plane-wave sum.

    Construct through :func:`normalize` (or the convenience builders);
    the constructor itself trusts its inputs to be merged and sorted.
    """

    __slots__ = ("n", "ncomp", "wavevectors", "coeffs", "merge_tol")

    def __init__(self, wavevectors: np.ndarray, coeffs: np.ndarray, n: int, merge_tol: float):
        wavevectors = np.asarray(wavevectors, dtype=float).reshape(-1, n)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs.reshape(-1, 1)
        if len(coeffs) != len(wavevectors):
            raise ValueError("wavevector/coefficient count mismatch")
        wavevectors.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "ncomp", int(coeffs.shape[1]) if coeffs.size or coeffs.ndim == 2 else 1)
        object.__setattr__(self, "wavevectors", wavevectors)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "merge_tol", float(merge_tol))

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("SpectralMeasure is immutable")

    def __len__(self) -> int:
        return self.wavevectors.shape[0]

    @property
    def atom_count(self) -> int:
        return len(self)

    def atoms(self) -> list[Atom]:
        return [Atom(self.wavevectors[i].copy(), self.coeffs[i].copy()) for i in range(len(self))]

    def __repr__(self) -> str:
        return f"SpectralMeasure(n={self.n}, ncomp={self.ncomp}, atoms={len(self)})"

    # ---- flag checks -------------------------------------------------

    def is_zero_free(self) -> bool:
        """True if no atom sits at the origin (within merge_tol)."""
        if len(self) == 0:
            return True
        tol = max(self.merge_tol, 0.0)
        return bool(np.all(np.linalg.norm(self.wavevectors, axis=1) > tol))

    def is_real_field(self, rtol: float = 1e-12) -> bool:
        """True if atoms come in Hermitian pairs (xi, c) / (-xi, conj c)."""
        if len(self) == 0:
            return True
        index = _bin_index(self.wavevectors, self.merge_tol)
        scale = float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0
        for i in range(len(self)):
            j = _bin_lookup(index, -self.wavevectors[i], self.wavevectors, self.merge_tol)
            if j is None:
                return False
            if np.max(np.abs(self.coeffs[j] - np.conj(self.coeffs[i]))) > rtol * max(scale, 1e-300):
                return False
        return True

    def is_solenoidal(self, div_tol: float = 1e-12) -> bool:
        """True if every atom satisfies |xi . c| <= div_tol * |xi| |c|."""
        if len(self) == 0:
            return True
        if self.ncomp != self.n:
            return False
        dots = np.abs(np.einsum("an,an->a", self.wavevectors.astype(complex), self.coeffs))
        bound = div_tol * np.linalg.norm(self.wavevectors, axis=1) * np.linalg.norm(self.coeffs, axis=1)
        return bool(np.all(dots <= bound + 1e-300))

    def flag_strings(self) -> list[str]:
        flags = []
        if self.is_real_field():
            flags.append("real_field")
        if self.is_zero_free():
            flags.append("zero_free")
        if self.ncomp == self.n and self.is_solenoidal():
            flags.append("solenoidal")
        return flags

    def max_coefficient(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.coeffs, axis=1)))


# ---------------------------------------------------------------------------
# construction / normalization


def _neighbor_offsets(n: int) -> list[tuple[int, ...]]:
    return [off for off in itertools.product((-1, 0, 1), repeat=n)]


def _bin_keys(wavevectors: np.ndarray, merge_tol: float) -> list[tuple]:
    """Hashable bin keys: quantized integers, or exact floats when tol = 0."""
    if merge_tol > 0:
        return list(map(tuple, np.round(wavevectors / merge_tol).astype(np.int64).tolist()))
    return list(map(tuple, wavevectors.tolist()))


def _bin_index(wavevectors: np.ndarray, merge_tol: float) -> dict:
    index: dict = {}
    for i, k in enumerate(_bin_keys(wavevectors, merge_tol)):
        index.setdefault(k, []).append(i)
    return index


def _bin_lookup(index: dict, xi: np.ndarray, wavevectors: np.ndarray, merge_tol: float):
    base = _bin_keys(xi.reshape(1, -1), merge_tol)[0]
    if merge_tol <= 0:
        cand = index.get(base)
        return cand[0] if cand else None
    for off in _neighbor_offsets(len(xi)):
        cand = index.get(tuple(b + o for b, o in zip(base, off)))
        if not cand:
            continue
        for i in cand:
            if np.linalg.norm(wavevectors[i] - xi) <= merge_tol:
                return i
    return None


def _coerce_atoms(raw_atoms) -> tuple[np.ndarray, np.ndarray, int]:
    if isinstance(raw_atoms, tuple) and len(raw_atoms) == 2 and isinstance(raw_atoms[0], np.ndarray):
        xi = np.asarray(raw_atoms[0], dtype=float)
        c = np.asarray(raw_atoms[1], dtype=complex)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        return xi, c, xi.shape[1] if xi.size else 2
    xis, cs = [], []
    for entry in raw_atoms:
        if isinstance(entry, Atom):
            xis.append(entry.xi)
            cs.append(entry.c)
        else:
            xi, c = entry
            xis.append(np.asarray(xi, dtype=float))
            cs.append(np.atleast_1d(np.asarray(c, dtype=complex)))
    if not xis:
        return np.zeros((0, 2)), np.zeros((0, 1), complex), 2
    dims = {x.shape[0] for x in xis}
    if len(dims) != 1:
        raise DimensionMismatchError(f"atoms with mixed dimensions {sorted(dims)}")
    ncomps = {c.shape[0] for c in cs}
    if len(ncomps) != 1:
        raise DimensionMismatchError(f"atoms with mixed coefficient lengths {sorted(ncomps)}")
    return np.stack(xis), np.stack(cs), xis[0].shape[0]


def normalize(raw_atoms, merge_tol: float = DEFAULT_MERGE_TOL, drop_tol: float = 0.0) -> SpectralMeasure:
    """Coalesce coincident wavevectors, drop tiny coefficients, sort.

    Atoms whose wavevectors lie within `merge_tol` of each other are
    merged by coefficient addition; atoms with coefficient norm below
    `drop_tol` are removed afterwards.  Idempotent.
    """
    xi, c, n = _coerce_atoms(raw_atoms)
    if n not in (2, 3):
        raise DimensionMismatchError(f"dimension must be 2 or 3, got {n}")
    if xi.size and (not np.all(np.isfinite(xi)) or not np.all(np.isfinite(c.view(float)))):
        raise ValueError("non-finite atom data")
    if len(xi) == 0:
        return SpectralMeasure(np.zeros((0, n)), np.zeros((0, c.shape[1] if c.size else 1), complex), n, merge_tol)

    # pass 1: exact-bin accumulation (dict on hashable keys)
    keys = _bin_keys(xi, merge_tol)
    slots: dict = {}
    rep_idx: list[int] = []
    acc: list[np.ndarray] = []
    for i, kt in enumerate(keys):
        j = slots.get(kt)
        if j is None:
            slots[kt] = len(acc)
            rep_idx.append(i)
            acc.append(c[i].copy())
        else:
            acc[j] += c[i]

    # pass 2, only for a positive tolerance: merge representatives across
    # neighboring bins, processed in sorted bin order for determinism
    out_xi: list[np.ndarray] = []
    out_c: list[np.ndarray] = []
    if merge_tol > 0:
        placed: dict = {}
        offsets = [off for off in _neighbor_offsets(n) if any(off)]
        order = sorted(range(len(acc)), key=lambda j: keys[rep_idx[j]])
        for idx in order:
            key = keys[rep_idx[idx]]
            rx = xi[rep_idx[idx]]
            target = None
            for off in offsets:
                j = placed.get(tuple(k + o for k, o in zip(key, off)))
                if j is not None and np.linalg.norm(out_xi[j] - rx) <= merge_tol:
                    target = j
                    break
            if target is None:
                placed[key] = len(out_xi)
                out_xi.append(rx)
                out_c.append(acc[idx])
            else:
                out_c[target] = out_c[target] + acc[idx]
    else:
        out_xi = [xi[i] for i in rep_idx]
        out_c = acc

    XI = np.array(out_xi).reshape(-1, n)
    C = np.array(out_c).reshape(-1, c.shape[1])
    if len(XI):
        # exactly-zero coefficients carry no information; drop_tol extends
        # the cut to small ones
        keep = np.linalg.norm(C, axis=1) > 0.0 if drop_tol <= 0 \
            else np.linalg.norm(C, axis=1) >= drop_tol
        XI, C = XI[keep], C[keep]
    if len(XI):
        final = np.lexsort(XI.T[::-1])
        XI, C = XI[final], C[final]
    return SpectralMeasure(XI, C, n, merge_tol)


def zero_measure(n: int, ncomp: int | None = None, merge_tol: float = DEFAULT_MERGE_TOL) -> SpectralMeasure:
    return SpectralMeasure(np.zeros((0, n)), np.zeros((0, ncomp or n), complex), n, merge_tol)


def hermitian_pair(k, c, merge_tol: float = DEFAULT_MERGE_TOL) -> SpectralMeasure:
    """Real field 2*Re(c exp(i k.x)) as the atom pair (k, c), (-k, conj c)."""
    k = np.asarray(k, dtype=float)
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    return normalize([(k, c), (-k, np.conj(c))], merge_tol=merge_tol)


def combine(*measures: SpectralMeasure, drop_tol: float = 0.0) -> SpectralMeasure:
    """Sum of fields: concatenate atom sets and re-normalize."""
    ms = [m for m in measures if m is not None]
    if not ms:
        raise ValueError("no measures to combine")
    n = ms[0].n
    if any(m.n != n for m in ms):
        raise DimensionMismatchError("combine: mixed dimensions")
    if any(m.ncomp != ms[0].ncomp for m in ms):
        raise DimensionMismatchError("combine: mixed coefficient lengths")
    xi = np.concatenate([m.wavevectors for m in ms])
    c = np.concatenate([m.coeffs for m in ms])
    return normalize((xi, c), merge_tol=max(m.merge_tol for m in ms), drop_tol=drop_tol)


def scale(u: SpectralMeasure, factor: complex) -> SpectralMeasure:
    return SpectralMeasure(u.wavevectors, u.coeffs * factor, u.n, u.merge_tol)


# ---------------------------------------------------------------------------
# norms


def fm_norm(u: SpectralMeasure, s: float = 0.0) -> float:
    """Weighted total-variation norm (2*pi)**(n/2) sum |xi|^s |c|_2.

    s = 0 gives the FM norm; s > 0 the FM^s seminorm, under which any
    mass at the origin carries weight zero.
    """
    if s < 0:
        raise ValueError("weight exponent s must be >= 0")
    if len(u) == 0:
        return 0.0
    mags = np.linalg.norm(u.coeffs, axis=1)
    if s == 0:
        terms = mags
    else:
        terms = np.linalg.norm(u.wavevectors, axis=1) ** s * mags
    return (2.0 * math.pi) ** (u.n / 2.0) * math.fsum(terms.tolist())


# ---------------------------------------------------------------------------
# products


_PAIR_MODES = ("scale", "dot", "outer", "componentwise")


def _pair_coeffs(cu: np.ndarray, cv: np.ndarray, mode: str) -> np.ndarray:
    """All pairwise coefficient combinations, shape (Au, Av, m_out)."""
    if mode == "scale":
        if cu.shape[1] == 1:
            return cu[:, None, :] * cv[None, :, :]
        if cv.shape[1] == 1:
            return cu[:, None, :] * cv[None, :, :]
        raise ValueError("scale mode needs a scalar factor")
    if mode == "dot":
        return np.einsum("am,bm->ab", cu, cv)[:, :, None]
    if mode == "outer":
        au, av = cu.shape[0], cv.shape[0]
        return np.einsum("ai,bj->abij", cu, cv).reshape(au, av, -1)
    if mode == "componentwise":
        return cu[:, None, :] * cv[None, :, :]
    raise ValueError(f"unknown product mode {mode!r}")


def multiply(u: SpectralMeasure, v: SpectralMeasure, mode: str = "auto",
             atom_cap: int = 1_000_000) -> SpectralMeasure:
    """Pointwise product of two fields by atom convolution.

    Every atom pair contributes an atom at xi_j + xi_k whose coefficient
    is the requested bilinear combination: "scale" (scalar field times
    any field), "dot" (no conjugation), "outer" (flattened), or
    "componentwise".  mode="auto" selects "scale" when either factor is
    scalar.  The result always satisfies the algebra inequality
    fm_norm(u*v) <= (2*pi)**(-n/2) fm_norm(u) fm_norm(v).
    """
    if u.n != v.n:
        raise DimensionMismatchError("multiply: mixed dimensions")
    if mode == "auto":
        if u.ncomp == 1 or v.ncomp == 1:
            mode = "scale"
        elif u.ncomp == v.ncomp:
            raise ValueError("multiply of two vector fields: pass mode='dot', 'outer' or 'componentwise'")
    if mode == "componentwise" and u.ncomp != v.ncomp:
        raise DimensionMismatchError("componentwise product needs equal coefficient lengths")
    if mode == "dot" and u.ncomp != v.ncomp:
        raise DimensionMismatchError("dot product needs equal coefficient lengths")
    pairs = len(u) * len(v)
    if pairs > atom_cap:
        raise AtomCapError(pairs, atom_cap)
    if pairs == 0:
        out_ncomp = {"dot": 1, "scale": max(u.ncomp, v.ncomp), "outer": u.ncomp * v.ncomp,
                     "componentwise": u.ncomp}[mode]
        return zero_measure(u.n, out_ncomp, max(u.merge_tol, v.merge_tol))
    xi = (u.wavevectors[:, None, :] + v.wavevectors[None, :, :]).reshape(pairs, u.n)
    c = _pair_coeffs(u.coeffs, v.coeffs, mode).reshape(pairs, -1)
    return normalize((xi, c), merge_tol=max(u.merge_tol, v.merge_tol))


# ---------------------------------------------------------------------------
# multiplier action and sampling


def restrict(u: SpectralMeasure, symbol: Callable[[np.ndarray], np.ndarray]) -> SpectralMeasure:
    """Apply a Fourier-multiplier symbol atom by atom: c -> psi(xi) c.

    `symbol` may return a scalar or a matrix with u.ncomp columns.  A
    symbol that raises or produces non-finite values at an occupied
    wavevector triggers SingularSymbolError naming the atom.
    """
    if len(u) == 0:
        return u
    out = []
    for i in range(len(u)):
        xi = u.wavevectors[i]
        try:
            val = np.asarray(symbol(xi))
        except (ZeroDivisionError, FloatingPointError, SingularSymbolError) as exc:
            raise SingularSymbolError(f"symbol undefined at atom {i} (xi={xi.tolist()}): {exc}") from exc
        if not np.all(np.isfinite(val)):
            raise SingularSymbolError(f"symbol non-finite at atom {i} (xi={xi.tolist()})")
        if val.ndim == 0:
            out.append(val * u.coeffs[i])
        elif val.ndim == 2:
            if val.shape[1] != u.ncomp:
                raise DimensionMismatchError(
                    f"symbol shape {val.shape} incompatible with coefficient length {u.ncomp}")
            out.append(val @ u.coeffs[i])
        else:
            raise ValueError("symbol must return a scalar or a matrix")
    C = np.stack([np.atleast_1d(np.asarray(v, dtype=complex)) for v in out])
    return SpectralMeasure(u.wavevectors, C, u.n, u.merge_tol)


def evaluate(u: SpectralMeasure, points) -> np.ndarray:
    """Sample the field: sum_j c_j exp(i xi_j . x) at each point.

    Returns a complex array of shape (npoints, ncomp), or (ncomp,) for a
    single point.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != u.n:
        raise DimensionMismatchError(f"points of dimension {pts.shape[1]}, field has n={u.n}")
    if len(u) == 0:
        vals = np.zeros((len(pts), u.ncomp), complex)
    else:
        phases = np.exp(1j * (pts @ u.wavevectors.T))
        vals = phases @ u.coeffs
    return vals[0] if single else vals


def sample_real(u: SpectralMeasure, points, imag_tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Sample a real field; returns (real values, max imaginary residue)."""
    vals = evaluate(u, points)
    max_imag = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    scale_ref = max(float(np.max(np.abs(vals))), 1e-300) if vals.size else 1.0
    if max_imag > imag_tol * scale_ref:
        raise ValueError(f"field is not real to tolerance: max imag {max_imag:.3e}")
    return vals.real, max_imag


# ---------------------------------------------------------------------------
# snapshot serialization (JSON lines)


def write_snapshots(path, snapshots: Iterable[tuple[float, SpectralMeasure]],
                    manifest_hash: str | None = None) -> None:
    """Write atom-set snapshots: per snapshot a header record

    {"n":..., "t":..., "flags":[...]} followed by one record per atom
    {"xi":[...], "re":[...], "im":[...]}.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for t, u in snapshots:
            header = {"n": u.n, "t": float(t), "flags": u.flag_strings()}
            if manifest_hash is not None:
                header["manifest"] = manifest_hash
            fh.write(json.dumps(header) + "\n")
            for i in range(len(u)):
                rec = {
                    "xi": [float(x) for x in u.wavevectors[i]],
                    "re": [float(x) for x in u.coeffs[i].real],
                    "im": [float(x) for x in u.coeffs[i].imag],
                }
                fh.write(json.dumps(rec) + "\n")


def read_snapshots(path) -> list[tuple[float, SpectralMeasure, list[str]]]:
    """Read snapshots written by :func:`write_snapshots`."""
    out = []
    cur_atoms: list[tuple[np.ndarray, np.ndarray]] = []
    header = None

    def flush():
        if header is None:
            return
        n = header["n"]
        if cur_atoms:
            m = normalize(cur_atoms)
        else:
            m = zero_measure(n)
        out.append((header["t"], m, header.get("flags", [])))

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "n" in rec and "xi" not in rec:
                flush()
                header = rec
                cur_atoms = []
            else:
                xi = np.asarray(rec["xi"], dtype=float)
                c = np.asarray(rec["re"], dtype=float) + 1j * np.asarray(rec["im"], dtype=float)
                cur_atoms.append((xi, c))
    flush()
    return out
