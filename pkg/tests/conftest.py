import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_measure(rng, n=2, ncomp=None, n_atoms=5, lattice=False, scale=1.0):
    """Random atom set; float wavevectors unless lattice=True."""
    from activefm import measures
    ncomp = ncomp or n
    atoms = []
    for _ in range(n_atoms):
        if lattice:
            xi = rng.integers(-3, 4, size=n).astype(float)
            if not np.any(xi):
                xi[0] = 1.0
        else:
            xi = rng.standard_normal(n)
        c = scale * (rng.standard_normal(ncomp) + 1j * rng.standard_normal(ncomp))
        atoms.append((xi, c))
    return measures.normalize(atoms)


def random_real_measure(rng, n=2, n_pairs=3, lattice=False, scale=1.0):
    """Random real field: atoms in Hermitian pairs."""
    from activefm import measures
    atoms = []
    for _ in range(n_pairs):
        if lattice:
            xi = rng.integers(-3, 4, size=n).astype(float)
            if not np.any(xi):
                xi[0] = 1.0
        else:
            xi = rng.standard_normal(n)
        c = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        atoms.append((xi, c))
        atoms.append((-xi, np.conj(c)))
    return measures.normalize(atoms)
