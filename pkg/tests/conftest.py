import math

import pytest

from adaptpw import SpectralField, verify_potential


def trig_field(dim, c, terms):
    """Coefficient field of c + sum a_k cos(k.x) in the orthonormal basis."""
    norm = (2.0 * math.pi) ** (dim / 2.0)
    coeffs = {(0,) * dim: c * norm}
    for k, a in terms.items():
        k = tuple(k)
        neg = tuple(-x for x in k)
        coeffs[k] = coeffs.get(k, 0.0) + 0.5 * a * norm
        coeffs[neg] = coeffs.get(neg, 0.0) + 0.5 * a * norm
    return SpectralField.from_pairs(dim, coeffs, real_flag=True)


def trig_potential(dim, c, terms):
    return verify_potential(trig_field(dim, c, terms))


@pytest.fixture(scope="session")
def cosine_potential():
    """V = 1 + cos x on the 1-torus (grid minimum exactly zero)."""
    return trig_potential(1, 1.0, {(1,): 1.0})


@pytest.fixture(scope="session")
def constant_potential():
    return trig_potential(1, 1.0, {})
