"""Empirical measures, the Gaussian test-function family, and the metric on laws.

The distance between two probability measures is a weighted series of
differences of integrals against a countable family of Gaussian bumps
exp(-q |x - c|^2); the family separates points and determines weak
convergence, and the 2^-i weights make the (truncated) series a metric with
values in [0, 1] and an explicit tail bound 2^-K.

Enumeration contract (version "gauss-v1"): basis function i is built from the
diagonal pairing of a center sequence and a width sequence.  Walk diagonals
t = 0, 1, 2, ...; on diagonal t take (center index s, width index t - s) for
s = 0..t.  Centers are the integer lattice points of Z^m sorted by
(sup-norm ring, then lexicographic order); widths are q = 1, 1/2, 2, 1/4, 4,
1/8, 8, ...  The first function is therefore always exp(-|x|^2).  This order
is part of the external contract: distances are only comparable between runs
using the same enumeration version.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .filtering import ParticleEnsemble

ENUMERATION_VERSION = "gauss-v1"


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finite weighted atom measure on R^m."""

    atoms: np.ndarray    # (N, m)
    weights: np.ndarray  # (N,), nonnegative, summing to 1

    def __post_init__(self):
        if len(self.atoms) != len(self.weights):
            raise ValueError("atoms and weights must have equal length")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")

    @property
    def dim(self) -> int:
        return np.asarray(self.atoms).shape[1]


def marginal_x(ensemble: ParticleEnsemble, dim_slow: int) -> EmpiricalMeasure:
    """Project a joint (slow, fast) ensemble onto its slow coordinates."""
    return EmpiricalMeasure(atoms=np.asarray(ensemble.states)[:, :dim_slow],
                            weights=np.asarray(ensemble.weights))


def integrate(measure: EmpiricalMeasure, phi: Callable) -> float:
    """Integral of phi against the measure: sum of w_i phi(atom_i).

    phi must accept an (N, m) array of atoms and return (N,) values.
    """
    return float(measure.weights @ np.asarray(phi(measure.atoms)))


def _lattice_centers(dim: int, count: int) -> List[Tuple[int, ...]]:
    """First ``count`` points of Z^dim by (sup-norm ring, lexicographic) order."""
    out = []
    for radius in itertools.count():
        ring = [p for p in itertools.product(range(-radius, radius + 1), repeat=dim)
                if max(abs(c) for c in p) == radius]
        out.extend(sorted(ring))
        if len(out) >= count:
            return out[:count]


def _width_sequence(count: int) -> List[Fraction]:
    """q = 1, 1/2, 2, 1/4, 4, ... as positive rationals."""
    out = [Fraction(1)]
    p = 1
    while len(out) < count:
        out.append(Fraction(1, 2 ** p))
        out.append(Fraction(2 ** p))
        p += 1
    return out[:count]


@dataclass(frozen=True)
class TestFunctionBasis:
    """Finite prefix of the Gaussian bump family, in the documented order."""

    dim: int
    terms: tuple  # per function: tuple of (q: Fraction, center: tuple of int)
    version: str = ENUMERATION_VERSION

    @property
    def count(self) -> int:
        return len(self.terms)

    def evaluate(self, i: int, x: np.ndarray) -> np.ndarray:
        """phi_i at a batch of points x (..., m); values lie in (0, 1]."""
        x = np.asarray(x, dtype=float)
        expo = np.zeros(x.shape[:-1])
        for q, center in self.terms[i]:
            diff = x - np.asarray(center, dtype=float)
            expo += float(q) * np.einsum("...m,...m->...", diff, diff)
        return np.exp(-expo)

    def function(self, i: int) -> Callable:
        return lambda x: self.evaluate(i, x)


def default_basis(count: int, dim: int) -> TestFunctionBasis:
    """The first ``count`` single-term functions of the documented enumeration."""
    if count < 1:
        raise ValueError("count must be at least 1")
    pairs = []
    for t in itertools.count():
        for s in range(t + 1):
            pairs.append((s, t - s))
            if len(pairs) == count:
                break
        if len(pairs) == count:
            break
    centers = _lattice_centers(dim, max(p[0] for p in pairs) + 1)
    widths = _width_sequence(max(p[1] for p in pairs) + 1)
    terms = tuple(((widths[qi], centers[ci]),) for ci, qi in pairs)
    return TestFunctionBasis(dim=dim, terms=terms)


def metric_d(mu: EmpiricalMeasure, nu: EmpiricalMeasure,
             basis: TestFunctionBasis) -> float:
    """Truncated weighted series sum_i |mu(phi_i) - nu(phi_i)| / 2^i.

    Symmetric, satisfies the triangle inequality, takes values in [0, 1);
    truncation at K functions undershoots the full series by at most 2^-K.
    """
    if mu.dim != nu.dim or mu.dim != basis.dim:
        raise ValueError(f"dimension mismatch: mu {mu.dim}, nu {nu.dim}, "
                         f"basis {basis.dim}")
    total = 0.0
    for i in range(basis.count):
        diff = abs(integrate(mu, basis.function(i)) - integrate(nu, basis.function(i)))
        total += diff / 2.0 ** (i + 1)
    return total
