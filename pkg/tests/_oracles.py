"""Independent reference computations used by the tests.

Everything here is derived from first principles with exact rational
arithmetic (binary floats are rationals, so Fraction keeps vertex
coordinates exact) and never touches the package's quadrature or
assembly code paths.
"""

import math
from fractions import Fraction

import numpy as np


def _factorial_bary_integral(c0, c1, c2):
    """integral over the reference triangle of l0^c0 l1^c1 l2^c2,
    divided by the doubled area: c0! c1! c2! / (c0+c1+c2+2)! * 2
    returned as the factor multiplying the physical area."""
    num = math.factorial(c0) * math.factorial(c1) * math.factorial(c2)
    den = math.factorial(c0 + c1 + c2 + 2)
    return Fraction(2 * num, den)


def _multinomial_terms(power, values):
    """Expansion of (v0*l0 + v1*l1 + v2*l2)**power as a dict
    {(c0, c1, c2): coefficient} with exact Fraction coefficients."""
    terms = {}
    for c0 in range(power + 1):
        for c1 in range(power - c0 + 1):
            c2 = power - c0 - c1
            coef = Fraction(
                math.factorial(power),
                math.factorial(c0) * math.factorial(c1) * math.factorial(c2),
            )
            coef *= values[0] ** c0 * values[1] ** c1 * values[2] ** c2
            terms[(c0, c1, c2)] = coef
    return terms


def exact_triangle_integral(verts, p, q):
    """integral of x^p y^q over the triangle with the given vertices.

    Exact rational arithmetic: x and y are expanded in barycentric
    coordinates and integrated with the factorial formula.
    """
    vx = [Fraction(float(verts[i][0])) for i in range(3)]
    vy = [Fraction(float(verts[i][1])) for i in range(3)]
    area2 = abs(
        (vx[1] - vx[0]) * (vy[2] - vy[0]) - (vx[2] - vx[0]) * (vy[1] - vy[0])
    )
    tx = _multinomial_terms(p, vx)
    ty = _multinomial_terms(q, vy)
    total = Fraction(0)
    for cx, ax in tx.items():
        for cy, ay in ty.items():
            c = (cx[0] + cy[0], cx[1] + cy[1], cx[2] + cy[2])
            total += ax * ay * _factorial_bary_integral(*c)
    # the factorial formula integrates over the reference element; the
    # affine map contributes |det J| = 2*area
    return float(total * area2 / 2)


def exact_segment_integral(p0, p1, p, q):
    """integral of x^p y^q along the straight segment p0 -> p1 (arc length).

    The in-parameter polynomial is integrated exactly; only the final
    multiplication by the segment length is floating point.
    """
    x0, y0 = Fraction(float(p0[0])), Fraction(float(p0[1]))
    dx = Fraction(float(p1[0])) - x0
    dy = Fraction(float(p1[1])) - y0
    # (x0 + t dx)^p (y0 + t dy)^q expanded in powers of t
    coeffs = {}
    for i in range(p + 1):
        a = Fraction(math.comb(p, i)) * x0 ** (p - i) * dx ** i
        for j in range(q + 1):
            b = Fraction(math.comb(q, j)) * y0 ** (q - j) * dy ** j
            coeffs[i + j] = coeffs.get(i + j, Fraction(0)) + a * b
    integral_t = sum(c / (k + 1) for k, c in coeffs.items())
    length = math.hypot(float(p1[0]) - float(p0[0]),
                        float(p1[1]) - float(p0[1]))
    return float(integral_t) * length


def triangle_area(verts):
    verts = np.asarray(verts, dtype=float)
    e1 = verts[..., 1, :] - verts[..., 0, :]
    e2 = verts[..., 2, :] - verts[..., 0, :]
    return 0.5 * np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


def random_triangle(rng, scale=2.0, min_area=0.05):
    """A non-degenerate triangle with vertices in [-scale, scale]^2."""
    while True:
        verts = rng.uniform(-scale, scale, size=(3, 2))
        if triangle_area(verts) > min_area:
            return verts


def two_pass_moments(samples, center=None):
    """Mean and denominator-M variance via a plain two-pass computation."""
    samples = np.asarray(samples, dtype=float)
    mean = samples.sum(axis=0) / samples.shape[0]
    c = mean if center is None else np.asarray(center, dtype=float)
    dev = samples - c
    return mean, (dev * dev).sum(axis=0) / samples.shape[0]
