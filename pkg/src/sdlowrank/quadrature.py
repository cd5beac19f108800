"""Gauss quadrature rules on reference triangles and segments.

Two fixed rules cover every integral in the package: the classical
seven-point, degree-5 triangle rule (centroid plus two symmetric orbits)
for all element integrals, and three-point Gauss-Legendre for line
integrals along interface edges.

Both rules are normalised to a reference element of unit measure, so a
physical integral is ``measure(element) * sum(w_q * f(x_q))``.
"""

import math

import numpy as np

__all__ = ["QuadRule", "triangle_rule_7pt", "edge_rule_3pt"]


class QuadRule:
    """A fixed set of quadrature points and weights on a reference element.

    Parameters
    ----------
    points : array_like
        Barycentric triples (triangle rule) or coordinates in [0, 1]
        (edge rule), one row per quadrature point.
    weights : array_like
        Positive weights summing to the reference measure (1 for both
        rules used here).
    degree : int
        Highest polynomial degree integrated exactly.
    """

    def __init__(self, points, weights, degree):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)

    def __len__(self):
        return self.weights.size

    def map_triangle(self, verts):
        """Map the rule onto a physical triangle.

        Parameters
        ----------
        verts : (3, 2) array
            Triangle vertex coordinates.

        Returns
        -------
        points : (nq, 2) array of physical quadrature points.
        weights : (nq,) array of weights scaled by the triangle area.
        """
        verts = np.asarray(verts, dtype=float)
        pts = self.points @ verts
        j = np.array([verts[1] - verts[0], verts[2] - verts[0]])
        area = 0.5 * abs(np.linalg.det(j))
        return pts, self.weights * area

    def map_segment(self, p0, p1):
        """Map the rule onto the straight segment from ``p0`` to ``p1``.

        Returns physical points and weights scaled by the segment length.
        """
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        t = self.points[:, 0]
        pts = np.outer(1.0 - t, p0) + np.outer(t, p1)
        length = float(np.hypot(*(p1 - p0)))
        return pts, self.weights * length


def triangle_rule_7pt():
    """Seven-point rule, exact through total degree 5 on any triangle.

    Points are barycentric; weights sum to one on a reference triangle of
    unit area, so physical integrals are ``area * sum(w * f)``.
    """
    s15 = math.sqrt(15.0)
    a1 = (9.0 - 2.0 * s15) / 21.0   # 0.0597...
    b1 = (6.0 + s15) / 21.0         # 0.4701...
    a2 = (9.0 + 2.0 * s15) / 21.0   # 0.7974...
    b2 = (6.0 - s15) / 21.0         # 0.1012...
    w1 = (155.0 + s15) / 1200.0
    w2 = (155.0 - s15) / 1200.0
    points = [
        (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        (a1, b1, b1),
        (b1, a1, b1),
        (b1, b1, a1),
        (a2, b2, b2),
        (b2, a2, b2),
        (b2, b2, a2),
    ]
    weights = [9.0 / 40.0, w1, w1, w1, w2, w2, w2]
    return QuadRule(points, weights, degree=5)


def edge_rule_3pt():
    """Three-point Gauss-Legendre rule on [0, 1], exact through degree 5."""
    r = math.sqrt(3.0 / 5.0)
    points = [(0.5 * (1.0 - r),), (0.5,), (0.5 * (1.0 + r),)]
    weights = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]
    return QuadRule(points, weights, degree=5)
