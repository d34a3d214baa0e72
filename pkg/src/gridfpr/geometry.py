"""Planar polygon helpers for operation-region polygons."""

from __future__ import annotations

import math

Point = tuple[float, float]


def signed_area(vertices) -> float:
    """Shoelace area, positive for counterclockwise vertex order."""
    n = len(vertices)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return 0.5 * acc


def nearest_on_segment(a: Point, b: Point, p: Point) -> Point:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return a
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / denom
    t = min(1.0, max(0.0, t))
    return (ax + t * dx, ay + t * dy)


def distance_to_boundary(vertices, point: Point) -> float:
    best = math.inf
    n = len(vertices)
    for i in range(n):
        q = nearest_on_segment(vertices[i], vertices[(i + 1) % n], point)
        best = min(best, math.hypot(point[0] - q[0], point[1] - q[1]))
    return best


def contains(vertices, point: Point, tol: float = 0.0) -> bool:
    """Ray-casting test; points within ``tol`` of the boundary count as inside."""
    if tol > 0.0 and distance_to_boundary(vertices, point) <= tol:
        return True
    x, y = point
    inside = False
    n = len(vertices)
    j = n - 1
    for i in range(n):
        xi, yi = vertices[i]
        xj, yj = vertices[j]
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def project_inside(vertices, point: Point) -> Point:
    """Return ``point`` unchanged if inside, else the nearest boundary point."""
    if contains(vertices, point):
        return point
    best = vertices[0]
    best_d = math.inf
    n = len(vertices)
    for i in range(n):
        q = nearest_on_segment(vertices[i], vertices[(i + 1) % n], point)
        d = math.hypot(point[0] - q[0], point[1] - q[1])
        if d < best_d:
            best, best_d = q, d
    return best


def is_simple(vertices) -> bool:
    """True when no two non-adjacent edges intersect."""
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def _segments_cross(a, b, c, d) -> bool:
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
