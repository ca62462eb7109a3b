"""Exact orientation and in-circle predicates.

Both predicates first evaluate in floating point and accept the sign when
it clears a forward error bound; otherwise
they fall back to rational arithmetic on the exact binary values of the
inputs.

``incircle_sos`` adds a symbolic perturbation of the paraboloid lifting:
point of rank r is raised by eps**(r+1) for an infinitesimal eps, so the
lowest-ranked point dominates.  The result is never zero unless all four
points are collinear, and it is consistent with a genuine lifting, so the
triangulation it defines is unique.
"""
from fractions import Fraction

_EPS = 2.0 ** -53
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS * 2.0
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS * 2.0


def _sign(v) -> int:
    return int(v > 0) - int(v < 0)


def orient(ax, ay, bx, by, cx, cy) -> int:
    """+1 if a, b, c turn counter-clockwise, -1 if clockwise, 0 if collinear."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    if abs(det) > _CCW_BOUND * (abs(detleft) + abs(detright)):
        return _sign(det)
    ax, ay, bx, by, cx, cy = map(Fraction, (ax, ay, bx, by, cx, cy))
    return _sign((ax - cx) * (by - cy) - (ay - cy) * (bx - cx))


def _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    ax, ay, bx, by, cx, cy, dx, dy = map(Fraction, (ax, ay, bx, by, cx, cy, dx, dy))
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return _sign(det)


def incircle(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    """+1 if d lies inside the circle through a, b, c (taken counter-clockwise)."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    cdxady = cdx * ady
    adxcdy = adx * cdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    if abs(det) > _ICC_BOUND * permanent:
        return _sign(det)
    return _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy)


def incircle_sos(pts, rank, a: int, b: int, c: int, d: int) -> int:
    """Perturbed in-circle test on indices into ``pts``; never returns 0
    unless the four points are collinear.

    ``rank[i]`` is the position of point i in the tie-break order.
    """
    (ax, ay), (bx, by), (cx, cy), (dx, dy) = pts[a], pts[b], pts[c], pts[d]
    s = incircle(ax, ay, bx, by, cx, cy, dx, dy)
    if s:
        return s
    # Partial derivatives of the lifted determinant with respect to each
    # point's height, taken in rank order.
    terms = (
        (rank[a], lambda: orient(bx, by, cx, cy, dx, dy)),
        (rank[b], lambda: orient(cx, cy, ax, ay, dx, dy)),
        (rank[c], lambda: orient(ax, ay, bx, by, dx, dy)),
        (rank[d], lambda: -orient(ax, ay, bx, by, cx, cy)),
    )
    for _, coef in sorted(terms, key=lambda t: t[0]):
        s = coef()
        if s:
            return s
    return 0
