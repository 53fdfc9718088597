"""Convex geometry over spaces of m-by-n matrices.

Polytopes of linear operators in V-representation (finite generator
lists), finitely generated cones, support functions, and the small dense
feasibility programs that membership, redundancy, and separation reduce
to.  Everything here is desk scale: a few dozen generators, dimensions
in the single digits, float64 throughout.  The feasibility programs are
solved with scipy's HiGHS backend; minimum-norm projections use an
affine-minimization active-set loop whose result is audited against the
variational optimality condition before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import DimensionMismatchError, UnsupportedDimensionError

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "linop",
    "OperatorPolytope",
    "PolyCone",
    "support",
    "minkowski_sum",
    "convex_union",
    "prune",
    "contains_point",
    "subset",
    "contains_in_sum_with_cone",
    "nearest_point",
    "polar_cone",
    "cone_contains",
    "coordinate_rows",
    "separating_direction",
]

# Dimension cap for the halfspace-insertion polar construction.  The ray
# count can grow combinatorially with n; past single digits a proper
# adjacency-tracking implementation would be needed.
POLAR_DIM_CAP = 8


@dataclass(frozen=True)
class Tolerance:
    """Numeric slack for the geometric predicates.

    eps_geom bounds the max-norm residual accepted by membership and
    inclusion tests; eps_prune bounds the residual at which a generator
    counts as redundant.  Both are absolute, in the units of the operator
    entries.
    """

    eps_geom: float = 1e-9
    eps_prune: float = 1e-9

    def __post_init__(self) -> None:
        if not self.eps_geom > 0.0:
            raise ValueError("eps_geom must be positive")
        if not 0.0 < self.eps_prune <= 1e-6:
            raise ValueError("eps_prune must lie in (0, 1e-6]")


DEFAULT_TOL = Tolerance()


def linop(entries) -> np.ndarray:
    """Validate and return an m-by-n operator matrix as float64."""
    a = np.asarray(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatchError(
            f"operator must be a 2-d matrix, got shape {a.shape}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("operator entries must be finite")
    return a


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OperatorPolytope:
    """Convex hull of finitely many m-by-n matrices, stored as (k, m, n)."""

    gens: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.gens, dtype=float)
        if a.ndim != 3:
            raise DimensionMismatchError(
                f"generator stack must have shape (k, m, n), got {a.shape}"
            )
        k, m, n = a.shape
        if k < 1:
            raise DimensionMismatchError("a polytope needs at least one generator")
        if m < 1 or n < 1:
            raise DimensionMismatchError("operator dims must be at least 1x1")
        if not np.all(np.isfinite(a)):
            raise ValueError("generator entries must be finite")
        object.__setattr__(self, "gens", _freeze(a))

    @classmethod
    def from_generators(cls, generators: Sequence) -> "OperatorPolytope":
        mats = [linop(g) for g in generators]
        if not mats:
            raise DimensionMismatchError("a polytope needs at least one generator")
        shape = mats[0].shape
        for g in mats:
            if g.shape != shape:
                raise DimensionMismatchError(
                    f"generators disagree on dims: {g.shape} vs {shape}"
                )
        return cls(np.stack(mats))

    @classmethod
    def singleton(cls, T) -> "OperatorPolytope":
        return cls(linop(T)[None, :, :])

    @classmethod
    def zero(cls, m: int, n: int) -> "OperatorPolytope":
        return cls(np.zeros((1, m, n)))

    @property
    def dims(self) -> tuple[int, int]:
        return self.gens.shape[1], self.gens.shape[2]

    @property
    def num_generators(self) -> int:
        return self.gens.shape[0]

    @property
    def flat(self) -> np.ndarray:
        """Generators flattened row-major to shape (k, m*n)."""
        return self.gens.reshape(self.gens.shape[0], -1)

    def __repr__(self) -> str:
        m, n = self.dims
        return f"OperatorPolytope(k={self.num_generators}, dims=({m}, {n}))"


@dataclass(frozen=True, eq=False)
class PolyCone:
    """Finitely generated cone of m-by-n matrices; may be the zero cone."""

    gens: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.gens, dtype=float)
        if a.ndim != 3 or a.shape[1] < 1 or a.shape[2] < 1:
            raise DimensionMismatchError(
                f"cone generator stack must have shape (k, m, n), got {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("generator entries must be finite")
        object.__setattr__(self, "gens", _freeze(a))

    @classmethod
    def from_generators(cls, generators: Sequence, dims: Optional[tuple[int, int]] = None) -> "PolyCone":
        mats = [linop(g) for g in generators]
        if not mats:
            if dims is None:
                raise DimensionMismatchError("dims required for an empty cone")
            return cls(np.zeros((0,) + tuple(dims)))
        shape = mats[0].shape
        for g in mats:
            if g.shape != shape:
                raise DimensionMismatchError(
                    f"generators disagree on dims: {g.shape} vs {shape}"
                )
        return cls(np.stack(mats))

    @classmethod
    def trivial(cls, m: int, n: int) -> "PolyCone":
        """The zero cone {0}."""
        return cls(np.zeros((0, m, n)))

    @property
    def dims(self) -> tuple[int, int]:
        return self.gens.shape[1], self.gens.shape[2]

    @property
    def num_generators(self) -> int:
        return self.gens.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.gens.reshape(self.gens.shape[0], -1)

    def __repr__(self) -> str:
        m, n = self.dims
        return f"PolyCone(k={self.num_generators}, dims=({m}, {n}))"


# ---------------------------------------------------------------------------
# support functions


def support(P: OperatorPolytope, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coordinatewise support value and attaining generator indices.

    Returns (value, argmax) where value[j] = max_g (G h)[j] and argmax[j]
    is the index of the first generator attaining it (lowest index on
    ties, which keeps repeated runs byte-identical).
    """
    h = np.asarray(h, dtype=float)
    m, n = P.dims
    if h.shape != (n,):
        raise DimensionMismatchError(f"direction must have shape ({n},), got {h.shape}")
    prods = P.gens @ h  # (k, m)
    return prods.max(axis=0), prods.argmax(axis=0)


def coordinate_rows(P: OperatorPolytope, j: int) -> OperatorPolytope:
    """Restriction of P to output coordinate j, as a 1-by-n polytope.

    The support set of a coordinatewise sublinear map factors through its
    rows, so row polytopes carry everything a single output coordinate
    can see.  Duplicate rows are collapsed.
    """
    m, n = P.dims
    if not 0 <= j < m:
        raise DimensionMismatchError(f"coordinate {j} out of range for m={m}")
    rows = np.unique(P.gens[:, j, :], axis=0)
    return OperatorPolytope(rows[:, None, :])


# ---------------------------------------------------------------------------
# feasibility programs

_LP_OPTIONS = {"presolve": True}


def _lp_min_deviation(
    target: np.ndarray,
    convex_cols: Optional[np.ndarray] = None,
    cone_cols: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Smallest max-norm deviation of target from a convex-plus-conic sum.

    Minimizes t subject to |C lam + K mu - target|_inf <= t, lam >= 0
    summing to one (when a convex block is present), mu >= 0.  Returns
    (t*, lam, mu).  The program is always feasible and bounded, so a
    solver failure is an internal error.
    """
    target = np.asarray(target, dtype=float).ravel()
    d = target.size
    blocks = []
    k1 = k2 = 0
    if convex_cols is not None and convex_cols.size:
        blocks.append(np.asarray(convex_cols, dtype=float))
        k1 = blocks[-1].shape[1]
    if cone_cols is not None and cone_cols.size:
        blocks.append(np.asarray(cone_cols, dtype=float))
        k2 = blocks[-1].shape[1]
    if not blocks:
        # nothing to combine: deviation is just |target|_inf
        return float(np.max(np.abs(target), initial=0.0)), np.zeros(0), np.zeros(0)
    M = np.hstack(blocks)
    nv = k1 + k2 + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    ones = np.ones((d, 1))
    A_ub = np.vstack(
        [np.hstack([M, -ones]), np.hstack([-M, -ones])]
    )
    b_ub = np.concatenate([target, -target])
    A_eq = b_eq = None
    if k1:
        row = np.zeros((1, nv))
        row[0, :k1] = 1.0
        A_eq, b_eq = row, np.array([1.0])
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=(0.0, None), method="highs", options=_LP_OPTIONS,
    )
    if not res.success:
        raise RuntimeError(f"deviation program failed unexpectedly: {res.message}")
    lam = res.x[:k1] if k1 else np.zeros(0)
    mu = res.x[k1 : k1 + k2] if k2 else np.zeros(0)
    return float(res.fun), lam, mu


def separating_direction(
    target: np.ndarray,
    hull_points: np.ndarray,
    cone_rays: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, float]:
    """Direction h with <h, target> exceeding the hull-plus-cone support.

    Maximizes the margin delta subject to <h, target - p> >= delta for
    every hull point p, <h, r> <= 0 for every cone ray r, and
    |h|_inf <= 1.  A strictly positive margin certifies that target lies
    outside conv(points) + cone(rays); the constraints on the rays make h
    usable as a feasible-direction witness.
    """
    target = np.asarray(target, dtype=float).ravel()
    pts = np.asarray(hull_points, dtype=float).reshape(-1, target.size)
    d = target.size
    nv = d + 1  # h, delta
    c = np.zeros(nv)
    c[-1] = -1.0
    rows = []
    rhs = []
    for p in pts:
        row = np.zeros(nv)
        row[:d] = p - target
        row[-1] = 1.0
        rows.append(row)
        rhs.append(0.0)
    if cone_rays is not None:
        for r in np.asarray(cone_rays, dtype=float).reshape(-1, d):
            row = np.zeros(nv)
            row[:d] = r
            rows.append(row)
            rhs.append(0.0)
    bounds = [(-1.0, 1.0)] * d + [(None, None)]
    res = linprog(
        c, A_ub=np.array(rows), b_ub=np.array(rhs),
        bounds=bounds, method="highs", options=_LP_OPTIONS,
    )
    if not res.success:
        raise RuntimeError(f"separation program failed unexpectedly: {res.message}")
    return res.x[:d], float(res.x[-1])


# ---------------------------------------------------------------------------
# pruning

_PRUNE_TIE_TOL = 1e-12


def _certified_vertices(flat: np.ndarray) -> np.ndarray:
    """Boolean mask of generators provably extreme by support sampling.

    A point that is the unique maximizer of some linear functional is a
    vertex and needs no LP.  Directions: the coordinate axes plus a fixed
    pseudorandom batch, so results do not vary between runs.
    """
    k, d = flat.shape
    rng = np.random.default_rng(180451)
    dirs = np.vstack([np.eye(d), -np.eye(d), rng.standard_normal((2 * d + 17, d))])
    scores = flat @ dirs.T  # (k, ndirs)
    best = scores.max(axis=0)
    tie = _PRUNE_TIE_TOL * (1.0 + np.abs(best))
    near = scores >= best - tie
    unique_winner = near.sum(axis=0) == 1
    certified = np.zeros(k, dtype=bool)
    for col in np.nonzero(unique_winner)[0]:
        certified[np.argmax(scores[:, col])] = True
    return certified


def _hull_vertex_indices(flat: np.ndarray) -> Optional[list[int]]:
    """Vertex indices of conv(flat) via qhull, or None when unusable.

    Points are projected onto their affine hull first; ranks 0 and 1 are
    resolved directly, ranks 2..6 go to qhull, anything flatter than
    1e-12 is treated as dimension loss.  Returns None on qhull failure
    or high rank so the caller can fall back to the LP loop.
    """
    k, _ = flat.shape
    center = flat.mean(axis=0)
    shifted = flat - center
    _, s, vt = np.linalg.svd(shifted, full_matrices=False)
    scale = s[0] if s.size else 0.0
    rank = int(np.sum(s > 1e-12 * max(1.0, scale)))
    if rank == 0:
        return [0]
    proj = shifted @ vt[:rank].T
    if rank == 1:
        z = proj[:, 0]
        return sorted({int(np.argmin(z)), int(np.argmax(z))})
    if rank > 6:
        return None
    if k <= rank + 1:
        # Affinely independent: every point is a vertex.
        return list(range(k))
    try:
        hull = ConvexHull(proj)
    except QhullError:
        return None
    return sorted(int(v) for v in hull.vertices)


def _prune_gens(gens: np.ndarray, eps: float) -> np.ndarray:
    k = gens.shape[0]
    if k <= 1:
        return gens
    flat = gens.reshape(k, -1)

    # collapse exact duplicates, keeping first occurrences
    seen: dict[bytes, int] = {}
    order = []
    for i in range(k):
        key = flat[i].tobytes()
        if key not in seen:
            seen[key] = i
            order.append(i)
    flat = flat[order]
    k = len(order)
    if k <= 1:
        return gens[order]

    vertices = _hull_vertex_indices(flat)
    if vertices is not None:
        return gens[[order[i] for i in vertices]]

    certified = _certified_vertices(flat)
    keep = list(range(k))
    for i in range(k):
        if certified[i]:
            continue
        others = [j for j in keep if j != i]
        if not others:
            break
        dev, _, _ = _lp_min_deviation(flat[i], convex_cols=flat[others].T)
        if dev <= eps:
            keep.remove(i)
    return gens[[order[i] for i in keep]]


def prune(P: OperatorPolytope, tol: Tolerance = DEFAULT_TOL) -> OperatorPolytope:
    """Drop generators lying in the convex hull of the others.

    The hull (and therefore every support value) is unchanged; only the
    description shrinks.
    """
    return OperatorPolytope(_prune_gens(np.asarray(P.gens), tol.eps_prune))


# ---------------------------------------------------------------------------
# polytope arithmetic

def _check_same_dims(P: OperatorPolytope, Q: OperatorPolytope) -> None:
    if P.dims != Q.dims:
        raise DimensionMismatchError(f"dims disagree: {P.dims} vs {Q.dims}")


def minkowski_sum(
    P: OperatorPolytope, Q: OperatorPolytope, tol: Tolerance = DEFAULT_TOL
) -> OperatorPolytope:
    """Minkowski sum, as the pruned pairwise sums of generators."""
    _check_same_dims(P, Q)
    m, n = P.dims
    sums = (P.gens[:, None, :, :] + Q.gens[None, :, :, :]).reshape(-1, m, n)
    return OperatorPolytope(_prune_gens(sums, tol.eps_prune))


def convex_union(
    parts: Sequence[OperatorPolytope], tol: Tolerance = DEFAULT_TOL
) -> OperatorPolytope:
    """Convex hull of a union of polytopes: concatenate, then prune."""
    if not parts:
        raise DimensionMismatchError("convex_union needs at least one polytope")
    first = parts[0]
    for P in parts[1:]:
        _check_same_dims(first, P)
    stacked = np.concatenate([P.gens for P in parts])
    return OperatorPolytope(_prune_gens(stacked, tol.eps_prune))


# ---------------------------------------------------------------------------
# membership and inclusion

def contains_point(
    P: OperatorPolytope, T, tol: Tolerance = DEFAULT_TOL
) -> bool:
    """Whether operator T lies in conv(P) within eps_geom in max-norm."""
    T = linop(T)
    if T.shape != tuple(P.dims):
        raise DimensionMismatchError(f"dims disagree: {T.shape} vs {P.dims}")
    dev, _, _ = _lp_min_deviation(T.ravel(), convex_cols=P.flat.T)
    return dev <= tol.eps_geom


def subset(
    P: OperatorPolytope, Q: OperatorPolytope, tol: Tolerance = DEFAULT_TOL
) -> tuple[bool, Optional[np.ndarray]]:
    """Whether conv(P) is contained in conv(Q).

    Generators suffice: the hull of P sits inside conv(Q) exactly when
    every generator does.  Returns (flag, first violating generator).
    """
    _check_same_dims(P, Q)
    for g in P.gens:
        if not contains_point(Q, g, tol):
            return False, g
    return True, None


def contains_in_sum_with_cone(
    T,
    P: OperatorPolytope,
    cones: Sequence[PolyCone],
    tol: Tolerance = DEFAULT_TOL,
) -> tuple[bool, Optional[dict]]:
    """Whether T lies in conv(P) + sum of the given cones.

    On success returns a certificate with the convex weights and one
    coefficient vector per cone, in the order given.
    """
    T = linop(T)
    if T.shape != tuple(P.dims):
        raise DimensionMismatchError(f"dims disagree: {T.shape} vs {P.dims}")
    cols = []
    slices = []
    at = 0
    for K in cones:
        if tuple(K.dims) != tuple(P.dims):
            raise DimensionMismatchError(f"cone dims disagree: {K.dims} vs {P.dims}")
        kk = K.num_generators
        if kk:
            cols.append(K.flat.T)
        slices.append((at, at + kk))
        at += kk
    cone_cols = np.hstack(cols) if cols else None
    dev, lam, mu = _lp_min_deviation(T.ravel(), convex_cols=P.flat.T, cone_cols=cone_cols)
    if dev > tol.eps_geom:
        return False, None
    per_cone = [mu[a:b] if b > a else np.zeros(0) for a, b in slices]
    return True, {"weights": lam, "cone_coeffs": per_cone, "deviation": dev}


def cone_contains(K: PolyCone, T, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Whether T lies in the cone generated by K (the zero cone if empty)."""
    T = linop(T)
    if T.shape != tuple(K.dims):
        raise DimensionMismatchError(f"dims disagree: {T.shape} vs {K.dims}")
    if K.num_generators == 0:
        return bool(np.max(np.abs(T)) <= tol.eps_geom)
    dev, _, _ = _lp_min_deviation(T.ravel(), cone_cols=K.flat.T)
    return dev <= tol.eps_geom


# ---------------------------------------------------------------------------
# nearest point

def _affine_minimizer(pts: np.ndarray) -> np.ndarray:
    """Affine weights minimizing |sum a_i p_i| subject to sum a_i = 1."""
    s = pts.shape[0]
    if s == 1:
        return np.ones(1)
    Q = pts @ pts.T
    M = np.zeros((s + 1, s + 1))
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = Q
    b = np.zeros(s + 1)
    b[0] = 1.0
    sol, *_ = np.linalg.lstsq(M, b, rcond=None)
    return sol[1:]


def _min_norm_point(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm point of conv(points) by affine minimization.

    Wolfe's scheme: grow a corral with the most improving generator,
    minimize over its affine hull, and walk back to the simplex whenever
    the affine minimizer leaves it.  Returns (x, weights over all points).
    """
    k, d = points.shape
    norms2 = np.einsum("ij,ij->i", points, points)
    scale = 1.0 + float(norms2.max(initial=0.0))
    active = [int(np.argmin(norms2))]
    lam = np.ones(1)
    x = points[active[0]].copy()
    for _ in range(16 * k + 64):
        dots = points @ x
        xx = float(x @ x)
        j = int(np.argmin(dots))
        if dots[j] >= xx - 1e-12 * scale:
            break
        if j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            sub = points[active]
            alpha = _affine_minimizer(sub)
            if np.all(alpha >= -1e-12):
                lam = np.clip(alpha, 0.0, None)
                lam /= lam.sum()
                x = lam @ sub
                break
            mask = alpha < 1e-12
            denom = lam - alpha
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 1e-15, lam / denom, np.inf)
            theta = min(1.0, float(ratios[mask].min()))
            lam = (1.0 - theta) * lam + theta * alpha
            lam[lam < 1e-12] = 0.0
            keep = lam > 0.0
            if keep.all():
                keep[int(np.argmin(alpha))] = False
            active = [a for a, kf in zip(active, keep) if kf]
            lam = lam[keep]
            total = lam.sum()
            if total <= 0.0 or not active:
                # degenerate collapse; restart from the best remaining point
                active = [int(np.argmin(norms2))]
                lam = np.ones(1)
                x = points[active[0]].copy()
                break
            lam /= total
    weights = np.zeros(k)
    for a, w in zip(active, lam):
        weights[a] += w
    return x, weights


def nearest_point(
    P: OperatorPolytope, T, tol: Tolerance = DEFAULT_TOL
) -> tuple[np.ndarray, float]:
    """Euclidean projection of T onto conv(P) and its distance.

    The projection p must satisfy <T - p, g - p> <= eps for every
    generator g; the result is audited against that condition and a
    failure raises, since it would invalidate every caller.
    """
    T = linop(T)
    if T.shape != tuple(P.dims):
        raise DimensionMismatchError(f"dims disagree: {T.shape} vs {P.dims}")
    t = T.ravel()
    shifted = P.flat - t
    x, _ = _min_norm_point(shifted)
    p = x + t
    dist = float(np.linalg.norm(x))
    resid = (P.flat - p) @ (t - p)
    spread = float(np.max(np.linalg.norm(P.flat - p, axis=1), initial=0.0))
    audit = max(tol.eps_geom, 1e-10 * (1.0 + dist) * (1.0 + spread))
    if resid.size and float(resid.max()) > audit:
        raise RuntimeError(
            f"projection failed its optimality audit: residual {resid.max():.3e}"
        )
    return p.reshape(P.dims), dist


# ---------------------------------------------------------------------------
# polar cone

def _prune_rays(rays: np.ndarray, eps: float) -> np.ndarray:
    """Remove rays generated by the remaining ones (conic redundancy)."""
    k = rays.shape[0]
    if k <= 1:
        return rays
    keep = list(range(k))
    for i in range(k):
        others = [j for j in keep if j != i]
        if not others:
            break
        dev, _, _ = _lp_min_deviation(rays[i], cone_cols=rays[others].T)
        if dev <= eps:
            keep.remove(i)
    return rays[keep]


def _polar_rays(vectors: np.ndarray, eps: float) -> np.ndarray:
    """Generators of {v : <v, a> <= 0 for all a} by halfspace insertion.

    Starts from the full space (rays +-e_i) and intersects one halfspace
    at a time, combining positive and negative rays into boundary rays.
    Rays are kept unit length; redundancy is cleaned after each step.
    """
    n = vectors.shape[1]
    rays = np.vstack([np.eye(n), -np.eye(n)])
    for a in vectors:
        na = np.linalg.norm(a)
        if na <= 1e-12:
            continue
        a = a / na
        d = rays @ a
        zero_tol = 1e-12
        kept = rays[d <= zero_tol]
        plus = np.nonzero(d > zero_tol)[0]
        minus = np.nonzero(d < -zero_tol)[0]
        new = []
        for ip in plus:
            for im in minus:
                w = d[ip] * rays[im] - d[im] * rays[ip]
                nw = np.linalg.norm(w)
                if nw > 1e-12:
                    new.append(w / nw)
        if new:
            rays = np.vstack([kept, np.array(new)])
        else:
            rays = kept
        if rays.shape[0] == 0:
            return rays.reshape(0, n)
        rays = np.unique(np.round(rays, 12), axis=0)
        rays = _prune_rays(rays, eps)
    return rays


def polar_cone(K: PolyCone, m: int, tol: Tolerance = DEFAULT_TOL) -> PolyCone:
    """Operators sending the direction cone K into the nonpositive orthant.

    K holds direction vectors of R^n as 1-by-n generators.  The result is
    the cone of m-by-n operators T with T k <= 0 componentwise for every
    k in K; its generators are single-row lifts of the vector polar.  For
    K = {0} the polar is the full operator space.
    """
    km, n = K.dims
    if km != 1:
        raise DimensionMismatchError("polar_cone expects a cone of 1-by-n directions")
    if n > POLAR_DIM_CAP:
        raise UnsupportedDimensionError(
            f"polar construction is capped at n <= {POLAR_DIM_CAP}, got n = {n}"
        )
    if m < 1:
        raise DimensionMismatchError("output dim m must be at least 1")
    vecs = K.gens.reshape(-1, n)
    rays = _polar_rays(vecs, tol.eps_geom)
    if rays.shape[0] == 0:
        return PolyCone.trivial(m, n)
    lifted = np.zeros((m * rays.shape[0], m, n))
    idx = 0
    for j in range(m):
        for v in rays:
            lifted[idx, j, :] = v
            idx += 1
    return PolyCone(lifted)
