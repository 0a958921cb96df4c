"""Algebra of energy wells.

A well is the orbit SO(n)U of a symmetric positive definite matrix U under
left multiplication by rotations. This module provides distances to single
rotations and to unions of wells, the twin (rank-one connection) solver for
n = 2, and the incompatibility constant that measures how far apart two
wells stay when their difference is probed only along directions tangent to
a facet whose normal avoids all twin normals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import golden_min

SYMMETRY_TOL = 1e-12
ROTATION_TOL = 1e-10
RESIDUAL_RTOL = 1e-9


class WellSetError(ValueError):
    """Raised for invalid well data or infeasible configuration parameters."""


def rotation_2d(theta):
    """Counterclockwise rotation matrix for angle theta (radians)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_rotation(rng, n):
    """Haar-ish random element of SO(n) via QR with positive diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def polar_rotation(m):
    """Frobenius-nearest rotation to a square matrix (special orthogonal).

    Uses the SVD; if det(m) < 0 the smallest singular direction is flipped
    so the result always has determinant +1.
    """
    m = np.asarray(m, dtype=float)
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    flip = np.ones(m.shape[0])
    flip[-1] = d
    return (u * flip) @ vt


def _check_finite(f):
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise WellSetError("matrix has non-finite entries")
    return f


def dist_to_son(f):
    """Frobenius distance of a square matrix to the rotation group SO(n).

    Computed from the singular values: if det(f) >= 0 the distance is
    ||sigma - 1||_2, otherwise the smallest singular value is sign-flipped
    before differencing.
    """
    f = _check_finite(f)
    return float(dist_to_son_batch(f[None])[0])


def dist_to_son_batch(fs):
    """Vectorized dist_to_son over an array of shape (..., n, n)."""
    fs = np.asarray(fs, dtype=float)
    sigma = np.linalg.svd(fs, compute_uv=False)
    neg = np.linalg.det(fs) < 0
    sigma = sigma.copy()
    # svd returns singular values in descending order; flip the smallest
    sigma[neg, -1] = -sigma[neg, -1]
    return np.linalg.norm(sigma - 1.0, axis=-1)


def _procrustes_rotation_batch(ms):
    """argmax over Q in SO(n) of tr(Q^T M), batched over (..., n, n)."""
    u, _, vt = np.linalg.svd(ms)
    sign = np.where(np.linalg.det(ms) < 0, -1.0, 1.0)
    u = u.copy()
    u[..., :, -1] *= sign[..., None]
    return u @ vt


def dist_to_single_well(f, u):
    """min over rotations R of |f - R u|_F for a single well matrix u."""
    f = _check_finite(f)
    return float(dist_to_single_well_batch(f[None], u)[0])


def dist_to_single_well_batch(fs, u):
    # evaluate at the optimal rotation and measure the residual directly;
    # the expanded form |F|^2 + |U|^2 - 2 tr cancels catastrophically when
    # the distance is tiny
    fs = np.asarray(fs, dtype=float)
    u = np.asarray(u, dtype=float)
    rot = _procrustes_rotation_batch(fs @ u.T)
    return np.linalg.norm(fs - rot @ u, axis=(-2, -1))


def dist_to_wells(f, wells):
    """Distance to the union of wells and the index of the nearest well.

    Returns (distance, well_index); ties resolve to the lowest index.
    """
    f = _check_finite(f)
    d, j = dist_to_wells_batch(f[None], wells)
    return float(d[0]), int(j[0])


def dist_to_wells_batch(fs, wells):
    fs = np.asarray(fs, dtype=float)
    dists = np.stack(
        [dist_to_single_well_batch(fs, u) for u in wells.matrices], axis=-1
    )
    idx = np.argmin(dists, axis=-1)
    return np.take_along_axis(dists, idx[..., None], axis=-1)[..., 0], idx


def well_distance(wells, i, j):
    """min over rotations Q of |U_i - Q U_j|_F (distance between two wells)."""
    if i == j:
        raise WellSetError("well_distance requires two distinct wells")
    return dist_to_single_well(wells.matrices[i], wells.matrices[j])


@dataclass
class RankOneConnection:
    """A twin: rotation Q and vectors a, b with U_i - Q U_j = a (x) b.

    b is a unit vector with its first nonzero component positive;
    multiplicity 2 marks a degenerate double root of the twin equation.
    """

    i: int
    j: int
    rotation: np.ndarray
    a: np.ndarray
    b: np.ndarray
    multiplicity: int = 1

    def residual(self, wells):
        diff = wells.matrices[self.i] - self.rotation @ wells.matrices[self.j]
        return float(np.linalg.norm(diff - np.outer(self.a, self.b)))

    def to_dict(self):
        return {
            "i": self.i,
            "j": self.j,
            "Q": self.rotation.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "multiplicity": self.multiplicity,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            i=int(d["i"]),
            j=int(d["j"]),
            rotation=np.asarray(d["Q"], dtype=float),
            a=np.asarray(d["a"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
            multiplicity=int(d.get("multiplicity", 1)),
        )


@dataclass
class RankOneSolution:
    """All twins between a pair of wells, plus any trivial coincidences.

    trivial_rotations lists rotations Q with U_i = Q U_j exactly (same
    well); those are reported separately and never as connections.
    """

    connections: list[RankOneConnection] = field(default_factory=list)
    trivial_rotations: list[np.ndarray] = field(default_factory=list)


class WellSet:
    """An ordered family of pairwise distinct SPD well matrices.

    The pairwise well separation is computed on construction. The
    incompatibility constant (and the combined constant c0 used as a
    classification threshold) become available once compute_dbar has run.
    """

    def __init__(self, matrices, delta0=None):
        mats = [np.asarray(m, dtype=float) for m in matrices]
        if not mats:
            raise WellSetError("need at least one well")
        n = mats[0].shape[0]
        if n < 2:
            raise WellSetError("wells must be at least 2x2")
        for k, u in enumerate(mats):
            if u.shape != (n, n):
                raise WellSetError(f"well {k} is not {n}x{n}")
            if not np.all(np.isfinite(u)):
                raise WellSetError(f"well {k} has non-finite entries")
            if np.max(np.abs(u - u.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(u))):
                raise WellSetError(f"well {k} is not symmetric")
            if np.min(np.linalg.eigvalsh(u)) <= 0:
                raise WellSetError(f"well {k} is not positive definite")
        for a in range(len(mats)):
            for b in range(a + 1, len(mats)):
                if np.linalg.norm(mats[a] - mats[b]) == 0.0:
                    raise WellSetError(f"wells {a} and {b} coincide")
        self.dim = n
        self.matrices = mats
        self.delta0 = delta0
        self.connections = None  # populated by solve_all_connections
        self.incompat_dbar = None  # populated by compute_dbar
        if len(mats) == 1:
            self.separation_d = math.inf
        else:
            self.separation_d = min(
                dist_to_single_well(mats[a], mats[b])
                for a in range(len(mats))
                for b in range(a + 1, len(mats))
            )
            if self.separation_d <= 0:
                raise WellSetError("two wells lie on the same rotation orbit")

    @property
    def k(self):
        return len(self.matrices)

    @property
    def c0(self):
        """min of the well separation and the incompatibility constant.

        None until compute_dbar has populated incompat_dbar.
        """
        if self.incompat_dbar is None:
            return None
        return min(self.separation_d, self.incompat_dbar)

    def twin_normals(self):
        """Unit normals b of all solved rank-one connections."""
        if self.connections is None:
            raise WellSetError("rank-one connections not solved yet")
        return [c.b for c in self.connections]

    def to_json(self):
        doc = {
            "dim": self.dim,
            "wells": [u.tolist() for u in self.matrices],
        }
        if self.delta0 is not None:
            doc["delta0"] = self.delta0
        derived = {}
        if self.separation_d is not None:
            derived["d"] = None if math.isinf(self.separation_d) else self.separation_d
        if self.incompat_dbar is not None:
            derived["dbar"] = (
                None if math.isinf(self.incompat_dbar) else self.incompat_dbar
            )
            c0 = self.c0
            derived["c0"] = None if math.isinf(c0) else c0
        if self.connections is not None:
            derived["connections"] = [c.to_dict() for c in self.connections]
        if derived:
            doc["derived"] = derived
        return doc

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        ws = cls(doc["wells"], delta0=doc.get("delta0"))
        if ws.dim != int(doc["dim"]):
            raise WellSetError("declared dim does not match well shapes")
        derived = doc.get("derived")
        if derived and "connections" in derived:
            ws.connections = [
                RankOneConnection.from_dict(c) for c in derived["connections"]
            ]
        if derived and derived.get("dbar") is not None:
            ws.incompat_dbar = float(derived["dbar"])
        return ws


def _canonical_sign(a, b):
    """Flip (a, b) together so b's first nonzero component is positive."""
    nz = np.nonzero(np.abs(b) > 1e-12)[0]
    if len(nz) and b[nz[0]] < 0:
        return -a, -b
    return a, b


def solve_rank_one(wells, i, j, grid_size=4096):
    """Find all twins between wells i and j of a well set (n = 2 only)."""
    if i == j:
        raise WellSetError("solve_rank_one requires two distinct wells")
    if wells.dim != 2:
        raise WellSetError("rank-one solver implemented for n = 2 only")
    sol = twin_solve(wells.matrices[i], wells.matrices[j], grid_size=grid_size)
    for conn in sol.connections:
        conn.i, conn.j = i, j
    return sol


def twin_solve(ui, uj, grid_size=4096):
    """Find all twins between two matrices: U_i - Q U_j = a (x) b.

    Roots of det(U_i - Q(theta) U_j) = 0 are bracketed by sign changes on a
    theta grid and polished by bisection. For each root the rank-one
    difference is factored as a (x) b via SVD. Roots where the difference
    vanishes entirely (identical wells up to rotation) are reported as
    trivial rotations, not connections. A root touched without a sign
    change (tangency) is returned with multiplicity 2.
    """
    ui = np.asarray(ui, dtype=float)
    uj = np.asarray(uj, dtype=float)
    if ui.shape != (2, 2) or uj.shape != (2, 2):
        raise WellSetError("twin solver implemented for n = 2 only")
    scale = np.linalg.norm(ui)

    thetas = np.linspace(0.0, 2.0 * np.pi, grid_size, endpoint=False)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    # det(U_i - Q U_j) is alpha + beta cos(theta) + gamma sin(theta) for n=2,
    # but evaluate it directly so the bracketing stays structure-agnostic.
    q00 = cos_t * uj[0, 0] - sin_t * uj[1, 0]
    q01 = cos_t * uj[0, 1] - sin_t * uj[1, 1]
    q10 = sin_t * uj[0, 0] + cos_t * uj[1, 0]
    q11 = sin_t * uj[0, 1] + cos_t * uj[1, 1]
    f = (ui[0, 0] - q00) * (ui[1, 1] - q11) - (ui[0, 1] - q01) * (ui[1, 0] - q10)

    def det_at(theta):
        q = rotation_2d(theta)
        return float(np.linalg.det(ui - q @ uj))

    roots = []
    step = 2.0 * np.pi / grid_size
    for k in range(grid_size):
        fk, fk1 = f[k], f[(k + 1) % grid_size]
        if fk == 0.0:
            # an exact grid hit is a double root when the determinant only
            # touches zero (no sign change across the neighbors)
            mult = 2 if f[(k - 1) % grid_size] * fk1 > 0.0 else 1
            roots.append((thetas[k], mult))
            continue
        if fk * fk1 < 0.0:
            lo, hi = thetas[k], thetas[k] + step
            flo = fk
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                fm = det_at(mid)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if flo * fm < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append((0.5 * (lo + hi), 1))

    # tangential (double) roots: local minima of |f| that reach ~0 without
    # a sign change near them
    absf = np.abs(f)
    det_scale = max(scale * np.linalg.norm(uj), 1e-30)
    for k in range(grid_size):
        prev_i, next_i = (k - 1) % grid_size, (k + 1) % grid_size
        if absf[k] <= absf[prev_i] and absf[k] <= absf[next_i]:
            if absf[k] < 1e-6 * det_scale:
                theta0 = thetas[k]
                if any(_ang_close(theta0, r, 2.5 * step) for r, _ in roots):
                    continue
                t_star, f_star = golden_min(
                    lambda t: abs(det_at(t)), theta0 - step, theta0 + step, tol=1e-14
                )
                if abs(f_star) < 1e-10 * det_scale:
                    roots.append((t_star % (2.0 * np.pi), 2))

    out = RankOneSolution()
    for theta, mult in roots:
        q = rotation_2d(theta)
        c = ui - q @ uj
        u_svd, sv, vt = np.linalg.svd(c)
        if sv[0] <= RESIDUAL_RTOL * scale:
            out.trivial_rotations.append(q)
            continue
        a = sv[0] * u_svd[:, 0]
        b = vt[0]
        a, b = _canonical_sign(a, b)
        conn = RankOneConnection(i=0, j=1, rotation=q, a=a, b=b, multiplicity=mult)
        # post-conditions of the factorization
        if np.linalg.norm(q.T @ q - np.eye(2)) > ROTATION_TOL:
            raise WellSetError("twin rotation drifted off SO(2)")
        if np.linalg.norm(c - np.outer(a, b)) > RESIDUAL_RTOL * scale:
            raise WellSetError("rank-one factorization residual too large")
        out.connections.append(conn)
    return out


def _ang_close(t0, t1, tol):
    d = abs((t0 - t1) % (2.0 * np.pi))
    return min(d, 2.0 * np.pi - d) < tol


def solve_all_connections(wells, grid_size=4096):
    """Solve twins for every well pair and store them on the well set."""
    conns = []
    for i in range(wells.k):
        for j in range(i + 1, wells.k):
            conns.extend(solve_rank_one(wells, i, j, grid_size=grid_size).connections)
    wells.connections = conns
    return conns


def admissible_normal_intervals(twin_normals, delta0):
    """Admissible angle intervals for facet normals on the half-circle.

    A normal b(phi) = (cos phi, sin phi), phi in [0, pi), is admissible when
    |b . t| <= 1 - delta0 for every twin normal t. Returns a list of closed
    [lo, hi] intervals; empty when delta0 excludes everything.
    """
    if not 0.0 < delta0 < 1.0:
        raise WellSetError("delta0 must lie in (0, 1)")
    if not twin_normals:
        return [(0.0, np.pi)]
    beta = math.acos(1.0 - delta0)
    forbidden = []
    for t in twin_normals:
        alpha = math.atan2(t[1], t[0]) % math.pi
        forbidden.append(((alpha - beta) % math.pi, (alpha + beta) % math.pi))
    # subtract (possibly wrapped) open arcs from [0, pi)
    events = []
    for lo, hi in forbidden:
        if lo <= hi:
            events.append((lo, hi))
        else:
            events.append((0.0, hi))
            events.append((lo, math.pi))
    events.sort()
    allowed = []
    cursor = 0.0
    for lo, hi in events:
        if lo > cursor:
            allowed.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < math.pi:
        allowed.append((cursor, math.pi))
    return [(lo, hi) for lo, hi in allowed if hi - lo > 1e-12]


def compute_dbar(
    wells, delta0, twin_normals=None, q_grid=8192, b_grid=None, store=True
):
    """Incompatibility constant of a well set for a given margin delta0.

    For every pair of distinct wells this minimizes, over rotations Q and
    over unit normals b that keep the angle margin delta0 from every twin
    normal, the largest stretch of (U_i1 - Q U_i2) along the tangent frame
    orthogonal to b. Rotations and normals are scanned on grids and the
    best candidates are polished with golden-section refinement.

    A single well has nothing to separate: the result is +inf. The result
    is stored on the well set (with the delta0 used) unless store=False.
    """
    if wells.dim != 2:
        raise WellSetError("compute_dbar implemented for n = 2")
    if not 0.0 < delta0 < 1.0:
        raise WellSetError("delta0 must lie in (0, 1)")
    if wells.k == 1:
        if store:
            wells.incompat_dbar = math.inf
            wells.delta0 = delta0
        return math.inf
    if twin_normals is None:
        twin_normals = wells.twin_normals()
    intervals = admissible_normal_intervals(twin_normals, delta0)
    if not intervals:
        raise WellSetError(
            f"delta0={delta0} leaves no admissible facet normal directions"
        )

    if b_grid is None:
        b_grid = max(q_grid // 16, 512)
    thetas = np.linspace(0.0, 2.0 * np.pi, q_grid, endpoint=False)
    rots = np.empty((q_grid, 2, 2))
    rots[:, 0, 0] = np.cos(thetas)
    rots[:, 0, 1] = -np.sin(thetas)
    rots[:, 1, 0] = np.sin(thetas)
    rots[:, 1, 1] = np.cos(thetas)

    phis_parts = []
    total_len = sum(hi - lo for lo, hi in intervals)
    for lo, hi in intervals:
        count = max(8, int(round(b_grid * (hi - lo) / total_len)))
        phis_parts.append(np.linspace(lo, hi, count))
    phis = np.concatenate(phis_parts)
    sin2, cos2 = np.sin(phis) ** 2, np.cos(phis) ** 2
    sincos = np.sin(phis) * np.cos(phis)

    best = math.inf
    for i1 in range(wells.k):
        for i2 in range(i1 + 1, wells.k):
            u1, u2 = wells.matrices[i1], wells.matrices[i2]
            diffs = u1[None] - rots @ u2  # (q_grid, 2, 2)
            # |M tau(phi)|^2 with tau = (-sin, cos) is a quadratic form in
            # the columns of M: g11 sin^2 + g22 cos^2 - 2 g12 sin cos
            g11 = (diffs[:, :, 0] ** 2).sum(axis=1)
            g22 = (diffs[:, :, 1] ** 2).sum(axis=1)
            g12 = (diffs[:, :, 0] * diffs[:, :, 1]).sum(axis=1)

            def value(theta, phi, _u1=u1, _u2=u2):
                m = _u1 - rotation_2d(theta) @ _u2
                tau = np.array([-math.sin(phi), math.cos(phi)])
                return float(np.linalg.norm(m @ tau))

            # coarse grid, chunked over theta to bound memory
            grid_best = math.inf
            grid_arg = (0.0, 0.0)
            chunk = max(1, 4_000_000 // max(len(phis), 1))
            for s in range(0, q_grid, chunk):
                vals = (
                    g11[s : s + chunk, None] * sin2[None, :]
                    + g22[s : s + chunk, None] * cos2[None, :]
                    - 2.0 * g12[s : s + chunk, None] * sincos[None, :]
                )
                flat = np.argmin(vals)
                ci, pi = np.unravel_index(flat, vals.shape)
                if vals[ci, pi] < grid_best**2:
                    grid_best = float(math.sqrt(max(vals[ci, pi], 0.0)))
                    grid_arg = (float(thetas[s + ci]), float(phis[pi]))

            # alternate golden refinements in theta and phi, phi clamped to
            # its admissible interval
            theta_star, phi_star = grid_arg
            pair_best = grid_best
            dt = 2.0 * np.pi / q_grid
            dp = math.pi / max(len(phis), 1)
            for _ in range(4):
                theta_star, pair_best = golden_min(
                    lambda t: value(t, phi_star), theta_star - 2 * dt, theta_star + 2 * dt
                )
                lo, hi = _enclosing_interval(intervals, phi_star)
                phi_star, pair_best = golden_min(
                    lambda p: value(theta_star, p),
                    max(lo, phi_star - 2 * dp),
                    min(hi, phi_star + 2 * dp),
                )
            best = min(best, pair_best)

    if store:
        wells.incompat_dbar = best
        wells.delta0 = delta0
    return best


def _enclosing_interval(intervals, phi):
    phi = phi % math.pi
    for lo, hi in intervals:
        if lo - 1e-12 <= phi <= hi + 1e-12:
            return lo, hi
    # fall back to the nearest interval
    return min(intervals, key=lambda iv: min(abs(phi - iv[0]), abs(phi - iv[1])))
