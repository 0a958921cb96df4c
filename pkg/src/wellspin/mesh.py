"""Structured simplicial meshes of box domains.

Each lattice cube of side 1/m is subdivided into n! simplices along the
main diagonal (Kuhn subdivision), so the facet normal directions form a
fixed finite set and all shape constants are exact and independent of m.
The reference lattice may be rotated before clipping to the domain; cells
that straddle the boundary are dropped, so the effective domain is the
union of kept cells. Optional vertex jitter (interior vertices only)
exercises non-uniform but still conforming meshes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import golden_min
from .wells import rotation_2d


class MeshError(ValueError):
    """Invalid mesh construction parameters."""


class MeshResourceError(MeshError):
    """Requested mesh exceeds the configured cell budget."""


@dataclass
class MeshConstants:
    """Scale-free non-degeneracy constants of a mesh.

    Volumes satisfy vol_lower * m^-n <= |T| <= vol_upper * m^-n, the
    scaled inradius is at least inradius_lower and the scaled diameter at
    most diameter_upper.
    """

    vol_lower: float
    vol_upper: float
    inradius_lower: float
    diameter_upper: float


@dataclass
class IncompatibilityReport:
    ok: bool
    worst_alignment: float
    delta0: float
    offenders: list = field(default_factory=list)


@dataclass
class AdmissibleRotation:
    rotation: np.ndarray
    angle: float
    margin: float
    sufficient: bool | None = None  # margin > delta0, when delta0 was given


def _batched_det(a):
    """Determinants by explicit cofactor expansion for n <= 3.

    LU-based determinants are not exact under power-of-two rescaling of the
    input, which would break the exact scale invariance of mesh constants;
    the explicit formulas are.
    """
    k = a.shape[-1]
    if k == 1:
        return a[..., 0, 0]
    if k == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if k == 3:
        return (
            a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
            - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
            + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
        )
    return np.linalg.det(a)


def kuhn_reference_normals(n):
    """The n(n+1)/2 distinct facet normal directions of the reference
    Kuhn mesh: axis normals e_i and diagonal normals (e_i - e_j)/sqrt(2)."""
    normals = [np.eye(n)[i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            v = np.zeros(n)
            v[i], v[j] = 1.0, -1.0
            normals.append(v / np.sqrt(2.0))
    return np.array(normals)


def _canonical_direction(v, decimals=10):
    v = np.asarray(v, dtype=float)
    nz = np.nonzero(np.abs(v) > 1e-9)[0]
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return tuple(np.round(v, decimals))


class SimplicialMesh:
    """Simplicial mesh with full facet geometry.

    Arrays:
      vertices      (V, n) float
      cells         (C, n+1) int vertex indices
      volumes       (C,) float
      barycenters   (C, n) float
      facet_vertices (F, n) int
      facet_area    (F,) float
      facet_normal  (F, n) float, oriented away from facet_cells[:, 0]
      facet_tangent (F, n, n-1) float orthonormal tangent basis
      facet_cells   (F, 2) int, second entry -1 on the domain boundary
    """

    def __init__(self, dim, m, domain, lattice_rotation, vertices, cells):
        self.dim = dim
        self.m = m
        self.domain = (np.asarray(domain[0], float), np.asarray(domain[1], float))
        self.lattice_rotation = np.asarray(lattice_rotation, float)
        self.vertices = vertices
        self.cells = cells
        self._compute_cell_geometry()
        self._build_facets()
        self._compute_facet_geometry()
        self._constants = None

    # -- construction helpers -------------------------------------------

    def _compute_cell_geometry(self):
        verts = self.vertices[self.cells]  # (C, n+1, n)
        edges = verts[:, 1:, :] - verts[:, :1, :]  # (C, n, n)
        dets = _batched_det(edges)
        self.volumes = np.abs(dets) / math.factorial(self.dim)
        if np.any(self.volumes <= 0):
            raise MeshError("degenerate cell with zero volume")
        self.barycenters = verts.mean(axis=1)

    def _build_facets(self):
        n = self.dim
        facet_map = {}
        order = []
        for ci, cell in enumerate(self.cells):
            for omit in range(n + 1):
                fverts = tuple(sorted(np.delete(cell, omit)))
                if fverts in facet_map:
                    facet_map[fverts].append(ci)
                else:
                    facet_map[fverts] = [ci]
                    order.append(fverts)
        fv = np.array(order, dtype=np.int64)
        fc = np.full((len(order), 2), -1, dtype=np.int64)
        for fi, key in enumerate(order):
            owners = facet_map[key]
            if len(owners) > 2:
                raise MeshError("facet shared by more than two cells")
            fc[fi, : len(owners)] = owners
        self.facet_vertices = fv
        self.facet_cells = fc
        self.interior = np.nonzero(fc[:, 1] >= 0)[0]
        self.boundary = np.nonzero(fc[:, 1] < 0)[0]

    def _compute_facet_geometry(self):
        n = self.dim
        pts = self.vertices[self.facet_vertices]  # (F, n, n)
        edges = pts[:, 1:, :] - pts[:, :1, :]  # (F, n-1, n)
        gram = edges @ np.swapaxes(edges, 1, 2)
        self.facet_area = np.sqrt(np.abs(_batched_det(gram))) / math.factorial(n - 1)
        _, _, vt = np.linalg.svd(edges)
        normals = vt[:, -1, :]  # (F, n)
        tangents = np.swapaxes(vt[:, : n - 1, :], 1, 2)  # (F, n, n-1)
        # orient away from the opposite vertex of the first adjacent cell
        fbary = pts.mean(axis=1)
        opp = np.empty((len(normals), n))
        for fi in range(len(normals)):
            cell = self.cells[self.facet_cells[fi, 0]]
            fset = set(self.facet_vertices[fi].tolist())
            for v in cell:
                if int(v) not in fset:
                    opp[fi] = self.vertices[v]
                    break
        flip = np.einsum("fi,fi->f", normals, fbary - opp) < 0
        normals[flip] = -normals[flip]
        self.facet_normal = normals
        self.facet_tangent = tangents

    # -- queries ---------------------------------------------------------

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def facet_barycenters(self):
        return self.vertices[self.facet_vertices].mean(axis=1)

    @property
    def effective_volume(self):
        return float(self.volumes.sum())

    @property
    def constants(self):
        if self._constants is None:
            n = self.dim
            verts = self.vertices[self.cells]
            d2 = (
                (verts[:, :, None, :] - verts[:, None, :, :]) ** 2
            ).sum(-1)
            diam = np.sqrt(d2.max(axis=(1, 2)))
            surf = np.zeros(self.n_cells)
            for fi in range(len(self.facet_area)):
                surf[self.facet_cells[fi, 0]] += self.facet_area[fi]
                if self.facet_cells[fi, 1] >= 0:
                    surf[self.facet_cells[fi, 1]] += self.facet_area[fi]
            inradius = n * self.volumes / surf
            self._constants = MeshConstants(
                vol_lower=float(self.volumes.min() * self.m**n),
                vol_upper=float(self.volumes.max() * self.m**n),
                inradius_lower=float((inradius * self.m).min()),
                diameter_upper=float((diam * self.m).max()),
            )
        return self._constants

    def normal_directions(self):
        """Distinct facet normal directions as unit vectors.

        Signs are canonical (first sizable component positive); vectors are
        deduplicated on 10 decimals but returned unrounded, sorted by the
        rounded key for determinism.
        """
        reps = {}
        for v in self.facet_normal:
            nz = np.nonzero(np.abs(v) > 1e-9)[0]
            vec = -v if len(nz) and v[nz[0]] < 0 else v
            reps.setdefault(tuple(np.round(vec, 10)), vec)
        return np.array([reps[k] for k in sorted(reps)])

    def adjacency(self):
        """Neighbor cell ids across shared facets, one list per cell."""
        neigh = [[] for _ in range(self.n_cells)]
        for a, b in self.facet_cells[self.interior]:
            neigh[a].append(int(b))
            neigh[b].append(int(a))
        return neigh

    def summary(self):
        c = self.constants
        return {
            "dim": self.dim,
            "m": self.m,
            "n_vertices": int(len(self.vertices)),
            "n_cells": int(self.n_cells),
            "n_facets": int(len(self.facet_area)),
            "n_interior_facets": int(len(self.interior)),
            "effective_volume": self.effective_volume,
            "domain": [self.domain[0].tolist(), self.domain[1].tolist()],
            "lattice_rotation": self.lattice_rotation.tolist(),
            "constants": {
                "vol_lower": c.vol_lower,
                "vol_upper": c.vol_upper,
                "inradius_lower": c.inradius_lower,
                "diameter_upper": c.diameter_upper,
            },
            "normal_directions": [list(d) for d in self.normal_directions()],
        }

    def write_binary(self, path):
        """Dump the mesh as little-endian binary.

        Layout: int64[4] header (dim, n_vertices, n_cells, n+1), then
        float64 vertex coordinates row-major, then int64 cell vertex ids
        row-major.
        """
        with open(path, "wb") as fh:
            header = np.array(
                [self.dim, len(self.vertices), self.n_cells, self.dim + 1],
                dtype="<i8",
            )
            fh.write(header.tobytes())
            fh.write(self.vertices.astype("<f8").tobytes())
            fh.write(self.cells.astype("<i8").tobytes())


def build_kuhn_mesh(
    n,
    m,
    domain=None,
    lattice_rotation=None,
    jitter=0.0,
    rng=None,
    max_cells=4_000_000,
):
    """Build the Kuhn mesh of a box at scale 1/m.

    The reference lattice is rotated by lattice_rotation (an element of
    SO(n)) before clipping: cells with any vertex outside the closed box
    are dropped. jitter, in units of 1/m and at most 0.2, displaces
    interior vertices uniformly; the mesh stays conforming because cells
    share the moved vertices.
    """
    if m < 2:
        raise MeshError("need m >= 2")
    if domain is None:
        domain = (np.zeros(n), np.ones(n))
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
        raise MeshError("domain must be a nonempty box (lo, hi)")
    if lattice_rotation is None:
        rot = np.eye(n)
    else:
        rot = np.asarray(lattice_rotation, dtype=float)
        if np.linalg.norm(rot.T @ rot - np.eye(n)) > 1e-10 or np.linalg.det(rot) < 0:
            raise MeshError("lattice_rotation must be a rotation")
    if jitter < 0 or jitter > 0.2:
        raise MeshError("jitter must lie in [0, 0.2] (units of 1/m)")

    corners = np.array(list(itertools.product(*zip(lo, hi))))
    lat_corners = corners @ rot * m  # R^T c * m, rowwise
    lat_lo = np.floor(lat_corners.min(axis=0)).astype(int) - 1
    lat_hi = np.ceil(lat_corners.max(axis=0)).astype(int) + 1

    n_cubes = int(np.prod(lat_hi - lat_lo))
    est_cells = n_cubes * math.factorial(n)
    if est_cells > max_cells:
        raise MeshResourceError(
            f"estimated {est_cells} cells exceeds budget {max_cells}"
        )

    perms = list(itertools.permutations(range(n)))
    paths = []
    for perm in perms:
        steps = np.zeros((n + 1, n), dtype=int)
        for k, axis in enumerate(perm):
            steps[k + 1] = steps[k]
            steps[k + 1, axis] += 1
        paths.append(steps)

    vertex_ids = {}
    coords = []
    tol = 1e-12 * max(1.0, float(np.max(np.abs(np.concatenate([lo, hi])))))

    def vid(key):
        out = vertex_ids.get(key)
        if out is None:
            out = len(coords)
            vertex_ids[key] = out
            coords.append(rot @ (np.array(key, dtype=float) / m))
        return out

    cells = []
    ranges = [range(lat_lo[a], lat_hi[a]) for a in range(n)]
    for cube in itertools.product(*ranges):
        base = np.array(cube, dtype=int)
        for steps in paths:
            keys = [tuple(base + s) for s in steps]
            pts = np.array([coords[vid(k)] for k in keys])
            if np.all(pts >= lo - tol) and np.all(pts <= hi + tol):
                cells.append([vertex_ids[k] for k in keys])

    if not cells:
        raise MeshError("no cells inside the domain (domain too small for m)")

    vertices = np.array(coords)
    cells = np.array(cells, dtype=np.int64)
    used = np.unique(cells)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = vertices[used]
    cells = remap[cells]

    if jitter > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        boundary_verts = _boundary_vertices(cells, n)
        mask = np.ones(len(vertices), dtype=bool)
        mask[list(boundary_verts)] = False
        disp = rng.uniform(-jitter / m, jitter / m, size=vertices.shape)
        vertices = vertices + disp * mask[:, None]

    return SimplicialMesh(n, m, (lo, hi), rot, vertices, cells)


def _boundary_vertices(cells, n):
    counts = {}
    for cell in cells:
        for omit in range(n + 1):
            key = tuple(sorted(np.delete(cell, omit)))
            counts[key] = counts.get(key, 0) + 1
    out = set()
    for key, c in counts.items():
        if c == 1:
            out.update(key)
    return out


def check_incompatibility(mesh, wells, delta0):
    """Report whether every facet normal keeps the margin delta0 from
    every twin normal of the well set: |b_facet . b_twin| <= 1 - delta0.

    A pure report; experiment drivers decide whether to refuse to run.
    """
    if wells.connections is None:
        raise MeshError("solve rank-one connections before checking the mesh")
    twins = [c.b for c in wells.connections]
    if not twins:
        return IncompatibilityReport(ok=True, worst_alignment=0.0, delta0=delta0)
    normals = mesh.normal_directions()
    twins = np.array(twins)
    align = np.minimum(np.abs(normals @ twins.T), 1.0)
    worst = float(align.max())
    offenders = []
    bad = np.argwhere(align > 1.0 - delta0)
    for fi, ti in bad:
        offenders.append(
            {
                "facet_normal": normals[fi].tolist(),
                "twin_normal": twins[ti].tolist(),
                "alignment": float(align[fi, ti]),
            }
        )
    return IncompatibilityReport(
        ok=worst <= 1.0 - delta0,
        worst_alignment=worst,
        delta0=delta0,
        offenders=offenders,
    )


def find_admissible_rotation(wells, delta0=None, angle_grid_size=4096):
    """Search lattice rotations (n = 2) maximizing the incompatibility
    margin min over (facet normal, twin normal) pairs of 1 - |b . b_twin|.

    Scans angles in [0, pi/2) and polishes the best candidate. Without any
    twin connections the identity rotation has full margin 1.
    """
    if wells.dim != 2:
        raise MeshError("rotation search implemented for n = 2")
    if wells.connections is None:
        raise MeshError("solve rank-one connections before searching rotations")
    twins = np.array([c.b for c in wells.connections])
    if len(twins) == 0:
        return AdmissibleRotation(
            rotation=np.eye(2),
            angle=0.0,
            margin=1.0,
            sufficient=None if delta0 is None else True,
        )
    ref = kuhn_reference_normals(2)

    angles = np.linspace(0.0, np.pi / 2.0, angle_grid_size, endpoint=False)

    def margin_of(phi_arr):
        c, s = np.cos(phi_arr), np.sin(phi_arr)
        # rotated reference normals, shape (A, 3, 2)
        rn = np.empty((len(phi_arr), len(ref), 2))
        rn[..., 0] = c[:, None] * ref[None, :, 0] - s[:, None] * ref[None, :, 1]
        rn[..., 1] = s[:, None] * ref[None, :, 0] + c[:, None] * ref[None, :, 1]
        align = np.abs(np.einsum("afi,ti->aft", rn, twins))
        return 1.0 - align.max(axis=(1, 2))

    margins = margin_of(angles)
    best = int(np.argmax(margins))
    step = (np.pi / 2.0) / angle_grid_size
    phi_star, neg_margin = golden_min(
        lambda p: -float(margin_of(np.array([p]))[0]),
        angles[best] - step,
        angles[best] + step,
    )
    margin = -neg_margin
    if margin <= 0.0:
        raise MeshError("no rotation with positive incompatibility margin found")
    return AdmissibleRotation(
        rotation=rotation_2d(phi_star),
        angle=float(phi_star),
        margin=float(margin),
        sufficient=None if delta0 is None else bool(margin > delta0),
    )
