"""Cell classification by nearest well and the resulting partitions.

Cells whose gradient sits within c0/100 of some well get that well's
label; everything else is BAD. On a twin-incompatible mesh two different
well labels can never touch across a facet: the tangential continuity of
the deformation plus the incompatibility constant force a BAD cell in
between, which is what bounds the interfaces by the energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import UnionFind
from .wells import dist_to_single_well_batch, dist_to_wells_batch, polar_rotation

BAD_LABEL = -1


class SpinError(ValueError):
    """Classification preconditions not met."""


class PhaseLabeling:
    """Per-cell labels: well index >= 0 or BAD_LABEL."""

    def __init__(self, mesh, labels, distances, threshold):
        self.mesh = mesh
        self.labels = labels
        self.distances = distances
        self.threshold = threshold

    def volume_of(self, label):
        return float(self.mesh.volumes[self.labels == label].sum())

    @property
    def bad_volume(self):
        return self.volume_of(BAD_LABEL)

    def rows(self):
        """(cell_id, label, distance) rows for CSV emission."""
        return [
            (int(i), int(l), float(d))
            for i, (l, d) in enumerate(zip(self.labels, self.distances))
        ]


def classify(field, wells, threshold=None):
    """Label every cell by its nearest well within threshold, else BAD.

    The default threshold is c0/100 and requires compute_dbar to have run;
    the comparison is inclusive, and ties between wells resolve to the
    lowest index.
    """
    if threshold is None:
        c0 = wells.c0
        if c0 is None:
            raise SpinError("well set has no c0: run compute_dbar first")
        threshold = c0 / 100.0
    dists, nearest = dist_to_wells_batch(field.gradients, wells)
    labels = np.where(dists <= threshold, nearest, BAD_LABEL)
    return PhaseLabeling(field.mesh, labels.astype(np.int64), dists, float(threshold))


@dataclass
class SpinViolation:
    facet: int
    cell_in_well: int
    cell_other: int
    well_label: int
    other_label: int
    dist_other_to_well: float


def verify_spin_lemma(field, labeling, wells):
    """Scan adjacent cell pairs for forbidden well-to-well contacts.

    Whenever one cell of an interior facet is labeled with well i1 and the
    neighbor is farther than the threshold from that well (for every
    rotation), the neighbor must be BAD. Returns the violations: neighbor
    pairs where the neighbor carries a different well label instead.
    On a mesh satisfying the incompatibility margin this list is empty for
    every continuous field; it is nonempty exactly when twin planes align
    with facets.
    """
    mesh = labeling.mesh
    thr = labeling.threshold
    violations = []
    interior = mesh.interior
    a = mesh.facet_cells[interior, 0]
    b = mesh.facet_cells[interior, 1]
    lab_a, lab_b = labeling.labels[a], labeling.labels[b]
    for anchor, other, lab_anchor, lab_other in (
        (a, b, lab_a, lab_b),
        (b, a, lab_b, lab_a),
    ):
        candidates = np.nonzero((lab_anchor >= 0) & (lab_other >= 0))[0]
        for w in np.unique(lab_anchor[candidates]):
            sel = candidates[lab_anchor[candidates] == w]
            d_other = dist_to_single_well_batch(
                field.gradients[other[sel]], wells.matrices[w]
            )
            hyp = d_other > thr
            for k in np.nonzero(hyp)[0]:
                fi = sel[k]
                violations.append(
                    SpinViolation(
                        facet=int(interior[fi]),
                        cell_in_well=int(anchor[fi]),
                        cell_other=int(other[fi]),
                        well_label=int(w),
                        other_label=int(lab_other[fi]),
                        dist_other_to_well=float(d_other[k]),
                    )
                )
    return violations


def discrete_perimeter(labeling, label, include_boundary=True):
    """Total facet area of the interface of one label's cell set.

    Interior facets count when exactly one side carries the label; facets
    on the domain boundary count when their cell does (skipped with
    include_boundary=False).
    """
    mesh = labeling.mesh
    labs = labeling.labels
    if label != BAD_LABEL and label < 0:
        raise SpinError(f"unknown label {label}")
    a = mesh.facet_cells[mesh.interior, 0]
    b = mesh.facet_cells[mesh.interior, 1]
    differs = (labs[a] == label) ^ (labs[b] == label)
    total = float(mesh.facet_area[mesh.interior][differs].sum())
    if include_boundary:
        cells = mesh.facet_cells[mesh.boundary, 0]
        total += float(mesh.facet_area[mesh.boundary][labs[cells] == label].sum())
    return total


def count_bad_cells(labeling):
    return int((labeling.labels == BAD_LABEL).sum())


@dataclass
class PartitionComponent:
    well: int
    cells: np.ndarray
    volume: float
    rotation: np.ndarray | None
    residual: float | None
    degenerate: bool = False

    def to_dict(self):
        return {
            "well": self.well,
            "n_cells": int(len(self.cells)),
            "volume": self.volume,
            "rotation": None if self.rotation is None else self.rotation.tolist(),
            "residual": self.residual,
            "degenerate": self.degenerate,
        }


@dataclass
class CaccioppoliPartition:
    components: list
    total_perimeter: float
    bad_volume: float

    def components_of(self, well):
        return [c for c in self.components if c.well == well]

    def macroscopic(self, min_volume):
        """Components with volume at least min_volume.

        Discrete transition staircases can pinch off well-labeled islands
        of a few cells; their volume vanishes under refinement, so counts
        of limit components are read above a fixed volume floor.
        """
        return [c for c in self.components if c.volume >= min_volume]

    def to_json(self):
        return {
            "n_components": len(self.components),
            "total_perimeter": self.total_perimeter,
            "bad_volume": self.bad_volume,
            "components": [c.to_dict() for c in self.components],
        }


def extract_partition(field, labeling, wells):
    """Facet-connected components of each well label with fitted rotations.

    Connectivity is through shared facets only; sets touching at corners
    stay separate. The rotation of a component is the polar projection of
    the volume-weighted mean of grad . U_j^{-1}; components whose mean has
    nonpositive determinant are flagged degenerate and left unfitted.
    """
    mesh = labeling.mesh
    labs = labeling.labels
    uf = UnionFind(mesh.n_cells)
    a = mesh.facet_cells[mesh.interior, 0]
    b = mesh.facet_cells[mesh.interior, 1]
    same = (labs[a] == labs[b]) & (labs[a] >= 0)
    for i, j in zip(a[same], b[same]):
        uf.union(int(i), int(j))

    groups = {}
    for cell in range(mesh.n_cells):
        if labs[cell] < 0:
            continue
        groups.setdefault(uf.find(cell), []).append(cell)

    components = []
    for cells in groups.values():
        cells = np.array(cells, dtype=np.int64)
        well = int(labs[cells[0]])
        vols = mesh.volumes[cells]
        volume = float(vols.sum())
        uinv = np.linalg.inv(wells.matrices[well])
        local = field.gradients[cells] @ uinv
        mean = (local * vols[:, None, None]).sum(axis=0) / volume
        if np.linalg.det(mean) <= 0:
            components.append(
                PartitionComponent(
                    well=well,
                    cells=cells,
                    volume=volume,
                    rotation=None,
                    residual=None,
                    degenerate=True,
                )
            )
            continue
        rot = polar_rotation(mean)
        target = rot @ wells.matrices[well]
        res2 = ((field.gradients[cells] - target) ** 2).sum(axis=(1, 2)) @ vols
        components.append(
            PartitionComponent(
                well=well,
                cells=cells,
                volume=volume,
                rotation=rot,
                residual=float(math.sqrt(max(res2, 0.0))),
            )
        )
    components.sort(key=lambda c: (c.well, -c.volume))

    wells_present = sorted({c.well for c in components})
    total_perimeter = sum(discrete_perimeter(labeling, w) for w in wells_present)
    return CaccioppoliPartition(
        components=components,
        total_perimeter=float(total_perimeter),
        bad_volume=labeling.bad_volume,
    )
