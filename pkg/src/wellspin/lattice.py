"""Finite-range lattice Hamiltonians with periodic ground states.

Deformations map lattice sites to vectors; the Hamiltonian is a
translation-invariant window sum over a finite interaction range and,
because of translation invariance, depends only on the forward-difference
gradient. Ground states are given by periodic gradient patterns; shifted
variants of one pattern count as distinct ground states, which is how
phase/antiphase structure is represented. The rescaled energy weights
every window by m^-n, and classification happens per coarse site by
matching the local gradient patch against rotated ground patterns.

The one-dimensional anti-ferromagnetic pair Hamiltonian is built in, in
its raw form (gradients in {0, +-1}, non-invertible averages) and in a
remapped form on the alphabet {1, 3/2, 2} whose averaged gradients are
invertible. A synthetic two-dimensional system with oscillating ground
states exercises the rotation-search paths.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import UnionFind, golden_min
from .wells import _procrustes_rotation_batch, dist_to_single_well, polar_rotation

BAD_SITE = -1
BOUNDARY_SITE = -2


class LatticeError(ValueError):
    pass


class EnergyBoundError(LatticeError):
    """A sweep deformation exceeded the configured surface-energy bound."""

    def __init__(self, m, total, allowed):
        self.m = m
        self.total = total
        self.allowed = allowed
        super().__init__(
            f"H_m = {total:.6g} exceeds bound {allowed:.6g} at m = {m}"
        )


@dataclass
class GroundState:
    """A periodic gradient pattern.

    gradients has shape period + (n, n); the pattern value at an absolute
    site is read off modulo the period in every axis.
    """

    gradients: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.gradients = np.asarray(self.gradients, dtype=float)
        n = self.gradients.shape[-1]
        self.dim = n
        self.period = self.gradients.shape[:-2]
        if len(self.period) != n:
            raise LatticeError("pattern must have one period axis per dimension")
        self.averaged = self.gradients.reshape(-1, n, n).mean(axis=0)

    def gradient_at(self, sites):
        """Pattern values at absolute integer sites, shape (..., n, n)."""
        sites = np.asarray(sites, dtype=int)
        idx = tuple(
            np.mod(sites[..., a], self.period[a]) for a in range(self.dim)
        )
        return self.gradients[idx]

    @property
    def period_length(self):
        return max(self.period)


class LatticeSystem:
    """Interaction window, density and ground states of one Hamiltonian."""

    def __init__(
        self,
        dim,
        window,
        density,
        ground_states,
        p=2.0,
        alphabet=None,
        name="",
        density_table=None,
    ):
        self.dim = dim
        self.window = np.asarray(sorted(map(tuple, window)), dtype=int)
        self.density = density
        self.ground_states = list(ground_states)
        self.p = float(p)
        self.alphabet = None if alphabet is None else np.asarray(alphabet, float)
        self.name = name
        self.density_table = density_table
        if not self.ground_states:
            raise LatticeError("need at least one ground state")
        span = self.window.max(axis=0) - self.window.min(axis=0)
        self.q = int(max(len(self.window), span.max()))
        self.L0 = max(g.period_length for g in self.ground_states)
        # enlarged comparison box: smallest box holding the window and twice
        # the ground period box, plus a one-site margin to contain it strictly
        hi = int(max(self.window.max(), 2 * self.L0)) + 1
        lo = int(min(self.window.min(), 0))
        self.window_tilde = np.array(
            list(itertools.product(*[range(lo, hi + 1)] * dim)), dtype=int
        )
        self.q0_offsets = np.array(
            list(itertools.product(*[range(self.L0 + 1)] * dim)), dtype=int
        )
        self.separation_d = self._separation()

    def _separation(self):
        if len(self.ground_states) == 1:
            return math.inf
        best = math.inf
        for a in range(len(self.ground_states)):
            for b in range(a + 1, len(self.ground_states)):
                ga, gb = self.ground_states[a], self.ground_states[b]
                worst = 0.0
                for site in self.q0_offsets:
                    pa = ga.gradient_at(site)
                    pb = gb.gradient_at(site)
                    if self.dim == 1:
                        d = abs(float(pa[0, 0] - pb[0, 0]))
                    else:
                        d = dist_to_single_well(pa, pb)
                    worst = max(worst, d)
                best = min(best, worst)
        return best

    @property
    def averaged_gradients(self):
        return [g.averaged for g in self.ground_states]

    def h1_report(self):
        """Which parts of the ground-state conditions hold.

        Periodicity holds by construction; invertibility of the averaged
        gradients is reported per state (the raw anti-ferromagnetic model
        fails it on purpose); the separation constant is computed over the
        comparison box. ground_energy is the largest total over the listed
        ground states: exactly zero on finite alphabets, round-off dust for
        continuous densities, so the boolean allows 1e-24 per window.
        """
        inv = [
            abs(float(np.linalg.det(g.averaged))) > 1e-12 for g in self.ground_states
        ]
        worst = 0.0
        windows = 1
        for l in range(len(self.ground_states)):
            x = ground_state_deformation(self, l, (4 * self.L0 + 4,) * self.dim, m=4)
            rep = evaluate_hamiltonian(x, self)
            worst = max(worst, rep.total)
            windows = max(windows, len(rep.per_site))
        return {
            "periodic": True,
            "ground_energy": worst,
            "zero_on_ground_states": worst <= 1e-24 * windows,
            "averaged_invertible": inv,
            "separation_d": self.separation_d,
        }

    def to_json(self):
        doc = {
            "dim": self.dim,
            "name": self.name,
            "p": self.p,
            "window": [list(map(int, w)) for w in self.window],
            "ground_states": [
                {"name": g.name, "period": list(g.period), "gradients": g.gradients.tolist()}
                for g in self.ground_states
            ],
            "separation_d": self.separation_d,
        }
        if self.alphabet is not None:
            doc["alphabet"] = self.alphabet.tolist()
        if self.density_table is not None:
            doc["density"] = {"table": {str(k): v for k, v in self.density_table.items()}}
        else:
            doc["density"] = {"name": self.name}
        return doc


class LatticeDeformation:
    """Site values on an integer box with a cached forward-difference
    gradient: column r of the gradient at site i is X[i+e_r] - X[i]."""

    def __init__(self, values, m):
        values = np.asarray(values, dtype=float)
        if values.ndim < 2:
            raise LatticeError("values must have shape sites x dim")
        self.dim = values.shape[-1]
        if values.ndim != self.dim + 1:
            raise LatticeError("values must have one axis per dimension plus one")
        self.values = values
        self.m = int(m)
        self._gradient = None

    @classmethod
    def from_gradient_sequence(cls, gradients, m):
        """One-dimensional chain from its gradient sequence (prefix sums)."""
        g = np.asarray(gradients, dtype=float).reshape(-1)
        values = np.concatenate([[0.0], np.cumsum(g)])[:, None]
        return cls(values, m)

    def gradient(self):
        if self._gradient is None:
            n = self.dim
            shape = tuple(s - 1 for s in self.values.shape[:-1])
            grad = np.empty(shape + (n, n))
            inner = tuple(slice(0, s) for s in shape)
            for r in range(n):
                shifted = tuple(
                    slice(1, s + 1) if a == r else slice(0, s)
                    for a, s in enumerate(shape)
                )
                grad[..., :, r] = self.values[shifted] - self.values[inner]
            self._gradient = grad
        return self._gradient

    def gradient_consistent(self):
        """Recompute the gradient from the values and compare bitwise."""
        cached = self._gradient
        self._gradient = None
        fresh = self.gradient()
        ok = cached is None or np.array_equal(cached, fresh)
        self._gradient = fresh
        return ok

    @property
    def n_gradient_sites(self):
        return tuple(s - 1 for s in self.values.shape[:-1])

    def translated(self, shift):
        """Shift all values by a constant vector.

        The gradient cache is carried over unchanged: differences of
        shifted values are mathematically identical, and re-differencing
        the shifted floats would only inject round-off.
        """
        out = LatticeDeformation(self.values + np.asarray(shift, float), self.m)
        out._gradient = self.gradient()
        return out


def deformation_from_gradient_function(fn, value_shape, m):
    """Integrate a gradient pattern into a deformation on a value box.

    fn maps integer sites (..., n) to gradient matrices (..., n, n) and
    must be integrable (column r at i consistent across paths); the result
    is checked against fn and rejected otherwise.
    """
    value_shape = tuple(value_shape)
    n = len(value_shape)
    values = np.zeros(value_shape + (n,))
    for axis in range(n):
        lead = value_shape[:axis]
        lead_sites = np.array(list(itertools.product(*[range(s) for s in lead])), int)
        count = value_shape[axis] - 1
        if count <= 0:
            continue
        for k in range(count):
            sites = np.zeros((len(lead_sites), n), dtype=int)
            if axis > 0:
                sites[:, :axis] = lead_sites
            sites[:, axis] = k
            cols = fn(sites)[..., :, axis]
            src = tuple([lead_sites[:, a] for a in range(axis)] + [k])
            dst = tuple([lead_sites[:, a] for a in range(axis)] + [k + 1])
            values[dst] = values[src] + cols
    x = LatticeDeformation(values, m)
    grads = x.gradient()
    sites = np.stack(
        np.meshgrid(*[np.arange(s) for s in x.n_gradient_sites], indexing="ij"),
        axis=-1,
    )
    expected = fn(sites)
    if not np.allclose(grads, expected, atol=1e-9):
        raise LatticeError("gradient pattern is not integrable")
    return x


def ground_state_deformation(system, l, value_shape, m, rotation=None, shift=None):
    """Materialize a (rotated, translated) ground state on a value box."""
    g = system.ground_states[l]
    rot = np.eye(system.dim) if rotation is None else np.asarray(rotation, float)

    def fn(sites):
        return rot @ g.gradient_at(sites)

    x = deformation_from_gradient_function(fn, value_shape, m)
    if shift is not None:
        x = x.translated(shift)
    return x


@dataclass
class HamiltonianReport:
    total: float
    per_site: np.ndarray
    base_sites: np.ndarray
    empty: bool = False


def evaluate_hamiltonian(x, system):
    """Rescaled window sum: m^-n * density over every window that fits.

    Windows touching the boundary are excluded by the containment rule;
    if no window fits at all the report carries total 0 and a warning
    flag. The total is defined as the sum of the per-site contributions.
    """
    grad = x.gradient()
    gshape = grad.shape[: system.dim]
    offsets = system.window
    lo = -offsets.min(axis=0)
    hi = np.array(gshape) - offsets.max(axis=0)
    if np.any(hi <= lo):
        return HamiltonianReport(
            total=0.0,
            per_site=np.zeros(0),
            base_sites=np.zeros((0, system.dim), dtype=int),
            empty=True,
        )
    base_ranges = [np.arange(lo[a], hi[a]) for a in range(system.dim)]
    base = np.stack(np.meshgrid(*base_ranges, indexing="ij"), axis=-1)
    base_flat = base.reshape(-1, system.dim)
    patches = np.stack(
        [grad[tuple((base_flat + off).T)] for off in offsets], axis=1
    )  # (n_windows, W, n, n)
    energies = np.asarray(system.density(patches), dtype=float)
    weight = float(x.m) ** (-system.dim)
    per_site = weight * energies
    return HamiltonianReport(
        total=float(per_site.sum()),
        per_site=per_site,
        base_sites=base_flat,
        empty=False,
    )


@dataclass
class LatticeClassification:
    labels: np.ndarray
    threshold: float
    m: int
    dim: int

    def count(self, label):
        return int((self.labels == label).sum())

    def volume(self, label):
        return self.count(label) * float(self.m) ** (-self.dim)

    @property
    def well_labels(self):
        return sorted(int(l) for l in np.unique(self.labels) if l >= 0)

    @property
    def bad_volume(self):
        return self.volume(BAD_SITE)

    @property
    def boundary_volume(self):
        return self.volume(BOUNDARY_SITE)

    def label_perimeter(self, label):
        """Coarse interface measure of one label: axis-adjacent site pairs
        with exactly one side labeled `label`, weighted by m^-(n-1)."""
        labs = self.labels
        count = 0
        for axis in range(self.dim):
            a = labs[tuple(slice(0, -1) if ax == axis else slice(None) for ax in range(self.dim))]
            b = labs[tuple(slice(1, None) if ax == axis else slice(None) for ax in range(self.dim))]
            count += int(((a == label) ^ (b == label)).sum())
        return count * float(self.m) ** (-(self.dim - 1))

    def adjacency_violations(self):
        """Pairs of directly adjacent sites carrying two different well
        labels with no BAD or boundary site in between."""
        labs = self.labels
        out = []
        for axis in range(self.dim):
            a = labs[tuple(slice(0, -1) if ax == axis else slice(None) for ax in range(self.dim))]
            b = labs[tuple(slice(1, None) if ax == axis else slice(None) for ax in range(self.dim))]
            bad = (a >= 0) & (b >= 0) & (a != b)
            for idx in np.argwhere(bad):
                out.append((axis, tuple(idx), int(a[tuple(idx)]), int(b[tuple(idx)])))
        return out


def _rotation_grid_match(patch, ground_patch, grid=1024):
    """min over rotations of the sup-norm patch distance, for n = 2.

    Scans a uniform angle grid and polishes the best angle by
    golden-section to about 1e-6.
    """
    thetas = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    c, s = np.cos(thetas), np.sin(thetas)
    rots = np.empty((grid, 2, 2))
    rots[:, 0, 0] = c
    rots[:, 0, 1] = -s
    rots[:, 1, 0] = s
    rots[:, 1, 1] = c
    diffs = patch[None] - rots[:, None] @ ground_patch[None]
    vals = np.linalg.norm(diffs, axis=(-2, -1)).max(axis=1)
    k = int(np.argmin(vals))
    step = 2.0 * np.pi / grid

    def f(theta):
        cc, ss = math.cos(theta), math.sin(theta)
        rot = np.array([[cc, -ss], [ss, cc]])
        return float(
            np.linalg.norm(patch - rot @ ground_patch, axis=(-2, -1)).max()
        )

    _, best = golden_min(f, thetas[k] - step, thetas[k] + step, tol=1e-6)
    return min(best, float(vals[k]))


def classify_lattice(x, system, threshold=None):
    """Label every coarse site by the matching ground state within the
    comparison window, BAD when no rotation of any pattern fits, or
    BOUNDARY when the window leaves the domain."""
    if threshold is None:
        threshold = system.separation_d / 100.0
    grad = x.gradient()
    gshape = np.array(grad.shape[: system.dim])
    offsets = system.q0_offsets
    labels = np.full(tuple(gshape), BOUNDARY_SITE, dtype=np.int64)
    hi = gshape - offsets.max(axis=0)
    if np.all(hi > 0):
        base_ranges = [np.arange(0, hi[a]) for a in range(system.dim)]
        base = np.stack(np.meshgrid(*base_ranges, indexing="ij"), axis=-1)
        base_flat = base.reshape(-1, system.dim)
        patches = np.stack(
            [grad[tuple((base_flat + off).T)] for off in offsets], axis=1
        )  # (sites, Q, n, n)
        dists = np.empty((len(base_flat), len(system.ground_states)))
        for l, g in enumerate(system.ground_states):
            gpatches = np.stack(
                [g.gradient_at(base_flat + off) for off in offsets], axis=1
            )
            if system.dim == 1:
                diffs = np.abs(patches[..., 0, 0] - gpatches[..., 0, 0])
                dists[:, l] = diffs.max(axis=-1)
            else:
                for i in range(len(base_flat)):
                    dists[i, l] = _rotation_grid_match(patches[i], gpatches[i])
        nearest = np.argmin(dists, axis=1)
        best = dists[np.arange(len(base_flat)), nearest]
        site_labels = np.where(best <= threshold, nearest, BAD_SITE)
        labels[tuple(base_flat.T)] = site_labels
    return LatticeClassification(
        labels=labels, threshold=float(threshold), m=x.m, dim=system.dim
    )


@dataclass
class H2Report:
    c: float
    p: float
    n_windows: int
    exhaustive: bool
    worst_window: object
    worst_kappa: float
    worst_energy: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations and self.c > 0.0


def _ground_patch_bank(system, offsets):
    """All rotation-free ground patches over the offsets, including every
    periodic shift, as one array (bank, T, n, n)."""
    bank = []
    for g in system.ground_states:
        shifts = itertools.product(*[range(p) for p in g.period])
        for s in shifts:
            bank.append(g.gradient_at(offsets + np.asarray(s, int)))
    return np.unique(np.array(bank), axis=0)


def verify_h2(system, sample_budget=500_000, rng=None, sampler=None):
    """Check the growth condition: windows off every ground-state orbit by
    kappa must carry local energy at least c * kappa^p.

    With a finite one-dimensional alphabet the check enumerates every
    gradient window over the enlarged box exhaustively (up to the budget);
    otherwise `sampler(rng, count)` must supply window gradients. Reports
    the fitted constant c and any outright violations (kappa > 0 with zero
    energy)."""
    offsets = system.window_tilde
    t_len = len(offsets)
    if system.dim != 1 and sampler is None:
        raise LatticeError("continuous systems need a window sampler")
    if system.dim == 1 and system.alphabet is not None:
        total = len(system.alphabet) ** t_len
        exhaustive = total <= sample_budget
        if exhaustive:
            windows = np.array(
                list(itertools.product(system.alphabet, repeat=t_len))
            )[..., None, None]
        else:
            rng = rng or np.random.default_rng(0)
            windows = rng.choice(system.alphabet, size=(sample_budget, t_len))[
                ..., None, None
            ]
    else:
        rng = rng or np.random.default_rng(0)
        windows = np.asarray(sampler(rng, sample_budget))
        exhaustive = False

    bank = _ground_patch_bank(system, offsets)
    if system.dim == 1:
        diffs = np.abs(
            windows[:, None, :, 0, 0] - bank[None, :, :, 0, 0]
        ).max(axis=-1)
        kappas = diffs.min(axis=1)
    else:
        kappas = np.empty(len(windows))
        for i, w in enumerate(windows):
            kappas[i] = min(
                _rotation_grid_match(w, gp) for gp in bank
            )

    # local energy: sum of density over every interaction window inside
    inner = []
    off_arr = system.window
    lo = offsets.min(axis=0)
    hi = offsets.max(axis=0)
    index_of = {tuple(o): k for k, o in enumerate(offsets)}
    for j in itertools.product(*[range(lo[a], hi[a] + 1) for a in range(system.dim)]):
        j = np.asarray(j, int)
        cells = [tuple(j + o) for o in off_arr]
        if all(c in index_of for c in cells):
            inner.append([index_of[c] for c in cells])
    inner = np.asarray(inner, dtype=int)
    energies = np.zeros(len(windows))
    for idx in inner:
        energies += np.asarray(system.density(windows[:, idx]), dtype=float)

    live = kappas > 1e-12
    violations = [
        {
            "window": windows[i, :, 0, 0].tolist() if system.dim == 1 else windows[i].tolist(),
            "kappa": float(kappas[i]),
            "energy": float(energies[i]),
        }
        for i in np.nonzero(live & (energies <= 0.0))[0]
    ]
    if np.any(live):
        ratios = energies[live] / kappas[live] ** system.p
        worst = int(np.argmin(ratios))
        worst_idx = np.nonzero(live)[0][worst]
        c = float(ratios[worst])
    else:
        c, worst_idx = math.inf, None
    return H2Report(
        c=0.0 if violations else c,
        p=system.p,
        n_windows=len(windows),
        exhaustive=exhaustive,
        worst_window=None if worst_idx is None else windows[worst_idx],
        worst_kappa=float(kappas[worst_idx]) if worst_idx is not None else 0.0,
        worst_energy=float(energies[worst_idx]) if worst_idx is not None else 0.0,
        violations=violations,
    )


def averaged_gradient_field(x, system, l):
    """Sliding mean of the gradient over the period cell of ground state l.

    Returns (values, valid) where values[j] averages grad over j plus the
    period box; on ground-state regions the average equals the averaged
    gradient exactly. Sites whose window leaves the domain are marked
    invalid."""
    g = system.ground_states[l]
    grad = x.gradient()
    gshape = np.array(grad.shape[: system.dim])
    period = np.asarray(g.period, int)
    out_shape = gshape - period + 1
    if np.any(out_shape <= 0):
        return np.zeros(tuple(np.maximum(out_shape, 0)) + grad.shape[-2:]), np.zeros(
            tuple(np.maximum(out_shape, 0)), dtype=bool
        )
    offsets = np.array(list(itertools.product(*[range(p) for p in period])), int)
    base = np.stack(
        np.meshgrid(*[np.arange(s) for s in out_shape], indexing="ij"), axis=-1
    )
    flat = base.reshape(-1, system.dim)
    acc = np.zeros((len(flat),) + grad.shape[-2:])
    for off in offsets:
        acc += grad[tuple((flat + off).T)]
    acc /= len(offsets)
    values = acc.reshape(tuple(out_shape) + grad.shape[-2:])
    valid = np.ones(tuple(out_shape), dtype=bool)
    return values, valid


@dataclass
class LatticeComponent:
    label: int
    sites: np.ndarray
    volume: float
    rotation: np.ndarray | None
    residual: float | None


def _lattice_components(classification):
    labs = classification.labels
    shape = labs.shape
    flat = labs.reshape(-1)
    uf = UnionFind(flat.size)
    idx = np.arange(flat.size).reshape(shape)
    for axis in range(labs.ndim):
        a = idx[tuple(slice(0, -1) if ax == axis else slice(None) for ax in range(labs.ndim))]
        b = idx[tuple(slice(1, None) if ax == axis else slice(None) for ax in range(labs.ndim))]
        same = (flat[a.reshape(-1)] == flat[b.reshape(-1)]) & (flat[a.reshape(-1)] >= 0)
        for i, j in zip(a.reshape(-1)[same], b.reshape(-1)[same]):
            uf.union(int(i), int(j))
    comps = {}
    for i in range(flat.size):
        if flat[i] < 0:
            continue
        comps.setdefault(uf.find(i), []).append(i)
    return [
        (int(flat[members[0]]), np.array(members, dtype=np.int64))
        for members in comps.values()
    ]


def lattice_partition_diagnostics(
    deformations, system, energy_constant=None, threshold=None
):
    """Sweep diagnostics: volumes, perimeters, components with fitted
    rotations against the averaged gradients, and the commuting-average
    check, one record per scale m.

    deformations maps m to a LatticeDeformation. With energy_constant C
    the surface-energy bound total <= C/m is enforced and its violation
    raises EnergyBoundError (carrying the measured value).
    """
    records = []
    for m in sorted(deformations):
        x = deformations[m]
        ham = evaluate_hamiltonian(x, system)
        if energy_constant is not None and ham.total > energy_constant / m:
            raise EnergyBoundError(m, ham.total, energy_constant / m)
        cls = classify_lattice(x, system, threshold=threshold)
        comps = []
        for label, members in _lattice_components(cls):
            g = system.ground_states[label]
            avg, _ = averaged_gradient_field(x, system, label)
            coords = np.array(
                np.unravel_index(members, cls.labels.shape)
            ).T  # (k, n)
            avg_shape = np.array(avg.shape[: system.dim])
            inside = np.all(coords < avg_shape, axis=1)
            vol = len(members) * float(m) ** (-system.dim)
            if not np.any(inside) or abs(np.linalg.det(g.averaged)) < 1e-12:
                # no averaged data in range, or the averaged gradient is
                # singular (raw anti-ferromagnetic chains): no rotation fit
                comps.append(
                    LatticeComponent(label, members, vol, None, None)
                )
                continue
            local = avg[tuple(coords[inside].T)]
            uinv = np.linalg.inv(g.averaged)
            mean = (local @ uinv).mean(axis=0)
            if abs(np.linalg.det(mean)) < 1e-12:
                comps.append(LatticeComponent(label, members, vol, None, None))
                continue
            rot = polar_rotation(mean)
            res2 = ((local - rot @ g.averaged) ** 2).sum() * float(m) ** (
                -system.dim
            )
            comps.append(
                LatticeComponent(
                    label, members, vol, rot, float(math.sqrt(max(res2, 0.0)))
                )
            )
        grad = x.gradient()
        avg0, _ = averaged_gradient_field(x, system, 0)
        commute_gap = 0.0
        if avg0.size:
            # mean of the raw gradient against the mean of its window
            # average over the common index box; differs only through a
            # boundary band one period wide
            sl = tuple(slice(0, s) for s in avg0.shape[: system.dim])
            commute_gap = float(
                np.linalg.norm(
                    grad[sl].mean(axis=tuple(range(system.dim)))
                    - avg0.mean(axis=tuple(range(system.dim)))
                )
            )
        records.append(
            {
                "m": m,
                "energy": ham.total,
                "well_volumes": {l: cls.volume(l) for l in cls.well_labels},
                "bad_volume": cls.bad_volume,
                "boundary_volume": cls.boundary_volume,
                "perimeters": {l: cls.label_perimeter(l) for l in cls.well_labels},
                "components": comps,
                "n_components": len(comps),
                "adjacency_violations": cls.adjacency_violations(),
                "commute_gap": commute_gap,
                "classification": cls,
            }
        )
    return records


def chain_to_csv(x, path):
    """Write a one-dimensional deformation as (site, gradient) rows."""
    if x.dim != 1:
        raise LatticeError("CSV chain format covers one-dimensional chains")
    g = x.gradient()[..., 0, 0]
    lines = ["site,gradient"]
    lines += [f"{i},{float(v)!r}" for i, v in enumerate(g)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def chain_from_csv(path, m):
    """Read a (site, gradient) chain back into a deformation."""
    with open(path, encoding="utf-8") as fh:
        rows = fh.read().strip().splitlines()
    if not rows or rows[0] != "site,gradient":
        raise LatticeError("expected a site,gradient header")
    grads = [float(line.split(",")[1]) for line in rows[1:]]
    return LatticeDeformation.from_gradient_sequence(grads, m)


# -- built-in systems --------------------------------------------------


def antiferro_system(variant="raw"):
    """The one-dimensional anti-ferromagnetic pair Hamiltonian.

    raw: gradients in {0, +-1}, density g0*g1 + 1, ground states the two
    alternating spin chains; their averaged gradients vanish, so the
    invertibility condition fails (by design). remapped: the same model
    conjugated onto the alphabet {1, 3/2, 2}, density
    (2 g0 - 3)(2 g1 - 3) + 1, ground patterns (1,2)/(2,1) with invertible
    averaged gradient 3/2.
    """
    if variant == "raw":

        def density(patches):
            g = patches[..., 0, 0]
            return g[..., 0] * g[..., 1] + 1.0

        grounds = [
            GroundState(np.array([1.0, -1.0])[:, None, None], name="alternating+"),
            GroundState(np.array([-1.0, 1.0])[:, None, None], name="alternating-"),
        ]
        table = {
            (a, b): float(a * b + 1.0)
            for a in (-1.0, 0.0, 1.0)
            for b in (-1.0, 0.0, 1.0)
        }
        return LatticeSystem(
            dim=1,
            window=[(0,), (1,)],
            density=density,
            ground_states=grounds,
            p=2.0,
            alphabet=(-1.0, 0.0, 1.0),
            name="antiferro-raw",
            density_table=table,
        )
    if variant == "remapped":

        def density(patches):
            g = patches[..., 0, 0]
            return (2.0 * g[..., 0] - 3.0) * (2.0 * g[..., 1] - 3.0) + 1.0

        grounds = [
            GroundState(np.array([1.0, 2.0])[:, None, None], name="updown"),
            GroundState(np.array([2.0, 1.0])[:, None, None], name="downup"),
        ]
        table = {
            (a, b): float((2 * a - 3) * (2 * b - 3) + 1.0)
            for a in (1.0, 1.5, 2.0)
            for b in (1.0, 1.5, 2.0)
        }
        return LatticeSystem(
            dim=1,
            window=[(0,), (1,)],
            density=density,
            ground_states=grounds,
            p=2.0,
            alphabet=(1.0, 1.5, 2.0),
            name="antiferro-remapped",
            density_table=table,
        )
    raise LatticeError(f"unknown antiferro variant {variant!r}")


def alternating_chain(system, length, interfaces=()):
    """Gradient chain in the first ground state with optional phase slips.

    interfaces lists fractional positions in (0, 1); at each one a single
    gradient is repeated, which flips the parity (an antiphase boundary)
    and costs one defect window of energy.
    """
    g0 = system.ground_states[0]
    positions = sorted(int(round(f * length)) for f in interfaces)
    grads = []
    parity = 0
    next_pos = list(positions)
    for i in range(length):
        if next_pos and i == next_pos[0]:
            grads.append(grads[-1] if grads else float(g0.gradient_at([0])[0, 0]))
            next_pos.pop(0)
            parity ^= 1
            continue
        grads.append(float(g0.gradient_at([i + parity])[0, 0]))
    return LatticeDeformation.from_gradient_sequence(grads, m=1)


def antiferro_chain(system, m, domain_length=1.0, interfaces=()):
    """Chain over the scaled domain with planted antiphase boundaries."""
    n_sites = int(round(m * domain_length))
    x = alternating_chain(system, n_sites, interfaces)
    return LatticeDeformation(x.values, m)


def synthetic_twin_system(u1=None, u2=None, osc=0.3, p=2.0):
    """A two-dimensional system with 2-periodic oscillating ground states.

    Each base matrix carries an oscillation +-osc * e1 (x) e1 along the
    first axis; both parities of each base pattern are listed as ground
    states, so the ground set is closed under lattice shifts. The density
    is the squared Procrustes distance of the two-site window to the
    nearest rotated ground patch, which vanishes exactly on ground-state
    orbits.
    """
    u1 = np.diag([2.0, 0.5]) if u1 is None else np.asarray(u1, float)
    u2 = np.diag([0.5, 2.0]) if u2 is None else np.asarray(u2, float)
    w = np.zeros((2, 2))
    w[0, 0] = osc
    grounds = []
    for name, u in (("A", u1), ("B", u2)):
        for parity, sign in (("+", 1.0), ("-", -1.0)):
            pattern = np.stack([u + sign * w, u - sign * w])[:, None]  # (2,1,n,n)
            grounds.append(GroundState(pattern, name=f"{name}{parity}"))

    window = [(0, 0), (1, 0)]
    offsets = np.asarray(window, int)
    bank = []
    for g in grounds:
        bank.append(np.stack([g.gradient_at(o) for o in offsets]))
    bank = np.array(bank)  # (4, 2, n, n)

    def density(patches):
        patches = np.asarray(patches, float)
        lead = patches.shape[:-3]
        flat = patches.reshape((-1,) + patches.shape[-3:])
        best = np.full(len(flat), np.inf)
        for gp in bank:
            m = np.einsum("ktij,tlj->kil", flat, gp)
            rot = _procrustes_rotation_batch(m)
            resid = flat - rot[:, None] @ gp[None]
            val = (resid**2).sum(axis=(-3, -2, -1))
            best = np.minimum(best, val)
        return best.reshape(lead)

    return LatticeSystem(
        dim=2,
        window=window,
        density=density,
        ground_states=grounds,
        p=p,
        name="synthetic-twin-2d",
    )
