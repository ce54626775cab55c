"""Conditional and effective wave functions of a subsystem.

For a bipartite configuration (x, y) the conditional wave function of the
x-subsystem at actual environment configuration Y is the slice

    psi^A(x) = Psi(x, Y),

normalized on the x-grid.  When Psi decomposes into branches

    Psi(x, y) = sum_j w_j f_j(x) g_j(y) + residual

whose environment factors g_j occupy mutually disjoint regions of y-space,
the branch containing Y acts as an effective wave function: it alone drives
the subsystem, and it obeys its own Schrodinger dynamics for as long as
the branches stay separated and nothing couples x to y.

Branches come from the singular value decomposition of Psi reshaped across
the x|y split.  "Macroscopically disjoint" is quantified as min-sum mass
overlap of the environment densities below ``eps_support``; modes that
fail pairwise disjointness are folded into the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Potential, WaveFrames, Trajectory, evolve_frames
from .interpolation import CubicGridInterpolator
from .states import GridWaveFunction, born_density, grid_norm, l2_distance

EPS_SUPPORT = 1e-6
EPS_ZERO_SLICE = 1e-12
WEIGHT_THRESHOLD = 1e-10

__all__ = [
    "SubsystemSplit",
    "ZeroConditional",
    "conditional_wavefunction",
    "Branch",
    "BranchDecomposition",
    "branch_decompose",
    "EffectiveResult",
    "detect_effective",
    "mass_overlap",
    "separable_potential",
    "AutonomyReport",
    "schrodinger_autonomy_check",
]


class ZeroConditional(Exception):
    """The slice Psi(., Y) has no usable norm at this Y."""


@dataclass(frozen=True)
class SubsystemSplit:
    """Partition of grid coordinates into subsystem (x) and environment (y)."""

    x_coords: tuple
    y_coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "x_coords", tuple(int(i) for i in self.x_coords))
        object.__setattr__(self, "y_coords", tuple(int(i) for i in self.y_coords))
        if not self.x_coords or not self.y_coords:
            raise ValueError("both sides of the split need at least one coordinate")
        n = len(self.x_coords) + len(self.y_coords)
        if sorted(self.x_coords + self.y_coords) != list(range(n)):
            raise ValueError("split must cover each grid coordinate exactly once")

    @classmethod
    def from_labels(cls, labels) -> "SubsystemSplit":
        labels = tuple(labels)
        if set(labels) - {"x", "y"}:
            raise ValueError("labels must be 'x' or 'y'")
        return cls(
            tuple(i for i, s in enumerate(labels) if s == "x"),
            tuple(i for i, s in enumerate(labels) if s == "y"),
        )

    def validate(self, w: GridWaveFunction):
        if len(self.x_coords) + len(self.y_coords) != w.ndim:
            raise ValueError(
                f"split covers {len(self.x_coords) + len(self.y_coords)} coordinates, grid has {w.ndim}"
            )

    def x_grid(self, w: GridWaveFunction) -> tuple:
        return tuple(w.axes[i] for i in self.x_coords)

    def y_grid(self, w: GridWaveFunction) -> tuple:
        return tuple(w.axes[i] for i in self.y_coords)


def _split_for(w: GridWaveFunction, split: SubsystemSplit | None) -> SubsystemSplit:
    if split is not None:
        split.validate(w)
        return split
    if w.particle_partition is None:
        raise ValueError("no split given and the grid carries no particle partition")
    return SubsystemSplit.from_labels(w.particle_partition)


def conditional_wavefunction(
    w: GridWaveFunction,
    split: SubsystemSplit | None,
    y_value,
    normalize: bool = True,
    zero_tol: float = EPS_ZERO_SLICE,
) -> GridWaveFunction:
    """Slice Psi at environment configuration Y, normalized on the x-grid.

    On-grid Y slices the array directly; off-grid Y interpolates along the
    environment coordinates with the same cubic scheme trajectories use.
    Raises ZeroConditional when the slice norm falls below ``zero_tol``.
    """
    split = _split_for(w, split)
    y_value = np.atleast_1d(np.asarray(y_value, dtype=float))
    if y_value.size != len(split.y_coords):
        raise ValueError(
            f"Y has {y_value.size} coordinates, split expects {len(split.y_coords)}"
        )

    on_grid = []
    for c, ax_i in zip(y_value, split.y_coords):
        a = w.axes[ax_i]
        j = int(np.argmin(np.abs(a - c)))
        on_grid.append(j if abs(a[j] - c) <= 1e-9 * max(1.0, abs(c)) else None)

    x_grid = split.x_grid(w)
    if all(j is not None for j in on_grid):
        index = [slice(None)] * w.ndim
        for j, ax_i in zip(on_grid, split.y_coords):
            index[ax_i] = j
        values = w.amplitudes[tuple(index)]
        # surviving axes keep grid order; realign them to the split's x order
        survivors = [i for i in range(w.ndim) if i in split.x_coords]
        values = np.transpose(values, [survivors.index(i) for i in split.x_coords])
    else:
        mesh = np.meshgrid(*x_grid, indexing="ij")
        pts = np.empty((mesh[0].size, w.ndim))
        for d, ax_i in enumerate(split.x_coords):
            pts[:, ax_i] = mesh[d].ravel()
        for c, ax_i in zip(y_value, split.y_coords):
            pts[:, ax_i] = c
        values = CubicGridInterpolator(w.axes, w.amplitudes)(pts).reshape(
            tuple(a.size for a in x_grid)
        )

    sliced = GridWaveFunction(x_grid, values, normalize=False)
    if grid_norm(sliced) < zero_tol:
        raise ZeroConditional(f"slice norm below {zero_tol} at Y={y_value.tolist()}")
    if normalize:
        return GridWaveFunction(x_grid, values)
    return sliced


def mass_overlap(density_a: np.ndarray, density_b: np.ndarray, cell_volume: float) -> float:
    """Min-sum overlap of two densities: the mass they can share."""
    return float(np.minimum(density_a, density_b).sum() * cell_volume)


@dataclass(frozen=True)
class Branch:
    """One emitted product mode w * f(x) * g(y)."""

    x_factor: GridWaveFunction
    y_factor: GridWaveFunction
    weight: complex


@dataclass(frozen=True)
class BranchDecomposition:
    """Schmidt modes of Psi across the x|y split, sorted into branches.

    branches hold the significant modes whose environment densities are
    pairwise disjoint (mass overlap < eps_support); everything else, from
    overlapping modes down to numerical dust, lives in the residual, so

        sum_j weight_j f_j(x) (x) g_j(y)  +  residual  =  Psi

    holds to roundoff by construction.  all_weights lists every Schmidt
    weight for diagnostics; weights satisfy sum w^2 = |Psi|^2 on the grid.
    """

    split: SubsystemSplit
    branches: tuple
    residual: GridWaveFunction
    all_weights: np.ndarray
    eps_support: float
    weight_threshold: float

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def weights(self) -> np.ndarray:
        return np.array([b.weight for b in self.branches])

    def reconstruct(self) -> GridWaveFunction:
        acc = self.residual.amplitudes.copy()
        for b in self.branches:
            acc += _joint_product(b, self.split)
        return GridWaveFunction(self.residual.axes, acc, normalize=False)

    def overlap_matrix(self) -> np.ndarray:
        """Pairwise environment mass overlaps of the emitted branches."""
        n = self.n_branches
        d_vy = float(np.prod([a[1] - a[0] for a in self.branches[0].y_factor.axes])) if n else 0.0
        out = np.zeros((n, n))
        dens = [born_density(b.y_factor) for b in self.branches]
        for i in range(n):
            for j in range(n):
                out[i, j] = mass_overlap(dens[i], dens[j], d_vy)
        return out

    def residual_mass(self) -> float:
        return float(grid_norm(self.residual) ** 2)

    def to_json(self) -> dict:
        return {
            "weights": [[float(np.real(b.weight)), float(np.imag(b.weight))] for b in self.branches],
            "all_weights": self.all_weights.tolist(),
            "overlap_matrix": self.overlap_matrix().tolist(),
            "residual_mass": self.residual_mass(),
            "eps_support": self.eps_support,
            "weight_threshold": self.weight_threshold,
        }


def _joint_product(branch: Branch, split: SubsystemSplit) -> np.ndarray:
    outer = branch.weight * np.multiply.outer(
        branch.x_factor.amplitudes, branch.y_factor.amplitudes
    )
    return np.transpose(outer, np.argsort(split.x_coords + split.y_coords))


def branch_decompose(
    w: GridWaveFunction,
    split: SubsystemSplit | None = None,
    eps_support: float = EPS_SUPPORT,
    weight_threshold: float = WEIGHT_THRESHOLD,
) -> BranchDecomposition:
    """Schmidt-decompose Psi across the split and emit the disjoint modes.

    Modes with squared weight above ``weight_threshold`` are candidates,
    taken in descending weight order; a candidate is emitted as a branch
    only if its environment density overlaps every already-emitted branch
    by less than ``eps_support``.  The residual absorbs everything else.
    """
    split = _split_for(w, split)
    x_grid, y_grid = split.x_grid(w), split.y_grid(w)
    n_x = int(np.prod([a.size for a in x_grid]))
    n_y = int(np.prod([a.size for a in y_grid]))
    matrix = np.transpose(w.amplitudes, split.x_coords + split.y_coords).reshape(n_x, n_y)
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)

    d_vx = float(np.prod([a[1] - a[0] for a in x_grid]))
    d_vy = float(np.prod([a[1] - a[0] for a in y_grid]))
    all_weights = s * np.sqrt(d_vx * d_vy)
    x_shape = tuple(a.size for a in x_grid)
    y_shape = tuple(a.size for a in y_grid)

    candidates = np.flatnonzero(all_weights**2 > weight_threshold)
    branches = []
    kept_densities = []
    for j in candidates:  # svd returns descending s, so this is weight order
        y_factor = GridWaveFunction(
            y_grid, (vh[j] / np.sqrt(d_vy)).reshape(y_shape), normalize=False
        )
        dens = born_density(y_factor)
        if all(
            mass_overlap(dens, other, d_vy) < eps_support for other in kept_densities
        ):
            x_factor = GridWaveFunction(
                x_grid, (u[:, j] / np.sqrt(d_vx)).reshape(x_shape), normalize=False
            )
            branches.append(Branch(x_factor, y_factor, complex(all_weights[j])))
            kept_densities.append(dens)

    residual_amps = w.amplitudes.astype(complex).copy()
    for b in branches:
        residual_amps -= _joint_product(b, split)
    residual = GridWaveFunction(w.axes, residual_amps, normalize=False)
    return BranchDecomposition(
        split=split,
        branches=tuple(branches),
        residual=residual,
        all_weights=all_weights,
        eps_support=eps_support,
        weight_threshold=weight_threshold,
    )


@dataclass(frozen=True)
class EffectiveResult:
    """Outcome of effective-wave-function detection at a given Y.

    status is "effective" when exactly one disjoint branch claims Y and
    that branch stays clear of the residual's environment marginal; the
    wavefunction is then the branch's subsystem factor.  Otherwise status
    is "conditional-only" and the wavefunction is the plain conditional
    slice at Y.
    """

    status: str
    wavefunction: GridWaveFunction
    branch_index: int | None
    weight: complex | None
    residual_overlap: float

    @property
    def effective(self) -> bool:
        return self.status == "effective"


def detect_effective(
    w: GridWaveFunction,
    split: SubsystemSplit | None,
    y_value,
    eps_support: float = EPS_SUPPORT,
    weight_threshold: float = WEIGHT_THRESHOLD,
) -> EffectiveResult:
    """Decide whether the conditional wave function at Y is effective."""
    split = _split_for(w, split)
    decomp = branch_decompose(w, split, eps_support, weight_threshold)
    y_value = np.atleast_1d(np.asarray(y_value, dtype=float))

    # a mass tolerance of eps corresponds to an amplitude scale sqrt(eps),
    # which also absorbs the O(<f_i|f_j>) mode mixing of the decomposition
    claim_factor = np.sqrt(eps_support)
    claims = []
    for idx, b in enumerate(decomp.branches):
        mode = b.y_factor
        amp = CubicGridInterpolator(mode.axes, mode.amplitudes)(y_value[None])[0]
        if abs(amp) > claim_factor * np.max(np.abs(mode.amplitudes)):
            claims.append(idx)

    if len(claims) == 1:
        idx = claims[0]
        b = decomp.branches[idx]
        d_vy = float(np.prod([a[1] - a[0] for a in b.y_factor.axes]))
        x_first = split.x_coords + split.y_coords
        res_density = np.abs(
            np.transpose(decomp.residual.amplitudes, x_first)
        ) ** 2
        d_vx = float(np.prod([a[1] - a[0] for a in split.x_grid(w)]))
        res_marginal = res_density.sum(axis=tuple(range(len(split.x_coords)))) * d_vx
        res_overlap = mass_overlap(born_density(b.y_factor), res_marginal, d_vy)
        if res_overlap < eps_support:
            return EffectiveResult(
                status="effective",
                wavefunction=GridWaveFunction(b.x_factor.axes, b.x_factor.amplitudes),
                branch_index=idx,
                weight=b.weight,
                residual_overlap=res_overlap,
            )
    else:
        res_overlap = float("nan")

    cond = conditional_wavefunction(w, split, y_value)
    return EffectiveResult(
        status="conditional-only",
        wavefunction=cond,
        branch_index=claims[0] if len(claims) == 1 else None,
        weight=None,
        residual_overlap=res_overlap if len(claims) == 1 else float("nan"),
    )


def separable_potential(
    potential_x: Potential,
    potential_y: Potential,
    x_grid,
    y_grid,
    split: SubsystemSplit,
) -> Potential:
    """Non-interacting joint potential V(x) + V(y) as a grid table."""
    vx = potential_x.on_grid(x_grid)
    vy = potential_y.on_grid(y_grid)
    joint = np.add.outer(vx, vy)
    return Potential.table(np.transpose(joint, np.argsort(split.x_coords + split.y_coords)))


@dataclass(frozen=True)
class AutonomyReport:
    """Conditional slice vs independently evolved effective wave, over time."""

    times: np.ndarray
    distances: np.ndarray
    branch_index: int
    max_distance: float

    def to_json(self):
        return {
            "times": self.times.tolist(),
            "distances": self.distances.tolist(),
            "branch_index": self.branch_index,
            "max_distance": self.max_distance,
        }


def schrodinger_autonomy_check(
    frames: WaveFrames,
    split: SubsystemSplit,
    y_trajectory: Trajectory,
    potential_x: Potential,
    n_checks: int = 8,
    eps_support: float = EPS_SUPPORT,
) -> AutonomyReport:
    """Does the effective wave function obey its own Schrodinger equation?

    The joint frames must come from an interaction-free x-y Hamiltonian
    and the environment trajectory from the caller (its times must be a
    subset of the frame times).  The effective wave function is extracted
    once at the first frame, evolved independently under V(x) with the
    frame spacing as its own dt, and compared at ``n_checks`` times with
    the conditional wave function sliced at Y(t).
    """
    w0 = frames.wavefunction(0)
    eff = detect_effective(w0, split, y_trajectory.configurations[0], eps_support)
    if not eff.effective:
        raise ValueError("initial wave is not in effective form at Y(0)")

    dt = float(frames.times[1] - frames.times[0])
    t_span = float(y_trajectory.times[-1] - y_trajectory.times[0])
    sub_frames = evolve_frames(
        eff.wavefunction, potential_x, dt, int(round(t_span / dt)), store_every=1
    )
    check_ids = np.unique(
        np.linspace(0, y_trajectory.times.size - 1, n_checks).round().astype(int)
    )
    times, dists = [], []
    for i in check_ids:
        t = float(y_trajectory.times[i])
        j = frames.index_at(t)
        cond = conditional_wavefunction(
            frames.wavefunction(j), split, y_trajectory.configurations[i]
        )
        auto = GridWaveFunction(
            sub_frames.axes, sub_frames.amplitudes[sub_frames.index_at(t)]
        )
        times.append(t)
        dists.append(l2_distance(cond, auto))
    times = np.array(times)
    dists = np.array(dists)
    return AutonomyReport(
        times=times,
        distances=dists,
        branch_index=eff.branch_index,
        max_distance=float(dists.max()),
    )
