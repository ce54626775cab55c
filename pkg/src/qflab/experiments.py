"""Declarative experiment specs, canonical presets, and run pipelines.

A spec is a single JSON-able document; (spec, seed) fully determines every
artifact byte for byte.  Pipelines come in two families: wave experiments
(evolve a grid wave function, run particle dynamics over it, test the
statistics) and finite-model experiments (build ontological models, check
consistency and classification, run the two-system overlap argument).

Each run writes its artifacts plus a manifest recording the spec hash,
per-test pass/fail flags, and the artifact list.  The manifest also logs
wall-clock time, so it is the one file exempt from byte-identity.
"""

from __future__ import annotations

import os
import time as _time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import artifacts as art
from . import dynamics as dyn
from . import onticmodels as om
from .states import GridWaveFunction, born_density, uniform_axis

TOOL_VERSION = "1.0.0"
OUT_DIR_ENV = "QFLAB_OUT"
KINDS = ("double-slit", "box", "free-gaussian", "pbr", "ontic-model-check", "custom")
WAVE_KINDS = ("double-slit", "box", "free-gaussian", "custom")
DYNAMICS = ("bohm", "rdmp", "both", "none")
_INITIAL_KINDS = ("gaussian", "two-lobe", "stationary", "plane-wave")

__all__ = [
    "ExperimentSpec",
    "Finding",
    "SpecValidationError",
    "RunManifest",
    "preset",
    "preset_names",
    "validate",
    "run",
    "compare_bohm_rdmp",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a run needs, in plain JSON-able fields."""

    name: str
    kind: str
    seed: int = 0
    dynamics: str = "none"
    ensemble_size: int = 0
    grid: dict | None = None  # {"lo": [...], "hi": [...], "points": [...]}
    potential: dict | None = None
    initial_state: dict | None = None
    time: dict | None = None  # {"t_end": , "dt": , "sample_times": [...]}
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out_dir: str | None = None

    def tolerance(self, key: str, default: float) -> float:
        scale = float(self.tolerances.get("scale", 1.0))
        return float(self.tolerances.get(key, default)) * scale

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "seed": self.seed,
            "dynamics": self.dynamics,
            "ensemble_size": self.ensemble_size,
            "grid": self.grid,
            "potential": self.potential,
            "initial_state": self.initial_state,
            "time": self.time,
            "params": self.params,
            "tolerances": self.tolerances,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        known = {f: obj.get(f) for f in (
            "name", "kind", "seed", "dynamics", "ensemble_size", "grid",
            "potential", "initial_state", "time", "params", "tolerances", "out_dir",
        ) if obj.get(f) is not None}
        unknown = set(obj) - set(known) - {
            "grid", "potential", "initial_state", "time", "out_dir",
        }
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**known)

    @property
    def spec_hash(self) -> str:
        return art.spec_hash(self.to_json())

    def with_overrides(self, seed=None, out_dir=None, tolerance_scale=None) -> "ExperimentSpec":
        spec = self
        if seed is not None:
            spec = replace(spec, seed=int(seed))
        if out_dir is not None:
            spec = replace(spec, out_dir=str(out_dir))
        if tolerance_scale is not None:
            tol = dict(spec.tolerances)
            tol["scale"] = float(tolerance_scale)
            spec = replace(spec, tolerances=tol)
        return spec


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    field: str
    message: str

    def to_json(self):
        return {"severity": self.severity, "field": self.field, "message": self.message}


class SpecValidationError(Exception):
    """Spec rejected; findings list the offending fields."""

    def __init__(self, findings):
        self.findings = tuple(findings)
        lines = "; ".join(f"{f.field}: {f.message}" for f in self.findings)
        super().__init__(f"invalid spec: {lines}")


@dataclass(frozen=True)
class RunManifest:
    spec_hash: str
    tool_version: str
    wall_clock_seconds: float
    tests: dict
    artifacts: tuple
    passed: bool

    def to_json(self):
        return {
            "spec_hash": self.spec_hash,
            "tool_version": self.tool_version,
            "wall_clock_seconds": self.wall_clock_seconds,
            "tests": dict(self.tests),
            "artifacts": list(self.artifacts),
            "passed": self.passed,
        }


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def preset_names() -> tuple:
    return ("double-slit", "box", "free-gaussian", "pbr", "box-nomological", "duel-stationary")


def preset(name: str) -> ExperimentSpec:
    """Fully populated spec for a canonical experiment."""
    if name == "double-slit":
        # two coherent lobes spread and interfere; screen time deep in overlap
        return ExperimentSpec(
            name="double-slit",
            kind="double-slit",
            seed=7,
            dynamics="bohm",
            ensemble_size=10_000,
            grid={"lo": [-16.0], "hi": [16.0], "points": [1024]},
            potential={"kind": "free"},
            initial_state={"kind": "two-lobe", "separation": 7.0, "sigma": 0.7},
            time={"t_end": 3.0, "dt": 0.001, "sample_times": [1.5, 3.0]},
        )
    if name == "box":
        return ExperimentSpec(
            name="box",
            kind="box",
            seed=5,
            dynamics="bohm",
            ensemble_size=200,
            grid={"lo": [-2.0], "hi": [2.0], "points": [512]},
            potential={"kind": "box", "inner_lo": [-1.0], "inner_hi": [1.0], "height": 1e4},
            initial_state={"kind": "stationary", "level": 0},
            time={"t_end": 0.5, "dt": 0.0002, "sample_times": [0.25, 0.5]},
        )
    if name == "free-gaussian":
        return ExperimentSpec(
            name="free-gaussian",
            kind="free-gaussian",
            seed=11,
            dynamics="both",
            ensemble_size=10_000,
            grid={"lo": [-24.0], "hi": [24.0], "points": [512]},
            potential={"kind": "free"},
            initial_state={"kind": "gaussian", "centers": [0.0], "sigmas": [1.0]},
            time={
                "t_end": 2.0,
                "dt": 0.002,
                "sample_times": [round(t, 3) for t in np.linspace(0.2, 2.0, 10)],
            },
        )
    if name == "pbr":
        return ExperimentSpec(
            name="pbr",
            kind="pbr",
            seed=3,
            params={"overlap": 0.25, "n_shared": 4, "n_exclusive": 6},
        )
    if name == "box-nomological":
        return ExperimentSpec(
            name="box-nomological",
            kind="ontic-model-check",
            seed=0,
            params={"n_cells": 64, "levels": [1, 2]},
        )
    if name == "duel-stationary":
        return ExperimentSpec(
            name="duel-stationary",
            kind="box",
            seed=13,
            dynamics="both",
            ensemble_size=2000,
            grid={"lo": [-2.0], "hi": [2.0], "points": [512]},
            potential={"kind": "box", "inner_lo": [-1.0], "inner_hi": [1.0], "height": 1e4},
            initial_state={"kind": "stationary", "level": 0},
            time={
                "t_end": 0.5,
                "dt": 0.0002,
                "sample_times": [round(t, 3) for t in np.linspace(0.05, 0.5, 10)],
            },
        )
    raise ValueError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _build_axes(grid: dict) -> tuple:
    return tuple(
        uniform_axis(lo, hi, n)
        for lo, hi, n in zip(grid["lo"], grid["hi"], grid["points"])
    )


def _build_potential(spec: ExperimentSpec) -> dyn.Potential:
    if spec.potential is None:
        return dyn.Potential.free()
    return dyn.Potential.from_json(spec.potential)


def _build_initial(spec: ExperimentSpec, axes, potential) -> GridWaveFunction:
    st = spec.initial_state
    kind = st["kind"]
    if kind == "gaussian":
        return dyn.gaussian_packet(
            axes, st["centers"], st["sigmas"], st.get("momenta")
        )
    if kind == "two-lobe":
        if len(axes) != 1:
            raise ValueError("two-lobe initial state is one-dimensional")
        return dyn.two_lobe_packet(
            axes[0], st["separation"], st["sigma"], tuple(st.get("momenta", (0.0, 0.0)))
        )
    if kind == "stationary":
        if len(axes) != 1:
            raise ValueError("stationary initial state is one-dimensional")
        # eigenstate of the run's own step map, so the run holds it still
        dt = spec.time["dt"] if spec.time else None
        return dyn.stationary_state(axes[0], potential, st.get("level", 0), dt=dt)
    if kind == "plane-wave":
        if len(axes) != 1:
            raise ValueError("plane-wave initial state is one-dimensional")
        return dyn.plane_wave(axes[0], st["mode"])
    raise ValueError(f"unknown initial state kind {kind!r}")


def _interior_zero_risk(w: GridWaveFunction) -> bool:
    """Near-zero density strictly between two regions carrying real mass."""
    dens = born_density(w)
    for d in range(w.ndim):
        marg = dens.sum(axis=tuple(i for i in range(w.ndim) if i != d))
        peak = marg.max()
        for i in np.flatnonzero(marg < 1e-16 * peak):
            left = marg[:i].max() if i > 0 else 0.0
            right = marg[i + 1 :].max() if i + 1 < marg.size else 0.0
            if left > 1e-3 * peak and right > 1e-3 * peak:
                return True
    return False


def validate(spec: ExperimentSpec) -> list:
    """Structural and sanity findings; errors make the spec unrunnable."""
    findings = []

    def error(field, message):
        findings.append(Finding("error", field, message))

    def warning(field, message):
        findings.append(Finding("warning", field, message))

    if spec.kind not in KINDS:
        error("kind", f"unknown kind {spec.kind!r}; known: {', '.join(KINDS)}")
        return findings
    if spec.dynamics not in DYNAMICS:
        error("dynamics", f"unknown dynamics {spec.dynamics!r}")
        return findings

    if spec.kind in ("pbr", "ontic-model-check"):
        if spec.dynamics != "none":
            error("dynamics", f"{spec.kind} experiments have no particle dynamics")
        if spec.grid is not None or spec.time is not None:
            warning("grid", f"{spec.kind} experiments ignore grid and time fields")
        return findings

    # wave kinds from here on
    if spec.grid is None:
        error("grid", "wave experiments need a grid")
    else:
        lo, hi, pts = spec.grid.get("lo"), spec.grid.get("hi"), spec.grid.get("points")
        if not (isinstance(lo, list) and isinstance(hi, list) and isinstance(pts, list)
                and len(lo) == len(hi) == len(pts) and len(lo) > 0):
            error("grid", "grid needs equal-length lo/hi/points lists")
        else:
            for d, (a, b, n) in enumerate(zip(lo, hi, pts)):
                if not a < b:
                    error("grid", f"axis {d}: lo must be below hi")
                if int(n) < 8:
                    error("grid", f"axis {d}: needs at least 8 points")

    if spec.time is None:
        error("time", "wave experiments need t_end and dt")
    else:
        t_end = spec.time.get("t_end", 0.0)
        dt = spec.time.get("dt", 0.0)
        if not t_end > 0:
            error("time", "t_end must be positive")
        if not dt > 0:
            error("time", "dt must be positive")
        elif dt > t_end:
            error("time", "dt exceeds t_end")
        sample_times = spec.time.get("sample_times", [])
        if sample_times:
            st = np.asarray(sample_times, dtype=float)
            if np.any(np.diff(st) <= 0):
                error("time", "sample_times must be strictly increasing")
            elif t_end > 0 and (st[0] < 0 or st[-1] > t_end + 1e-12):
                error("time", "sample_times must lie within [0, t_end]")

    if spec.initial_state is None:
        error("initial_state", "wave experiments need an initial state")
    elif spec.initial_state.get("kind") not in _INITIAL_KINDS:
        error(
            "initial_state",
            f"unknown kind {spec.initial_state.get('kind')!r}; known: {', '.join(_INITIAL_KINDS)}",
        )

    if spec.potential is not None and spec.potential.get("kind") not in (
        "free", "box", "slit-barrier", "table",
    ):
        error("potential", f"unknown potential kind {spec.potential.get('kind')!r}")

    if spec.dynamics != "none":
        if spec.ensemble_size < 1:
            error("ensemble_size", "dynamics requested but ensemble is empty")
        elif spec.dynamics in ("bohm", "both") and spec.ensemble_size < 100:
            error(
                "ensemble_size",
                f"{spec.ensemble_size} trajectories are underpowered for the "
                "equivariance test; need at least 100",
            )

    if any(f.severity == "error" for f in findings):
        return findings

    # heuristics that need the grid built
    axes = _build_axes(spec.grid)
    dx_min = min(float(a[1] - a[0]) for a in axes)
    if spec.time["dt"] > dx_min:
        findings.append(
            Finding(
                "warning",
                "time",
                f"dt={spec.time['dt']} exceeds the finest grid spacing {dx_min:.4g}; "
                "fast momentum components will be under-resolved in time",
            )
        )
    try:
        w0 = _build_initial(spec, axes, _build_potential(spec))
    except (KeyError, ValueError) as exc:
        findings.append(Finding("error", "initial_state", str(exc)))
        return findings
    if _interior_zero_risk(w0):
        findings.append(
            Finding(
                "warning",
                "initial_state",
                "initial density has interior near-zeros; trajectories may hit nodes",
            )
        )
    return findings


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def _out_dir_for(spec: ExperimentSpec) -> Path:
    root = spec.out_dir or os.environ.get(OUT_DIR_ENV) or "qflab-runs"
    return Path(root) / spec.name


def compare_bohm_rdmp(spec: ExperimentSpec) -> dyn.DivergenceReport:
    """Run both dynamics for a spec requesting them and compare marginals."""
    if spec.dynamics != "both":
        raise ValueError("spec must request dynamics 'both'")
    axes = _build_axes(spec.grid)
    potential = _build_potential(spec)
    w0 = _build_initial(spec, axes, potential)
    dt = float(spec.time["dt"])
    n_steps = int(round(spec.time["t_end"] / dt))
    frames = dyn.evolve_frames(w0, potential, dt, n_steps)
    snapped = [float(np.round(t / dt) * dt) for t in spec.time["sample_times"]]
    return dyn.compare_bohm_rdmp(frames, snapped, spec.ensemble_size, spec.seed)


def _wave_pipeline(spec: ExperimentSpec, out: Path, tests: dict, files: list):
    axes = _build_axes(spec.grid)
    potential = _build_potential(spec)
    w0 = _build_initial(spec, axes, potential)
    dt = float(spec.time["dt"])
    t_end = float(spec.time["t_end"])
    n_steps = int(round(t_end / dt))
    frames = dyn.evolve_frames(
        w0, potential, dt, n_steps, store_every=int(spec.time.get("store_every", 1))
    )
    sample_times = spec.time.get("sample_times") or [t_end]
    snapped = [float(np.round(t / dt) * dt) for t in sample_times]
    sample_ids = [frames.index_at(t) for t in snapped]

    subset = dyn.WaveFrames(
        frames.axes, frames.times[sample_ids], frames.amplitudes[sample_ids]
    )
    files.append(art.write_frames(out / "wave_frames.bin", subset))

    is_box = spec.kind == "box"
    if is_box:
        dens0 = frames.density(0)
        drift = max(
            float(np.max(np.abs(frames.density(i) - dens0))) for i in sample_ids
        )
        tests["stationary-density"] = drift <= spec.tolerance("stationary_density", 1e-6)

    if spec.dynamics in ("bohm", "both"):
        q0 = dyn.born_sample_many(w0, spec.ensemble_size, dyn.derive_seed(spec.seed, 1))
        ensemble = dyn.run_bohm_ensemble(
            frames, q0, seed=dyn.derive_seed(spec.seed, 1), spec_ref=spec.name
        )
        head = dyn.Ensemble(ensemble.trajectories[: min(10, ensemble.size)], spec.name)
        files.append(art.write_ensemble_csv(out / "bohm_trajectories_head.csv", head))
        positions = dyn.Ensemble(
            tuple(
                dyn.Trajectory(
                    traj.times[sample_ids], traj.configurations[sample_ids], traj.seed
                )
                for traj in ensemble.trajectories
            ),
            spec.name,
        )
        files.append(art.write_ensemble_csv(out / "bohm_positions.csv", positions))

        t_screen = snapped[-1]
        report = dyn.equivariance_test(
            ensemble,
            frames.wavefunction(sample_ids[-1]),
            t_screen,
            significance=spec.tolerance("significance", dyn.CHI2_SIGNIFICANCE),
        )
        files.append(art.write_json(out / "equivariance.json", report.to_json()))
        tests["equivariance"] = report.passed

        if is_box:
            max_drift = max(
                float(np.max(np.linalg.norm(
                    traj.configurations - traj.configurations[0], axis=1
                )))
                for traj in ensemble.trajectories
            )
            tests["constant-trajectories"] = max_drift <= spec.tolerance(
                "constancy", 1e-6
            )

    if spec.dynamics in ("rdmp", "both"):
        rensemble = dyn.rdmp_ensemble(
            frames, snapped, spec.ensemble_size, dyn.derive_seed(spec.seed, 2), spec.name
        )
        files.append(art.write_ensemble_csv(out / "rdmp_positions.csv", rensemble))
        gofs = []
        for t, i in zip(snapped, sample_ids):
            gof = dyn.chi_square_gof(
                rensemble.positions_at(t),
                frames.wavefunction(i),
                significance=spec.tolerance("significance", dyn.CHI2_SIGNIFICANCE),
            )
            gofs.append({"time": t, **gof.to_json()})
        files.append(art.write_json(out / "rdmp_marginals.json", gofs))
        tests["rdmp-marginals"] = all(g["passed"] for g in gofs)

    if spec.dynamics == "both":
        duel = dyn.compare_bohm_rdmp(frames, snapped, spec.ensemble_size, spec.seed)
        files.append(art.write_json(out / "bohm_vs_rdmp.json", duel.to_json()))
        tests["tv-agreement"] = duel.tv_passed


def _pbr_pipeline(spec: ExperimentSpec, out: Path, tests: dict, files: list):
    tol = spec.tolerance("structure", 1e-12)
    construction = om.build_pbr_states()
    table = construction.probability_table()
    structure = {
        "born_matrix": table.tolist(),
        "gram_deviation": construction.measurement.gram_deviation(),
        "zero_diagonal_max": construction.zero_diagonal_max(),
        "column_sums": table.sum(axis=0).tolist(),
        "pairing": list(construction.pairing),
    }
    files.append(art.write_json(out / "pbr_structure.json", structure))
    tests["structure"] = (
        structure["gram_deviation"] <= tol
        and structure["zero_diagonal_max"] <= tol
        and max(abs(s - 1.0) for s in structure["column_sums"]) <= tol
    )

    random_model = om.random_epistemic_model(
        overlap=float(spec.params.get("overlap", 0.25)),
        seed=spec.seed,
        n_shared=int(spec.params.get("n_shared", 4)),
        n_exclusive=int(spec.params.get("n_exclusive", 6)),
    )
    catalog = dict(random_model.catalog)
    measurements = dict(random_model.measurements)
    trivial = om.build_trivial_ontic_model(catalog, measurements)
    revised = om.build_revised_overlap_model(catalog, measurements)

    outcomes = {
        "random-epistemic": om.pbr_contradiction(random_model).to_json(),
        "trivial-ontic": om.pbr_contradiction(trivial).to_json(),
        "revised-overlap": om.pbr_contradiction(revised).to_json(),
    }
    outcomes["random-epistemic-consistency"] = om.check_consistency(random_model).to_json()
    files.append(art.write_json(out / "contradiction.json", outcomes))
    files.append(art.write_json(out / "random_model.json", random_model.to_json()))
    tests["contradiction"] = outcomes["random-epistemic"]["derivable"]
    tests["trivial-not-derivable"] = not outcomes["trivial-ontic"]["derivable"]
    tests["revised-blocked"] = not outcomes["revised-overlap"]["derivable"]
    tests["random-model-consistent"] = outcomes["random-epistemic-consistency"]["passed"]


def _ontic_check_pipeline(spec: ExperimentSpec, out: Path, tests: dict, files: list):
    model = om.build_box_nomological_model(
        n_cells=int(spec.params.get("n_cells", 64)),
        levels=tuple(spec.params.get("levels", (1, 2))),
    )
    files.append(art.write_json(out / "box_model.json", model.to_json()))

    consistency = om.check_consistency(model, tol=spec.tolerance("consistency", 1e-12))
    files.append(art.write_json(out / "consistency.json", consistency.to_json()))
    tests["consistency"] = consistency.passed

    overlap_report = om.classify(model)
    files.append(art.write_json(out / "classification.json", overlap_report.to_json()))
    n = len(model.preparations)
    tests["epistemic-pairs"] = (
        overlap_report.classification == "psi-epistemic"
        and len(overlap_report.epistemic_pairs) == n * (n - 1) // 2
    )

    outcome = om.pbr_contradiction(model)
    files.append(art.write_json(out / "contradiction.json", outcome.to_json()))
    tests["not-derivable"] = not outcome.derivable

    projected = om.standard_projection(model)
    proj_consistency = om.check_consistency(projected)
    files.append(art.write_json(out / "projection_consistency.json", proj_consistency.to_json()))
    tests["projection-fails"] = not proj_consistency.passed

    files.append(
        art.write_json(out / "double_sum.json", om.double_sum_diagnostic(model, "energy"))
    )


def run(spec: ExperimentSpec) -> RunManifest:
    """Validate, execute the pipeline, write artifacts plus manifest."""
    findings = validate(spec)
    errors = [f for f in findings if f.severity == "error"]
    if errors:
        raise SpecValidationError(errors)

    out = _out_dir_for(spec)
    out.mkdir(parents=True, exist_ok=True)
    started = _time.perf_counter()
    tests: dict = {}
    files: list = []

    files.append(art.write_json(out / "spec.json", spec.to_json()))
    if findings:
        files.append(
            art.write_json(out / "findings.json", [f.to_json() for f in findings])
        )

    if spec.kind in WAVE_KINDS:
        _wave_pipeline(spec, out, tests, files)
    elif spec.kind == "pbr":
        _pbr_pipeline(spec, out, tests, files)
    elif spec.kind == "ontic-model-check":
        _ontic_check_pipeline(spec, out, tests, files)
    else:
        raise SpecValidationError([Finding("error", "kind", f"unknown kind {spec.kind!r}")])

    manifest = RunManifest(
        spec_hash=spec.spec_hash,
        tool_version=TOOL_VERSION,
        wall_clock_seconds=_time.perf_counter() - started,
        tests=tests,
        artifacts=tuple(sorted(p.name for p in files)),
        passed=all(tests.values()) if tests else True,
    )
    art.write_json(out / "manifest.json", manifest.to_json())
    return manifest
