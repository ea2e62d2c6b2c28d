"""Run configurations, built-in presets, and the experiment drivers.

A configuration is a plain mapping (YAML or JSON on disk)::

    base: dschang-slope            # optional: start from a preset
    domain: {lo: [-1, -1, -1], hi: [1, 1, 1], n: [6, 6, 6]}   # or spacing: 1/3
    degree: 2
    material: {nu: 1, E: 2.5, alpha: 0.25}                    # or lam, mu
    source: {g_c: 0.076, x_c: [0, 0, 0], r_0: 1/9, t_0: 0, quadrature: ball}
    kappa0: {k11: 0.02, k22: 0.3, k33: 0.015, k12: 5e-4, k13: 7.5e-4, k23: 1.25e-3}
    time: {k: 3^-5, T_f: 3, C_sr: 1/3}
    initial: {w0: {kind: zero}, w1: {kind: zero}}

Numbers may be written as ``a^b`` or ``a/b``.
"""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import MaterialParams, build_operators
from .io_emit import (
    content_hash, emit_convergence_table, emit_manifest, emit_monitor_csv, emit_scenario_table,
    emit_vtk, fmt_resolution, vertex_values,
)
from .mesh import BoxDomain, build_box_mesh, mesh_statistics
from .norms import ErrorSeries, max_in_time, prolong, prolongation
from .source import SourceConfig, assemble_source_load
from .space import build_space
from .stress import (
    QuadratureData, boundary_mismatch, component_norms, project_stress, recover_stress, stress_gram_matrix,
    stress_norm,
)
from .timestepper import (
    CFLRefusal, InitialData, SchemeConfig, Stepper, check_cfl, initial_state, initialize, run,
    spectral_step_limit,
)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def parse_number(value) -> float:
    """Float from a number or a string such as '3^-5', '1/3', '7.6e-2'."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    s = str(value).strip().replace(" ", "")
    try:
        if "^" in s:
            base, exp = s.split("^")
            return float(base) ** float(exp)
        if "/" in s:
            num, den = s.split("/")
            return float(num) / float(den)
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse number {value!r}") from exc


# --- presets ---------------------------------------------------------------------------

EXAMPLE3_KAPPA0 = {"k11": 2e-2, "k22": 3e-1, "k33": 1.5e-2, "k12": 0.5e-3, "k13": 0.75e-3, "k23": 1.25e-3}

_EXAMPLE3 = {
    "domain": {"lo": [-1, -1, -1], "hi": [1, 1, 1], "n": [6, 6, 6]},
    "degree": 2,
    "material": {"nu": 1.0, "E": 2.5, "alpha": 0.25},
    "kappa0": EXAMPLE3_KAPPA0,
    "time": {"k": "3^-5", "C_sr": "1/3"},
    "initial": {"w0": {"kind": "zero"}, "w1": {"kind": "zero"}},
    "full": {"spacing": "3^-3", "degree": 4},
}

PRESETS = {
    "example1": {
        "domain": {"lo": [0, 0, 0], "hi": [1, 1, 1], "n": [3, 3, 3]},
        "degree": 2,
        "material": {"nu": 1.0, "E": 2.5, "alpha": 1.0},
        "source": {"g_c": 1 / math.pi, "x_c": [0.5, 0.5, 0.5], "r_0": "3^-3", "t_0": 0.0},
        "time": {"k": "3^-5", "T_f": 1.0, "C_sr": 1.0},
        "initial": {"w0": {"kind": "zero"}, "w1": {"kind": "zero"}},
        "full": {"spacing": "3^-3", "degree": 4},
    },
    "example2": {
        "domain": {"lo": [-1, -1, -1], "hi": [1, 1, 1], "n": [3, 3, 3]},
        "degree": 2,
        "material": {"nu": 1.0, "E": 2.5, "alpha": 0.25},
        "source": {"g_c": 1 / math.pi, "x_c": [0, 0, 0], "r_0": "3^-3", "t_0": 0.0},
        "time": {"k": "3^-5", "T_f": 2.0, "C_sr": "1/3"},
        "initial": {"w0": {"kind": "zero"}, "w1": {"kind": "zero"}},
        "full": {"spacing": "3^-3", "degree": 4},
    },
    "dschang-slope": dict(copy.deepcopy(_EXAMPLE3), source={
        "g_c": 0.076, "x_c": [0, 0, 0], "r_0": "3^-2", "t_0": 0.0, "unit_note": "slope action 7.6%"},
        time={"k": "3^-5", "T_f": 3.0, "C_sr": "1/3"}),
    "dschang-altitude": dict(copy.deepcopy(_EXAMPLE3), source={
        "g_c": 0.7, "x_c": [0, 0, 0], "r_0": "3^-2", "t_0": 0.0, "unit_note": "altitude difference 0.7 km"},
        time={"k": "3^-5", "T_f": 3.0, "C_sr": "1/3"}),
    "mbankolo": dict(copy.deepcopy(_EXAMPLE3), source={
        "g_c": 0.0438, "x_c": [0, 0, 0], "r_0": "3^-2", "t_0": 0.0, "unit_note": "altitude difference 43.8 m"},
        time={"k": "3^-5", "T_f": 3.0, "C_sr": "1/3"}),
    "gouache": dict(copy.deepcopy(_EXAMPLE3), source={
        "g_c": 0.209, "x_c": [0, 0, 0], "r_0": "3^-2", "t_0": 0.0, "unit_note": "altitude difference 209 m"},
        time={"k": "3^-5", "T_f": 1.0, "C_sr": "1/3"}),
}

# Values reported for the four landslide scenarios at h = 3^-3, k = 3^-5:
# max-in-time displacement norm and the six stress component norms
# (k11, k22, k33, k12, k13, k23).  Informational only.
REPORTED_SCENARIO_VALUES = {
    "dschang-slope": (0.1182, (0.6632, 0.8961, 4.2313, 0.0269, 0.2708, 0.3203)),
    "dschang-altitude": (0.0783, (0.4412, 0.8961, 2.7684, 0.0174, 0.1774, 0.2092)),
    "mbankolo": (0.1189, (0.6670, 0.8961, 4.2471, 0.0271, 0.2725, 0.3222)),
    "gouache": (0.0132, (0.0909, 0.8961, 0.4738, 0.0033, 0.0302, 0.0356)),
}

SCENARIO_PRESETS = ("dschang-slope", "dschang-altitude", "mbankolo", "gouache")

_TOP_KEYS = {"name", "base", "domain", "degree", "material", "source", "kappa0", "time", "initial",
             "allow_cfl_violation", "snapshot_stride", "lump_mass", "full"}
_SECTION_KEYS = {
    "domain": {"lo", "hi", "n", "spacing"},
    "material": {"nu", "E", "alpha", "lam", "mu"},
    "source": {"g_c", "x_c", "r_0", "t_0", "unit_note", "quadrature"},
    "time": {"k", "T_f", "C_sr", "start"},
    "initial": {"w0", "w1"},
    "full": {"spacing", "degree"},
}
_FIELD_KEYS = {"kind", "amplitude", "direction", "seed"}


# --- configuration ---------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    domain: BoxDomain
    degree: int
    params: MaterialParams
    source: SourceConfig | None
    kappa0: np.ndarray
    k: float
    T_f: float
    C_sr: float
    initial: dict
    source_quadrature: str = "ball"
    allow_cfl_violation: bool = False
    snapshot_stride: int | None = None
    lump_mass: bool = False
    engineering: tuple | None = None      # (E, alpha) when given
    start: str = "taylor2"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def coercive(self) -> bool:
        return self.params.coercive

    def scheme(self, k=None, T_f=None, allow=None) -> SchemeConfig:
        return SchemeConfig(
            k=self.k if k is None else k,
            T_f=self.T_f if T_f is None else T_f,
            C_sr=self.C_sr,
            source=self.source,
            allow_cfl_violation=self.allow_cfl_violation if allow is None else allow,
            start=self.start,
        )

    def initial_data(self) -> InitialData:
        return InitialData(
            w0=_field_function(self.initial.get("w0"), self.domain),
            w1=_field_function(self.initial.get("w1"), self.domain),
            kappa0=self.kappa0,
        )

    def with_changes(self, **changes) -> "ScenarioConfig":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return ScenarioConfig(**data)


def bubble(domain: BoxDomain):
    """prod_i sin(pi (x_i - lo_i) / L_i): smooth, zero on the boundary."""
    lo = np.array(domain.lo)
    ext = np.array(domain.hi) - lo
    def f(p):
        return np.prod(np.sin(np.pi * (np.atleast_2d(p) - lo) / ext), axis=1)
    return f


def _field_function(entry, domain):
    if entry is None:
        return None
    kind = entry.get("kind", "zero")
    amp = parse_number(entry.get("amplitude", 1.0))
    direction = np.array([parse_number(v) for v in entry.get("direction", [1, 1, 1])])
    if kind == "zero":
        return None
    if kind == "bubble":
        b = bubble(domain)
        return lambda p: amp * b(p)[:, None] * direction[None, :]
    if kind == "random":
        seed = int(entry.get("seed", 0))
        def f(p):
            rng = np.random.default_rng(seed)
            return amp * rng.standard_normal((len(np.atleast_2d(p)), 3))
        return f
    raise ConfigError(f"unknown initial field kind {kind!r}")


def _kappa0_matrix(entry) -> np.ndarray:
    if entry is None:
        return np.zeros((3, 3))
    if isinstance(entry, dict):
        unknown = set(entry) - {"k11", "k22", "k33", "k12", "k13", "k23"}
        if unknown:
            raise ConfigError(f"unknown kappa0 entries {sorted(unknown)}")
        m = np.zeros((3, 3))
        for key, val in entry.items():
            i, j = int(key[1]) - 1, int(key[2]) - 1
            m[i, j] = m[j, i] = parse_number(val)
        return m
    m = np.array([[parse_number(v) for v in row] for row in entry])
    if m.shape != (3, 3) or not np.array_equal(m, m.T):
        raise ConfigError("kappa0 must be a symmetric 3x3 matrix")
    return m


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("initial",):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_keys(raw: dict):
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    for section, allowed in _SECTION_KEYS.items():
        val = raw.get(section)
        if isinstance(val, dict):
            bad = set(val) - allowed
            if bad:
                raise ConfigError(f"unknown keys in '{section}': {sorted(bad)}")
    for name in ("w0", "w1"):
        entry = (raw.get("initial") or {}).get(name)
        if isinstance(entry, dict) and set(entry) - _FIELD_KEYS:
            raise ConfigError(f"unknown keys in initial.{name}: {sorted(set(entry) - _FIELD_KEYS)}")


def _material(entry: dict):
    if "nu" not in entry:
        raise ConfigError("material.nu (density) is required")
    nu = parse_number(entry["nu"])
    has_eng = "E" in entry or "alpha" in entry
    has_lame = "lam" in entry or "mu" in entry
    if has_eng and not ("E" in entry and "alpha" in entry):
        raise ConfigError("material needs both E and alpha")
    if has_lame and not ("lam" in entry and "mu" in entry):
        raise ConfigError("material needs both lam and mu")
    if not (has_eng or has_lame):
        raise ConfigError("material needs (E, alpha) or (lam, mu)")
    try:
        if has_eng:
            E, alpha = parse_number(entry["E"]), parse_number(entry["alpha"])
            params = MaterialParams.from_engineering(E, alpha, nu)
            if has_lame:
                lam, mu = parse_number(entry["lam"]), parse_number(entry["mu"])
                if not (math.isclose(lam, params.lam, rel_tol=1e-12, abs_tol=1e-14)
                        and math.isclose(mu, params.mu, rel_tol=1e-12, abs_tol=1e-14)):
                    raise ConfigError(
                        f"(E, alpha) = ({E}, {alpha}) gives lam = {params.lam}, mu = {params.mu}; "
                        f"config also says lam = {lam}, mu = {mu}"
                    )
            return params, (E, alpha)
        return MaterialParams(nu=nu, lam=parse_number(entry["lam"]), mu=parse_number(entry["mu"])), None
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(raw: dict, full: bool = False) -> ScenarioConfig:
    """Validate a configuration mapping; ``base`` pulls in a preset first."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    if "base" in raw:
        base = raw["base"]
        if base not in PRESETS:
            raise ConfigError(f"unknown base preset {base!r}")
        raw = _merge(dict(PRESETS[base], name=base), {k: v for k, v in raw.items() if k != "base"})
    _check_keys(raw)
    for key in ("domain", "material", "time"):
        if key not in raw:
            raise ConfigError(f"missing required section '{key}'")

    dom = raw["domain"]
    degree = int(raw.get("degree", 2))
    if full and "full" in raw:
        dom = {k: v for k, v in dom.items() if k != "n"}
        dom["spacing"] = raw["full"].get("spacing", dom.get("spacing"))
        degree = int(raw["full"].get("degree", degree))
    if "lo" not in dom or "hi" not in dom:
        raise ConfigError("domain needs lo and hi")
    lo = [parse_number(v) for v in dom["lo"]]
    hi = [parse_number(v) for v in dom["hi"]]
    try:
        if "n" in dom:
            domain = BoxDomain(lo, hi, tuple(int(v) for v in dom["n"]))
        elif "spacing" in dom:
            domain = BoxDomain.from_spacing(lo, hi, parse_number(dom["spacing"]))
        else:
            raise ConfigError("domain needs n or spacing")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 1 <= degree <= 4:
        raise ConfigError(f"degree must be in 1..4, got {degree}")

    params, engineering = _material(raw["material"])

    t = raw["time"]
    for key in ("k", "T_f", "C_sr"):
        if key not in t:
            raise ConfigError(f"time.{key} is required")
    k, T_f, C_sr = parse_number(t["k"]), parse_number(t["T_f"]), parse_number(t["C_sr"])
    if not (k > 0 and T_f > 0):
        raise ConfigError("k and T_f must be positive")
    steps = T_f / k
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigError(f"T_f / k = {steps:.12g} is not an integer")
    start = str(t.get("start", "taylor2"))
    if start not in ("taylor2", "linear"):
        raise ConfigError(f"time.start must be 'taylor2' or 'linear', got {start!r}")
    allow = bool(raw.get("allow_cfl_violation", False))
    if not C_sr < math.sqrt(2 * params.nu) and not allow:
        raise ConfigError(f"C_sr = {C_sr} must be below sqrt(2 nu) = {math.sqrt(2 * params.nu):.6g}")
    if not C_sr > 0:
        raise ConfigError("C_sr must be positive")

    source = None
    quadrature = "ball"
    src = raw.get("source")
    if src:
        for key in ("g_c", "x_c", "r_0"):
            if key not in src:
                raise ConfigError(f"source.{key} is required")
        quadrature = src.get("quadrature", "ball")
        if quadrature not in ("ball", "pointwise"):
            raise ConfigError(f"unknown source quadrature {quadrature!r}")
        try:
            source = SourceConfig(
                g_c=parse_number(src["g_c"]),
                x_c=tuple(parse_number(v) for v in src["x_c"]),
                r_0=parse_number(src["r_0"]),
                t_0=parse_number(src.get("t_0", 0.0)),
                unit_note=str(src.get("unit_note", "")),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not source.fits_in(domain):
            raise ConfigError("the source ball must lie inside the domain")

    initial = copy.deepcopy(raw.get("initial") or {})
    for entry in initial.values():
        _field_function(entry, domain)   # validate kinds early

    stride = raw.get("snapshot_stride")
    return ScenarioConfig(
        name=str(raw.get("name", "custom")),
        domain=domain,
        degree=degree,
        params=params,
        source=source,
        kappa0=_kappa0_matrix(raw.get("kappa0")),
        k=k,
        T_f=T_f,
        C_sr=C_sr,
        initial=initial,
        source_quadrature=quadrature,
        allow_cfl_violation=allow,
        snapshot_stride=None if stride is None else int(stride),
        lump_mass=bool(raw.get("lump_mass", False)),
        engineering=engineering,
        start=start,
        raw=copy.deepcopy(raw),
    )


def load_preset(name: str, full: bool = False, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    raw = _merge(dict(PRESETS[name], name=name), overrides)
    return config_from_dict(raw, full=full)


def parse_config(path) -> ScenarioConfig:
    """Read a YAML or JSON configuration file."""
    import yaml
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw or {})


# --- pipeline --------------------------------------------------------------------------

@dataclass
class Problem:
    """Mesh, space, operators and source load for one configuration."""
    cfg: ScenarioConfig
    mesh: object
    space: object
    ops: object
    load: np.ndarray | None
    setup_seconds: float

    @classmethod
    def build(cls, cfg: ScenarioConfig, domain=None, degree=None):
        t0 = time.process_time()
        mesh = build_box_mesh(cfg.domain if domain is None else domain)
        space = build_space(mesh, cfg.degree if degree is None else degree)
        ops = build_operators(space, cfg.params, lump_mass=cfg.lump_mass)
        load = None
        if cfg.source is not None:
            load = assemble_source_load(space, cfg.source, method=cfg.source_quadrature)
        return cls(cfg, mesh, space, ops, load, time.process_time() - t0)

    def stepper(self, k=None, T_f=None, allow=None) -> Stepper:
        return Stepper(self.ops, self.cfg.scheme(k, T_f, allow), self.load)

    def cfl(self, k=None):
        return check_cfl(self.cfg.k if k is None else k, self.mesh.h, self.cfg.C_sr, self.cfg.params.nu)


class StressTracker:
    """Observer keeping max-in-time stress component norms."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.quad = QuadratureData.for_space(problem.space)
        self.maxima = np.zeros(6)
        self.full_norm_max = 0.0

    def __call__(self, n, t, w):
        field = recover_stress(self.problem.space, w, self.problem.cfg.kappa0, self.problem.cfg.params, self.quad)
        self.maxima = np.maximum(self.maxima, component_norms(field))
        self.full_norm_max = max(self.full_norm_max, stress_norm(field))


def simulate(cfg: ScenarioConfig, problem: Problem | None = None, observer=None, track_stress=True,
             stop_on_instability=False, k=None, T_f=None, allow=None):
    """Run one configuration; returns ``(problem, RunResult, StressTracker | None)``."""
    problem = Problem.build(cfg) if problem is None else problem
    tracker = StressTracker(problem) if track_stress else None

    def obs(n, t, w):
        if tracker is not None:
            tracker(n, t, w)
        if observer is not None:
            observer(n, t, w)

    result = run(
        problem.ops, cfg.scheme(k, T_f, allow), cfg.initial_data(), problem.load,
        observer=obs, snapshot_stride=cfg.snapshot_stride, stop_on_instability=stop_on_instability,
    )
    return problem, result, tracker


def _manifest(cfg: ScenarioConfig, problem: Problem, cfl, extra=None, timings=None):
    resolved = {
        "name": cfg.name,
        "domain": {"lo": cfg.domain.lo, "hi": cfg.domain.hi, "n": cfg.domain.n},
        "degree": cfg.degree,
        "material": {"nu": cfg.params.nu, "lam": cfg.params.lam, "mu": cfg.params.mu,
                     "E_alpha": cfg.engineering},
        "source": None if cfg.source is None else {
            "g_c": cfg.source.g_c, "x_c": cfg.source.x_c, "r_0": cfg.source.r_0, "t_0": cfg.source.t_0,
            "unit_note": cfg.source.unit_note, "quadrature": cfg.source_quadrature,
        },
        "kappa0": cfg.kappa0,
        "time": {"k": cfg.k, "T_f": cfg.T_f, "C_sr": cfg.C_sr, "N": int(round(cfg.T_f / cfg.k)),
                 "start": cfg.start},
        "initial": cfg.initial,
        "allow_cfl_violation": cfg.allow_cfl_violation,
        "lump_mass": cfg.lump_mass,
    }
    manifest = {
        "configuration": resolved,
        "input_hash": content_hash(resolved),
        "mesh": mesh_statistics(problem.mesh),
        "scalar_dofs": problem.space.num_dofs,
        "cfl": {
            "k_over_h": cfl.ratio, "C_sr": cfl.C_sr, "sqrt_2nu": cfl.C_sr_limit,
            "ratio_ok": cfl.ratio_ok, "constant_ok": cfl.constant_ok, "passed": cfl.passed,
        },
        "coercive": cfg.coercive,
        "lam_plus_mu": cfg.params.lam + cfg.params.mu,
    }
    if not cfg.coercive:
        manifest["warnings"] = ["lam + mu <= 0: the stiffness form is not coercive; growth is expected"]
    if extra:
        manifest.update(extra)
    manifest["timings"] = timings or {}
    return manifest


def cmd_run(cfg: ScenarioConfig, out_dir, deterministic=False, vtk_steps="ends", spectral=True):
    """Full pipeline; writes manifest, monitor log, scenario table, stress matrix and VTK files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wall = time.perf_counter()
    problem = Problem.build(cfg)
    cfl = problem.cfl()
    if not cfl.passed and not cfg.allow_cfl_violation:
        raise CFLRefusal(cfl)
    k_max = spectral_step_limit(problem.ops) if spectral else None
    problem, result, tracker = simulate(cfg, problem, stop_on_instability=cfg.allow_cfl_violation)

    l2 = result.series("l2_norm")
    w_max = max_in_time(l2)
    emit_monitor_csv(result.monitors, out / "monitor.csv")
    h_label = fmt_resolution(float(cfg.domain.spacing.max()))
    emit_scenario_table(out, h_label, w_max, tracker.maxima)

    steps = sorted(result.snapshots)
    if vtk_steps == "ends":
        steps = [steps[0], steps[-1]]
    elif vtk_steps == "none":
        steps = []
    quad = tracker.quad
    for n in steps:
        w = result.snapshots[n]
        field = recover_stress(problem.space, w, cfg.kappa0, cfg.params, quad)
        proj = project_stress(problem.space, field, quad, problem.ops.scalar_mass)
        emit_vtk(problem.mesh, vertex_values(problem.space, w), vertex_values(problem.space, proj),
                 out / f"fields_{n:06d}.vtk", label=f"{cfg.name} step {n}")

    extra = {
        "spectral_step_limit": k_max,
        "spectrally_stable": None if k_max is None else cfg.k < k_max,
        "result": {
            "steps": result.final.n,
            "aborted": result.aborted,
            "max_l2_norm": w_max,
            "stress_component_maxima": dict(zip(("k11", "k22", "k33", "k12", "k13", "k23"), tracker.maxima)),
            "stress_boundary_mismatch": boundary_mismatch(problem.space, result.final.w_curr, cfg.kappa0,
                                                          cfg.params),
            "max_energy_drift": _energy_drift(result),
        },
    }
    reported = REPORTED_SCENARIO_VALUES.get(cfg.name)
    if reported is not None:
        extra["reported_values"] = {"w_norm": reported[0], "components": reported[1]}
    timings = {} if deterministic else {"setup_s": problem.setup_seconds, "wall_s": time.perf_counter() - wall}
    emit_manifest(_manifest(cfg, problem, cfl, extra, timings), out / "manifest.json")
    return {"problem": problem, "result": result, "stress_maxima": tracker.maxima, "w_max": w_max,
            "spectral_step_limit": k_max}


def _energy_drift(result) -> float:
    e = result.series("energy")[1:]
    if len(e) < 2:
        return 0.0
    scale = max(np.max(np.abs(e)), 1e-300)
    return float(np.max(np.abs(e - e[0])) / scale)


# --- convergence studies ---------------------------------------------------------------

def _levels_ok(values, reference, label):
    vals = sorted((parse_number(v) for v in values), reverse=True)
    reference = parse_number(reference)
    if not vals:
        raise ConfigError(f"no {label} values given")
    if any(v < reference * (1 - 1e-12) for v in vals):
        raise ConfigError(f"reference {label} must be the smallest")
    for v in vals:
        r = v / reference
        if abs(r - round(r)) > 1e-9 * r:
            raise ConfigError(f"{label} = {v} is not a multiple of the reference {reference}")
    return vals


def _quadratic_norm(A, e) -> float:
    return math.sqrt(max(float(e @ (A @ e)), 0.0))


def cmd_convergence_time(base: ScenarioConfig, k_values, k_ref, out_dir=None, transform=None,
                         deterministic=False):
    """Temporal self-convergence on a fixed mesh against a run with step ``k_ref``.

    All runs advance in lockstep with the reference; errors are taken at the
    common time levels and maximized over time.  ``transform(k, n, w)`` may
    modify the compared fields (used to inject known defects in tests).
    """
    ks = _levels_ok(k_values, k_ref, "k")
    k_ref = parse_number(k_ref)
    for k in ks + [k_ref]:
        steps = base.T_f / k
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError(f"T_f / k = {steps} is not an integer for k = {k}")
    problem = Problem.build(base)
    for k in ks + [k_ref]:
        cfl = problem.cfl(k)
        if not cfl.passed and not base.allow_cfl_violation:
            raise CFLRefusal(cfl)
    data = base.initial_data()
    M = problem.ops.scalar_mass
    space = problem.space
    S = stress_gram_matrix(space, base.params)

    ref = problem.stepper(k=k_ref)
    ref_state = initial_state(ref, data)
    levels = []
    for k in ks:
        st = problem.stepper(k=k)
        levels.append({"k": k, "stepper": st, "state": initial_state(st, data), "ratio": int(round(k / k_ref)),
                       "err_w": 0.0, "err_s": 0.0, "cpu": 0.0, "cpu_s": 0.0})
    ref_w = {0: initialize(space, data, k_ref)[0], 1: ref_state.w_curr}
    level_w = [{0: initialize(space, data, lv["k"])[0], 1: lv["state"].w_curr} for lv in levels]

    def compare(lv, w_level, w_ref):
        t0 = time.process_time()
        if transform is not None:
            w_level = transform(lv["k"], None, w_level)
        e = w_level - w_ref
        cols = e.reshape(3, -1).T
        lv["err_w"] = max(lv["err_w"], math.sqrt(max(float(np.sum(cols * (M @ cols))), 0.0)))
        t1 = time.process_time()
        lv["err_s"] = max(lv["err_s"], _quadratic_norm(S, e))
        lv["cpu"] += t1 - t0
        lv["cpu_s"] += time.process_time() - t1

    # level index n of step k corresponds to reference index n * ratio
    for lv, wmap in zip(levels, level_w):
        compare(lv, wmap[0], ref_w[0])
    N_ref = int(round(base.T_f / k_ref))
    n_ref = 1
    for lv in levels:
        if lv["ratio"] == 1:
            compare(lv, lv["state"].w_curr, ref_state.w_curr)
    ref_cpu = 0.0
    while n_ref < N_ref:
        t0 = time.process_time()
        ref_state = ref.step(ref_state)
        ref_cpu += time.process_time() - t0
        n_ref = ref_state.n
        for lv in levels:
            r = lv["ratio"]
            if n_ref % r:
                continue
            target = n_ref // r
            if target == 1:
                compare(lv, lv["state"].w_curr, ref_state.w_curr)
                continue
            t0 = time.process_time()
            while lv["state"].n < target:
                lv["state"] = lv["stepper"].step(lv["state"])
            lv["cpu"] += time.process_time() - t0
            compare(lv, lv["state"].w_curr, ref_state.w_curr)

    series = ErrorSeries(
        parameter="k",
        resolutions=[lv["k"] for lv in levels],
        displacement_errors=[lv["err_w"] for lv in levels],
        stress_errors=[lv["err_s"] for lv in levels],
        cpu_seconds=[0.0 if deterministic else lv["cpu"] for lv in levels],
        stress_cpu_seconds=[0.0 if deterministic else lv["cpu"] + lv["cpu_s"] for lv in levels],
        reference=f"same mesh, k = {fmt_resolution(k_ref)}",
    )
    if out_dir is not None and len(series.resolutions) >= 2:
        emit_convergence_table(series, Path(out_dir) / "convergence_time.csv")
    return series


def cmd_convergence_space(base: ScenarioConfig, spacings, spacing_ref, k=None, T_f=None, out_dir=None,
                          deterministic=False):
    """Spatial self-convergence on nested structured meshes.

    Every level runs with the same time step; coarse solutions are embedded
    exactly into the reference space (the meshes are nested and the degree
    is shared), so the differences are integrated without projection error.
    """
    hs = _levels_ok(spacings, spacing_ref, "h")
    spacing_ref = parse_number(spacing_ref)
    k = base.k if k is None else k
    T_f = base.T_f if T_f is None else T_f
    lo, hi = base.domain.lo, base.domain.hi
    data = base.initial_data()

    def domain_for(h):
        return BoxDomain.from_spacing(lo, hi, h)

    ref_problem = Problem.build(base, domain=domain_for(spacing_ref))
    cfg_k = base.scheme(k, T_f)
    for h in hs + [spacing_ref]:
        sp_h = domain_for(h).spacing
        cfl = check_cfl(k, float(np.sqrt(sp_h @ sp_h)), base.C_sr, base.params.nu)
        if not cfl.passed and not base.allow_cfl_violation:
            raise CFLRefusal(cfl)
    space = ref_problem.space
    M = ref_problem.ops.scalar_mass
    S = stress_gram_matrix(space, base.params)

    levels = []
    for h in hs:
        pb = Problem.build(base, domain=domain_for(h))
        st = Stepper(pb.ops, cfg_k, pb.load)
        levels.append({"h": h, "problem": pb, "stepper": st, "state": initial_state(st, data),
                       "P": prolongation(space, pb.space), "err_w": 0.0, "err_s": 0.0,
                       "cpu": pb.setup_seconds, "cpu_s": 0.0})
    ref = Stepper(ref_problem.ops, cfg_k, ref_problem.load)
    ref_state = initial_state(ref, data)

    def compare(lv, w_level, w_ref):
        t0 = time.process_time()
        e = w_ref - prolong(lv["P"], w_level)
        cols = e.reshape(3, -1).T
        lv["err_w"] = max(lv["err_w"], math.sqrt(max(float(np.sum(cols * (M @ cols))), 0.0)))
        t1 = time.process_time()
        lv["err_s"] = max(lv["err_s"], _quadratic_norm(S, e))
        lv["cpu_s"] += time.process_time() - t1

    w_ref0 = initialize(space, data, k)[0]
    for lv in levels:
        compare(lv, initialize(lv["problem"].space, data, k)[0], w_ref0)
        compare(lv, lv["state"].w_curr, ref_state.w_curr)
    N = cfg_k.num_steps
    while ref_state.n < N:
        ref_state = ref.step(ref_state)
        for lv in levels:
            t0 = time.process_time()
            lv["state"] = lv["stepper"].step(lv["state"])
            lv["cpu"] += time.process_time() - t0
            compare(lv, lv["state"].w_curr, ref_state.w_curr)

    series = ErrorSeries(
        parameter="h",
        resolutions=[lv["h"] for lv in levels],
        displacement_errors=[lv["err_w"] for lv in levels],
        stress_errors=[lv["err_s"] for lv in levels],
        cpu_seconds=[0.0 if deterministic else lv["cpu"] for lv in levels],
        stress_cpu_seconds=[0.0 if deterministic else lv["cpu"] + lv["cpu_s"] for lv in levels],
        reference=f"h = {fmt_resolution(spacing_ref)}, k = {fmt_resolution(k)}, degree {base.degree}",
    )
    if out_dir is not None and len(series.resolutions) >= 2:
        emit_convergence_table(series, Path(out_dir) / "convergence_space.csv")
    return series


# --- stability demonstration -----------------------------------------------------------

@dataclass
class StabilityOutcome:
    compliant: object            # RunResult
    violating: object            # RunResult
    k_violating: float
    compliant_window_max: float
    compliant_max: float
    violating_growth: float      # max violating norm / reference scale
    violating_aborted: bool

    @property
    def compliant_bounded(self) -> bool:
        finite = np.all(np.isfinite(self.compliant.series("l2_norm")))
        return bool(finite and self.compliant_max <= 10.0 * self.compliant_window_max)

    @property
    def violating_unstable(self) -> bool:
        return self.violating_aborted or self.violating_growth >= 10.0


def forcing_window_end(cfg: ScenarioConfig, rel=1e-6) -> float:
    """Time after which the pulse stays below ``rel`` of its peak (0 without a source)."""
    if cfg.source is None or cfg.source.g_c == 0:
        return 0.0 if cfg.source is None else cfg.T_f
    # |s(t)| <= (1 + a^2) exp(-a^2) is monotone for a >= 1
    a = 1.0
    while (1 + a * a) * math.exp(-a * a) > rel:
        a += 0.01
    return min(cfg.T_f, cfg.source.t_0 + a / (math.pi * abs(cfg.source.g_c)))


def cmd_stability_demo(cfg: ScenarioConfig, out_dir=None, violation_factor=None):
    """Run once as configured and once with k/h = 4 sqrt(2 nu) under override."""
    problem = Problem.build(cfg)
    compliant = simulate(cfg, problem, track_stress=False)[1]
    factor = 4.0 * math.sqrt(2.0 * cfg.params.nu) if violation_factor is None else violation_factor
    k_bad = factor * problem.mesh.h
    N = compliant.final.n
    violating = simulate(cfg, problem, track_stress=False, stop_on_instability=True,
                         k=k_bad, T_f=N * k_bad, allow=True)[1]

    l2 = compliant.series("l2_norm")
    t = compliant.series("t")
    t_end = forcing_window_end(cfg)
    window = l2[(t <= t_end + 1e-12) | (np.arange(len(l2)) <= 1)]
    window_max = float(window.max())
    scale = window_max if window_max > 0 else float(np.max(l2))
    vl2 = violating.series("l2_norm")
    vmax = float(np.max(vl2[np.isfinite(vl2)])) if np.any(np.isfinite(vl2)) else math.inf
    growth = math.inf if scale == 0 and vmax > 0 else (vmax / scale if scale > 0 else 0.0)
    if out_dir is not None:
        emit_monitor_csv(compliant.monitors, Path(out_dir) / "stability_compliant.csv")
        emit_monitor_csv(violating.monitors, Path(out_dir) / "stability_violating.csv")
    return StabilityOutcome(
        compliant=compliant,
        violating=violating,
        k_violating=k_bad,
        compliant_window_max=window_max,
        compliant_max=float(np.max(l2)),
        violating_growth=growth,
        violating_aborted=violating.aborted is not None,
    )
