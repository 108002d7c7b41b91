"""Scenario configuration: INI sections read with configparser, checked statically.

Sections and keys (all optional unless a scenario needs them)::

    [run]          seed, models, levels
    [basis]        energies = 0, 1   |  ladder = count, start, spacing [+ extra]
                   | dimension (random levels in [0, 1) from the seed)
    [interaction]  kind = instantaneous | random | separable_exponential | tabulated
                   matrix = "0, 0.1; 0.1, 0"   coupling, form_vector, duration,
                   norm_fraction, kernel_csv
    [solver]       start_radius, imag_offset, n_points, rtol, seed_rule, boundary_phase
    [time]         t_max, step, z_points, broadening
    [self_energy]  family, alpha, mass, cutoff, e0, windows
    [checks]       tolerance overrides, e.g. t_relative = 1e-6
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

SCENARIOS = ("equivalence", "bound-state", "evolve", "shift", "divergence", "crosscheck")
KINDS = ("instantaneous", "random", "separable_exponential", "tabulated")

DEFAULT_TOLERANCES = {
    "t_relative": 1e-6,
    "pole_absolute": 1e-8,
    "residual": 1e-6,
    "pole_equation": 1e-10,
    "overlap": 1e-8,
    "residue": 1e-6,
    "channel_agreement": 1e-6,
    "stationarity": 1e-3,
    "unitarity": 1e-4,
    "order_low": 3.0,
    "order_high": 5.0,
    "laplace": 1e-3,
    "derivative_identity": 1e-4,
    "window_stability": 1e-6,
    "pole_sum": 1e-6,
    "log_sq_correlation": 0.99,
}


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int = 0
    sections: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def number(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else float(v)

    def integer(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else int(v)

    def numbers(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else parse_list(v)

    def echo(self):
        return {"scenario": self.scenario, "seed": self.seed,
                "sections": {k: dict(v) for k, v in sorted(self.sections.items())}}


def parse_list(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def parse_complex_list(text):
    return [complex(x.strip().replace(" ", "")) for x in str(text).split(",") if x.strip()]


def parse_matrix(text):
    rows = [r for r in str(text).split(";") if r.strip()]
    return np.array([[complex(x.strip().replace(" ", "")) for x in r.split(",")] for r in rows])


def load(path, scenario, seed=None):
    """Read an INI file into a :class:`ScenarioConfig` (no validation)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path) as fh:
        cp.read_file(fh)
    sections = {s: dict(cp[s]) for s in cp.sections()}
    run = sections.get("run", {})
    raw_seed = seed if seed is not None else run.get("seed", 0)
    tol = dict(DEFAULT_TOLERANCES)
    cfg = ScenarioConfig(scenario, 0, sections, tol)
    try:
        cfg.seed = int(raw_seed)
    except (TypeError, ValueError):
        cfg.seed = raw_seed
    for k, v in sections.get("checks", {}).items():
        try:
            tol[k] = float(v)
        except ValueError:
            tol[k] = v
    return cfg


def _num(cfg, out, section, key, positive=False, nonneg=False, integer=False):
    v = cfg.get(section, key)
    if v is None:
        return None
    try:
        x = int(v) if integer else float(v)
    except ValueError:
        out.append(f"[{section}] {key}: not a number ({v!r})")
        return None
    if not np.isfinite(x):
        out.append(f"[{section}] {key}: must be finite")
        return None
    if positive and not x > 0:
        out.append(f"[{section}] {key}: must be positive")
    if nonneg and x < 0:
        out.append(f"[{section}] {key}: must be nonnegative")
    return x


def basis_energies(cfg, rng=None):
    """Free levels from the [basis] section, or None if unspecified."""
    if cfg.get("basis", "energies") is not None:
        return np.array(parse_list(cfg.get("basis", "energies")))
    if cfg.get("basis", "ladder") is not None:
        vals = parse_list(cfg.get("basis", "ladder"))
        count, start, spacing = int(vals[0]), vals[1], vals[2]
        levels = start + spacing * np.arange(count)
        return np.sort(np.concatenate([levels, vals[3:]]))
    d = cfg.integer("basis", "dimension")
    if d is None:
        return None
    rng = rng or np.random.default_rng(cfg.seed)
    return random_levels(rng, d)


def random_levels(rng, d):
    """Levels spread over [0, 1] with gaps between 0.5 and 1.5 of the mean."""
    e = np.cumsum(rng.uniform(0.5, 1.5, d))
    e -= e[0]
    return e / e[-1]


def validate(cfg):
    """Static violations; empty iff the config can be run."""
    out = []
    if cfg.scenario not in SCENARIOS:
        out.append(f"scenario: unknown {cfg.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        return out
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        out.append("[run] seed: must be a nonnegative integer")
    _num(cfg, out, "run", "models", positive=True, integer=True)
    needs_model = cfg.scenario in ("equivalence", "bound-state", "evolve", "crosscheck")
    energies = None
    if needs_model:
        try:
            energies = basis_energies(cfg, np.random.default_rng(0))
        except (ValueError, IndexError):
            out.append("[basis]: energies/ladder/dimension could not be parsed")
        if energies is None and not out:
            out.append("[basis]: give energies, ladder or dimension")
        elif energies is not None:
            if energies.size < 2:
                out.append("[basis]: at least two levels are required")
            elif energies.size > 512:
                out.append("[basis]: dimension exceeds 512")
            elif np.any(np.diff(energies) < 0):
                out.append("[basis] energies: must be nondecreasing")
        if cfg.get("run", "levels") is not None:
            try:
                levels = parse_list(cfg.get("run", "levels"))
                d = energies.size if energies is not None else None
                for lv in levels:
                    if lv != int(lv) or lv < 0 or (d is not None and lv >= d):
                        out.append(f"[run] levels: {lv:g} is not a label of the basis")
            except ValueError:
                out.append("[run] levels: could not be parsed")
        out += _validate_interaction(cfg, energies)
        out += _validate_solver(cfg, energies)
    if cfg.scenario in ("evolve", "crosscheck"):
        kind = cfg.get("interaction", "kind", "")
        if kind in ("instantaneous", "random"):
            out.append("[interaction] kind: the time domain needs a nonlocal model (duration > 0)")
        t_max = _num(cfg, out, "time", "t_max", positive=True)
        step = _num(cfg, out, "time", "step", positive=True)
        if t_max is not None and step is not None:
            r = t_max / step
            if abs(r - round(r)) > 1e-9 * max(1.0, r):
                out.append("[time] step: must divide t_max")
            elif r > 20000:
                out.append("[time] step: more than 20000 steps")
    if cfg.scenario == "crosscheck":
        try:
            zs = parse_complex_list(cfg.get("time", "z_points", "2+2j"))
            t_max = cfg.number("time", "t_max", 10.0)
            for z in zs:
                if z.imag * t_max < 20:
                    out.append(f"[time] z_points: Im z * t_max < 20 at {z}")
        except ValueError:
            out.append("[time] z_points: not a list of complex numbers")
    if cfg.scenario in ("shift", "divergence"):
        out += _validate_self_energy(cfg)
    return out


def _validate_interaction(cfg, energies):
    out = []
    kind = cfg.get("interaction", "kind")
    if kind is None:
        return ["[interaction] kind: missing"]
    if kind not in KINDS:
        return [f"[interaction] kind: unknown {kind!r}"]
    d = None if energies is None else energies.size
    if cfg.scenario == "equivalence" and kind not in ("instantaneous", "random"):
        out.append("[interaction] kind: equivalence needs an instantaneous model")
    if kind == "instantaneous":
        try:
            h = parse_matrix(cfg.get("interaction", "matrix", ""))
            if h.ndim != 2 or h.shape[0] != h.shape[1] or (d is not None and h.shape[0] != d):
                out.append("[interaction] matrix: must be square and match the basis")
            elif np.abs(h - h.conj().T).max() > 1e-12:
                out.append("[interaction] matrix: must be Hermitian")
        except ValueError:
            out.append("[interaction] matrix: could not be parsed")
    elif kind == "random":
        _num(cfg, out, "interaction", "norm_fraction", positive=True)
    elif kind == "separable_exponential":
        _num(cfg, out, "interaction", "coupling")
        _num(cfg, out, "interaction", "duration", nonneg=True)
        if cfg.get("interaction", "coupling") is None:
            out.append("[interaction] coupling: missing")
        try:
            phi = np.array(parse_list(cfg.get("interaction", "form_vector", "")))
            if d is not None and phi.size != d:
                out.append("[interaction] form_vector: length must match the basis")
            elif phi.size == 0 or np.linalg.norm(phi) == 0:
                out.append("[interaction] form_vector: must be nonzero")
        except ValueError:
            out.append("[interaction] form_vector: could not be parsed")
    elif kind == "tabulated" and not cfg.get("interaction", "kernel_csv"):
        out.append("[interaction] kernel_csv: missing")
    return out


def _validate_solver(cfg, energies):
    out = []
    r = _num(cfg, out, "solver", "start_radius", positive=True)
    _num(cfg, out, "solver", "imag_offset", positive=True)
    n = _num(cfg, out, "solver", "n_points", integer=True)
    if n is not None and n < 3:
        out.append("[solver] n_points: need at least 3 points")
    _num(cfg, out, "solver", "rtol", positive=True)
    rule = cfg.get("solver", "seed_rule", "born")
    if rule not in ("born", "bare"):
        out.append("[solver] seed_rule: must be born or bare")
    if r is not None and energies is not None and energies.size >= 2:
        span = float(energies[-1] - energies[0]) or 1.0
        if r <= np.abs(energies).max() + 0.05 * span:
            out.append("[solver] start_radius: inside the spectrum; the boundary datum "
                       "needs ||B|| ||G0|| < 0.1 at the start point")
    return out


def _validate_self_energy(cfg):
    out = []
    fam = cfg.get("self_energy", "family", "regulated" if cfg.scenario == "shift" else "asymptotic")
    if fam not in ("regulated", "asymptotic"):
        out.append(f"[self_energy] family: unknown {fam!r}")
    _num(cfg, out, "self_energy", "alpha", positive=True)
    _num(cfg, out, "self_energy", "mass", positive=True)
    _num(cfg, out, "self_energy", "cutoff", positive=True)
    _num(cfg, out, "self_energy", "e0")
    if cfg.scenario == "shift" and fam != "regulated":
        out.append("[self_energy] family: the shift scenario needs the regulated family")
    if cfg.scenario == "divergence" and fam != "asymptotic":
        out.append("[self_energy] family: the divergence scenario takes the unregulated family")
    if cfg.get("self_energy", "windows") is not None:
        try:
            w = parse_list(cfg.get("self_energy", "windows"))
            if len(w) < 3 or any(x <= 0 for x in w):
                out.append("[self_energy] windows: need at least three positive values")
        except ValueError:
            out.append("[self_energy] windows: could not be parsed")
    return out
