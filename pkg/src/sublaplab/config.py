"""Experiment configuration: flat INI-style key-value files with sections.

The schema is strict: unknown sections or keys are rejected, numeric ranges
are validated at parse time, and the canonical line rendering feeds the
content hash embedded in every report.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

SCHEMA_VERSION = 1

_KNOWN_WEIGHTS = ("gaussian", "quartic", "heisenberg_aniso", "flat", "poly")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def _floats(raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse float list from {raw!r}") from exc


@dataclass
class ExperimentConfig:
    group: str
    dimension: int
    weight: str
    weight_poly: dict[tuple[int, ...], float] | None
    resolution: int
    domain_radius: float
    seed: int
    output_dir: str | None
    lyapunov: dict | None
    improved: dict | None
    quadratic: dict
    offdiag: dict
    covering: dict
    nonlocal_: dict

    def canonical_lines(self) -> list[str]:
        """Stable flat rendering used for hashing and the report echo."""
        lines = [
            f"schema_version={SCHEMA_VERSION}",
            f"group={self.group}",
            f"dimension={self.dimension}",
            f"weight={self.weight}",
            f"resolution={self.resolution}",
            f"domain_radius={self.domain_radius!r}",
            f"seed={self.seed}",
        ]
        if self.weight_poly is not None:
            for expo in sorted(self.weight_poly):
                key = ",".join(str(e) for e in expo)
                lines.append(f"poly[{key}]={self.weight_poly[expo]!r}")
        for name, section in (("lyapunov", self.lyapunov),
                              ("improved", self.improved),
                              ("quadratic", self.quadratic),
                              ("offdiag", self.offdiag),
                              ("covering", self.covering),
                              ("nonlocal", self.nonlocal_)):
            if section is None:
                continue
            for key in sorted(section):
                lines.append(f"{name}.{key}={section[key]!r}")
        return lines

    def config_hash(self) -> str:
        text = "\n".join(self.canonical_lines())
        return hashlib.sha256(text.encode()).hexdigest()


_SECTION_KEYS = {
    "experiment": {"schema_version", "group", "dimension", "weight",
                   "resolution", "domain_radius", "seed", "output_dir"},
    "weight_poly": None,    # free-form exponent keys
    "lyapunov": {"a", "c", "R", "n_samples", "n_random_f"},
    "improved": {"epsilon", "R", "n_samples"},
    "quadratic": {"alpha_list", "n_functions", "t_nodes", "rtol"},
    "offdiag": {"t_list", "width", "axis", "r2_min"},
    "covering": {"t_list", "theta_list"},
    "nonlocal": {"alpha_list", "n_eigenvectors", "n_bumps", "n_random",
                 "annulus_t", "k_max"},
}


def _check_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTION_KEYS[section]
        if allowed is None:
            continue
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _require_alpha(values: list[float], where: str) -> list[float]:
    for a in values:
        if not 0.0 < a < 2.0:
            raise ConfigError(f"{where}: alpha={a} outside (0, 2)")
    return values


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (R vs r)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    _check_keys(parser)
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    exp = parser["experiment"]

    schema = exp.getint("schema_version", fallback=None)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {schema}")

    group = exp.get("group", fallback="").strip()
    if group not in ("euclidean", "heisenberg1"):
        raise ConfigError(f"group must be euclidean or heisenberg1, got {group!r}")
    dimension = exp.getint("dimension", fallback=3 if group == "heisenberg1" else 1)
    if group == "heisenberg1" and dimension != 3:
        raise ConfigError("heisenberg1 has fixed coordinate dimension 3")
    if dimension < 1:
        raise ConfigError("dimension must be positive")

    weight = exp.get("weight", fallback="").strip()
    if weight not in _KNOWN_WEIGHTS:
        raise ConfigError(f"weight must be one of {_KNOWN_WEIGHTS}, got {weight!r}")
    weight_poly = None
    if weight == "poly":
        if "weight_poly" not in parser:
            raise ConfigError("weight=poly requires a [weight_poly] section")
        weight_poly = {}
        for key, val in parser["weight_poly"].items():
            try:
                expo = tuple(int(tok) for tok in key.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad monomial key {key!r}") from exc
            if any(e < 0 for e in expo):
                raise ConfigError(f"negative exponent in {key!r}")
            weight_poly[expo] = float(val)
    elif "weight_poly" in parser:
        raise ConfigError("[weight_poly] requires weight=poly")

    resolution = exp.getint("resolution", fallback=0)
    if resolution < 8:
        raise ConfigError("resolution must be at least 8 nodes per axis")
    domain_radius = exp.getfloat("domain_radius", fallback=0.0)
    if domain_radius <= 0.0:
        raise ConfigError("domain_radius must be positive")
    seed = exp.getint("seed", fallback=0)
    output_dir = exp.get("output_dir", fallback=None)

    lyapunov = None
    if "lyapunov" in parser:
        sec = parser["lyapunov"]
        lyapunov = {
            "a": sec.getfloat("a"),
            "c": sec.getfloat("c"),
            "R": sec.getfloat("R"),
            "n_samples": sec.getint("n_samples", fallback=100_000),
            "n_random_f": sec.getint("n_random_f", fallback=1000),
        }
        if not 0.0 < lyapunov["a"] < 1.0:
            raise ConfigError(f"lyapunov.a={lyapunov['a']} outside (0, 1)")
        if lyapunov["c"] <= 0.0:
            raise ConfigError("lyapunov.c must be positive")
        if not 0.0 < lyapunov["R"] < domain_radius:
            raise ConfigError("lyapunov.R must lie in (0, domain_radius)")

    improved = None
    if "improved" in parser:
        sec = parser["improved"]
        improved = {
            "epsilon": sec.getfloat("epsilon"),
            "R": sec.getfloat("R"),
            "n_samples": sec.getint("n_samples", fallback=100_000),
        }
        if not 0.0 < improved["epsilon"] < 1.0:
            raise ConfigError(f"improved.epsilon={improved['epsilon']} outside (0, 1)")
        if not 0.0 < improved["R"] < domain_radius:
            raise ConfigError("improved.R must lie in (0, domain_radius)")

    qsec = parser["quadratic"] if "quadratic" in parser else {}
    quadratic = {
        "alpha_list": _require_alpha(
            _floats(qsec.get("alpha_list", "0.5, 1.0, 1.5")), "quadratic"),
        "n_functions": int(qsec.get("n_functions", 20)),
        "t_nodes": int(qsec.get("t_nodes", 200)),
        "rtol": float(qsec.get("rtol", 1e-3)),
    }
    if quadratic["n_functions"] < 1 or quadratic["t_nodes"] < 16:
        raise ConfigError("quadratic needs n_functions >= 1 and t_nodes >= 16")

    osec = parser["offdiag"] if "offdiag" in parser else {}
    offdiag = {
        "t_list": _floats(osec.get("t_list", "0.05, 0.1, 0.2, 0.5, 1.0")),
        "width": float(osec.get("width", domain_radius / 4.0)),
        "axis": int(osec.get("axis", 0)),
        "r2_min": float(osec.get("r2_min", 0.98)),
    }
    if any(t <= 0 for t in offdiag["t_list"]):
        raise ConfigError("offdiag.t_list entries must be positive")
    if not 0.0 < offdiag["width"] < domain_radius:
        raise ConfigError("offdiag.width must lie in (0, domain_radius)")
    if not 0 <= offdiag["axis"] < dimension:
        raise ConfigError("offdiag.axis out of range")

    csec = parser["covering"] if "covering" in parser else {}
    covering = {
        "t_list": _floats(csec.get("t_list", "0.25, 1.0, 4.0")),
        "theta_list": _floats(csec.get("theta_list", "2, 4, 8")),
    }
    if any(t <= 0 for t in covering["t_list"]):
        raise ConfigError("covering.t_list entries must be positive")
    if any(th <= 1 for th in covering["theta_list"]):
        raise ConfigError("covering.theta_list entries must exceed 1")

    nsec = parser["nonlocal"] if "nonlocal" in parser else {}
    nonlocal_ = {
        "alpha_list": _require_alpha(
            _floats(nsec.get("alpha_list", "0.5, 1.0, 1.5")), "nonlocal"),
        "n_eigenvectors": int(nsec.get("n_eigenvectors", 10)),
        "n_bumps": int(nsec.get("n_bumps", 20)),
        "n_random": int(nsec.get("n_random", 10)),
        "annulus_t": float(nsec.get("annulus_t", 1.0)),
        "k_max": int(nsec.get("k_max", 4)),
    }
    if nonlocal_["annulus_t"] <= 0:
        raise ConfigError("nonlocal.annulus_t must be positive")

    return ExperimentConfig(
        group=group, dimension=dimension, weight=weight, weight_poly=weight_poly,
        resolution=resolution, domain_radius=domain_radius, seed=seed,
        output_dir=output_dir, lyapunov=lyapunov, improved=improved,
        quadratic=quadratic, offdiag=offdiag, covering=covering,
        nonlocal_=nonlocal_,
    )
