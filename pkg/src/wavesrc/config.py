"""Run configuration: a flat, versioned YAML mapping with strict key checking."""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .assembly import MODES
from .errors import ConfigError

SCHEMA_VERSION = 1

# Largest system factorised directly when solver="auto"; full-scale runs use CG.
DIRECT_MAX_UNKNOWNS = 300_000

PROFILES = {
    "desk": {"inverse_n": 45, "n_t": 60, "fine_n": 250},
    "full_scale": {"inverse_n": 85, "n_t": 120, "fine_n": 500},
}


@dataclass(frozen=True)
class RunConfig:
    """Every knob of one reconstruction run.

    ``source`` overrides ``test`` when given; it is a mapping accepted by
    :class:`~wavesrc.sources.SourceSpec` (``kind``, ``amplitude``, ``params``,
    ``values``, ``extent``).
    """

    schema_version: int = SCHEMA_VERSION
    profile: str = "desk"
    test: int = 1
    amplitude: float = 1.0
    source: dict | None = None
    # grids
    inverse_n: int | None = None
    fine_n: int | None = None
    n_t: int | None = None
    fine_half_width: float = 3.0
    extent: tuple[float, float, float, float] = (-0.5, 0.5, -0.5, 0.5)
    t_final: float = 1.0
    time_convention: str = "interval"
    # data synthesis
    forward_start: str = "taylor"
    neumann_scheme: str = "one_sided"
    delta: float = 0.0
    seed: int = 0
    # differentiation
    diff_eps: float = 1.0
    diff_lag: int = 1
    diff_form: str = "unscaled"
    # quasi-reversibility
    eps1: float = 3e-3
    eps2: float = 1.5e-4
    mode: str = "full"
    row_scale: bool = False
    rhs_form: str = "normal"
    # solver
    solver: str = "auto"  # direct up to DIRECT_MAX_UNKNOWNS, else cg
    direct_backend: str = "auto"
    cg_tol: float = 1e-8
    cg_max_iters: int | None = None
    cg_preconditioner: str = "jacobi"
    # output
    output_dir: str = "runs/out"
    write_matrix: bool = False

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; this build reads {SCHEMA_VERSION}")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; expected one of {sorted(PROFILES)}")
        prof = PROFILES[self.profile]
        for key in ("inverse_n", "fine_n", "n_t"):
            if getattr(self, key) is None:
                object.__setattr__(self, key, prof[key])
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        checks = [
            (self.source is not None or self.test in (1, 2, 3, 4), f"test must be 1-4, got {self.test}"),
            (self.inverse_n >= 3, "inverse_n must be >= 3"),
            (self.fine_n >= 3, "fine_n must be >= 3"),
            (self.n_t >= 3, "n_t must be >= 3"),
            (self.t_final > 0, "t_final must be positive"),
            (self.fine_half_width > 0, "fine_half_width must be positive"),
            (len(self.extent) == 4, "extent needs four numbers"),
            (self.time_convention in ("interval", "endpoint"), f"unknown time_convention {self.time_convention!r}"),
            (self.forward_start in ("taylor", "zero"), f"unknown forward_start {self.forward_start!r}"),
            (self.neumann_scheme in ("one_sided", "centered"), f"unknown neumann_scheme {self.neumann_scheme!r}"),
            (self.delta >= 0, f"delta must be >= 0, got {self.delta}"),
            (self.diff_eps > 0, f"diff_eps must be > 0, got {self.diff_eps}"),
            (self.diff_lag >= 0, "diff_lag must be >= 0"),
            (self.diff_form in ("unscaled", "scaled", "verbatim"), f"unknown diff_form {self.diff_form!r}"),
            (self.eps1 > 0, f"eps1 must be > 0, got {self.eps1}"),
            (self.eps2 >= 0, f"eps2 must be >= 0, got {self.eps2}"),
            (self.mode in MODES, f"unknown mode {self.mode!r}; expected one of {MODES}"),
            (self.rhs_form in ("normal", "verbatim"), f"unknown rhs_form {self.rhs_form!r}"),
            (self.solver in ("auto", "direct", "cg", "dense"), f"unknown solver {self.solver!r}"),
            (self.direct_backend in ("auto", "pardiso", "superlu"), f"unknown direct_backend {self.direct_backend!r}"),
            (0 < self.cg_tol < 1, "cg_tol must lie in (0, 1)"),
            (self.cg_preconditioner in ("none", "jacobi"), f"unknown cg_preconditioner {self.cg_preconditioner!r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        if "schema_version" not in data:
            raise ConfigError("configuration is missing schema_version")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        return cls.from_dict(data or {})

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["extent"] = list(self.extent)
        return d

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @property
    def resolved_solver(self) -> str:
        if self.solver != "auto":
            return self.solver
        return "direct" if self.inverse_n**2 * self.n_t <= DIRECT_MAX_UNKNOWNS else "cg"

    def operator_key(self) -> str:
        """Hash of every field the normal matrix depends on (not the data)."""
        keys = ("inverse_n", "n_t", "extent", "t_final", "time_convention", "eps1", "eps2", "mode", "row_scale")
        blob = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_config(**overrides) -> RunConfig:
    return RunConfig(**overrides)


@dataclass
class SweepConfig:
    """A base config plus a grid of overrides; every combination is one run."""

    base: RunConfig
    axes: dict = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (yaml.YAMLError, OSError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        unknown = sorted(set(data) - {"base", "axes", "workers"})
        if unknown:
            raise ConfigError(f"unknown sweep key(s): {', '.join(unknown)}")
        base = RunConfig.from_dict(data.get("base") or {"schema_version": SCHEMA_VERSION})
        axes = data.get("axes") or {}
        known = {f.name for f in fields(RunConfig)}
        bad = sorted(set(axes) - known)
        if bad:
            raise ConfigError(f"unknown sweep axis key(s): {', '.join(bad)}")
        workers = int(data.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        return cls(base, {k: list(v) for k, v in axes.items()}, workers)

    def expand(self) -> list[RunConfig]:
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            out.append(self.base.replace(**dict(zip(names, combo))))
        return out
