"""Config loading, sweep CSV files and comparison with measured fringes."""

from __future__ import annotations

import csv
import io as _stdio
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from importlib import metadata, resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from scipy.optimize import minimize_scalar

from .core import DEFAULT_N_TRUNC, SystemParams
from .experiment import ExperimentConfig

log = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 512
CSV_MAGIC = "# dfs_cavity sweep"


class ConfigError(ValueError):
    """Config rejected; ``violations`` is a list of (path, message)."""

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = list(violations)
        lines = "; ".join(f"{p or '<root>'}: {m}" for p, m in self.violations)
        super().__init__(f"invalid config: {lines}")


class RangeError(ValueError):
    pass


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def load_schema(strict: bool = False) -> dict:
    schema = json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())
    if strict:
        schema["additionalProperties"] = False
        schema["properties"]["run"]["additionalProperties"] = False
    return schema


@dataclass(frozen=True)
class RunDirectives:
    model: str = "general"
    propagation: str = "analytic"
    ratio_grid: tuple[float, ...] = (0.0, 0.5, 0.7, 0.9, 1.0)
    overlay: str | None = None
    offset_bracket: tuple[float, float] | None = None
    out: str | None = None
    phase_offset: float = 0.0
    seed: int = 0
    n_trunc: int = DEFAULT_N_TRUNC


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path)


def expand_grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], int(spec.get("num", DEFAULT_GRID_POINTS)))
    return np.asarray(spec, dtype=float)


def parse_config(doc: dict[str, Any], strict: bool = False) -> tuple[SystemParams, ExperimentConfig, RunDirectives]:
    """Validate a config document and build the run objects.

    Unknown keys are errors in strict mode and warnings otherwise.
    """
    schema = load_schema(strict)
    validator = jsonschema.Draft202012Validator(schema)
    violations = [(_path(e), e.message) for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))]
    if violations:
        raise ConfigError(violations)
    if not strict:
        unknown = sorted(set(doc) - set(schema["properties"]))
        if unknown:
            warnings.warn(f"ignoring unknown config keys: {unknown}", stacklevel=2)

    grid = expand_grid(doc["T_grid"])
    t_prep = 3 * math.pi / (2 * doc["Omega"])
    if isinstance(doc["T_grid"], dict) and not doc["T_grid"]["stop"] > doc["T_grid"]["start"]:
        violations.append(("T_grid/stop", "must exceed start"))
    if np.any(np.diff(grid) <= 0):
        violations.append(("T_grid", "entry times must be strictly increasing"))
    bad = np.flatnonzero(grid < t_prep * (1 - 1e-12))
    if bad.size:
        violations.append((f"T_grid/{int(bad[0])}", f"{grid[bad[0]]!r} precedes the preparation time {t_prep:.6g}"))
    if violations:
        raise ConfigError(violations)

    cfg = ExperimentConfig(
        delta=doc["delta"], Omega=doc["Omega"], Tr_a=doc["Tr_a"], Tr_b=doc["Tr_b"], nbar=doc["nbar"],
        reduction=doc.get("reduction", 1.0), T_grid=tuple(grid),
    )
    k11 = doc.get("k11", cfg.k11_eff)
    k22 = doc.get("k22", cfg.k22_eff)
    cross = {}
    for key in ("k12", "k21"):
        v = doc.get(key, 0.0)
        cross[key] = math.sqrt(k11 * k22) if v == "dfs" else float(v)
    params = SystemParams(
        omega1=cfg.delta, omega2=0.0, k11=k11, k22=k22, **cross,
        delta11=doc.get("delta11", 0.0), delta22=doc.get("delta22", 0.0),
        delta12=doc.get("delta12", 0.0), delta21=doc.get("delta21", 0.0),
    )
    run = dict(doc.get("run", {}))
    directives = RunDirectives(
        model=run.get("model", "general"),
        propagation=run.get("propagation", "analytic"),
        ratio_grid=tuple(run.get("ratio_grid", RunDirectives.ratio_grid)),
        overlay=run.get("overlay"),
        offset_bracket=tuple(run["offset_bracket"]) if "offset_bracket" in run else None,
        out=run.get("out"),
        phase_offset=doc.get("phase_offset", 0.0),
        seed=doc.get("seed", 0),
        n_trunc=doc.get("n_trunc", DEFAULT_N_TRUNC),
    )
    return params, cfg, directives


def load_config(path: str | Path, strict: bool = False) -> tuple[SystemParams, ExperimentConfig, RunDirectives]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([("", f"no such file: {path}")]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"not valid JSON: {exc}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([("", "top level must be an object")])
    return parse_config(doc, strict)


def describe_run(params: SystemParams, cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    """Metadata recording everything that shaped a curve."""
    meta = {
        "code_version": code_version(),
        "params": params.as_dict(),
        "config": {k: v for k, v in asdict(cfg).items() if k != "T_grid"},
        "T_grid": {"first": cfg.T_grid[0], "last": cfg.T_grid[-1], "num": len(cfg.T_grid)} if cfg.T_grid else None,
    }
    if extra:
        meta.update(extra)
    return meta


@dataclass
class SweepResult:
    rows: list[tuple[float, float, str]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    VALUE_TOL = 1e-9

    def add_curve(self, tag: str, T, values) -> None:
        T = np.asarray(T, dtype=float)
        values = np.asarray(values, dtype=float)
        if T.shape != values.shape or T.ndim != 1:
            raise ValueError("T and values must be 1-D arrays of equal length")
        if tag in self.tags():
            raise ValueError(f"curve {tag!r} already present")
        if np.any(np.diff(T) <= 0):
            raise ValueError(f"curve {tag!r}: T must be strictly increasing")
        if np.any(values < -self.VALUE_TOL) or np.any(values > 1 + self.VALUE_TOL):
            raise ValueError(f"curve {tag!r}: values outside [0, 1]")
        self.rows.extend((float(t), float(v), tag) for t, v in zip(T, values))

    def tags(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, _, tag in self.rows:
            seen.setdefault(tag)
        return list(seen)

    def curve(self, tag: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        tags = self.tags()
        if tag is None:
            if len(tags) != 1:
                raise ValueError(f"sweep holds {len(tags)} curves; name one of {tags}")
            tag = tags[0]
        pts = [(t, v) for t, v, g in self.rows if g == tag]
        if not pts:
            raise KeyError(tag)
        T, v = zip(*pts)
        return np.array(T), np.array(v)

    def to_csv(self) -> str:
        buf = _stdio.StringIO()
        buf.write(CSV_MAGIC + "\n")
        for key in sorted(self.metadata):
            buf.write(f"# {key}={json.dumps(self.metadata[key], sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "value", "tag"])
        for t, v, tag in self.rows:
            w.writerow([format(t, ".17g"), format(v, ".17g"), tag])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        meta: dict[str, Any] = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                if line == CSV_MAGIC:
                    continue
                key, _, value = line[1:].strip().partition("=")
                meta[key] = json.loads(value)
            elif line.strip():
                body.append(line)
        reader = csv.reader(body)
        header = next(reader, None)
        if header != ["T", "value", "tag"]:
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = [(float(t), float(v), tag) for t, v, tag in reader]
        return cls(rows, meta)

    @classmethod
    def read_csv(cls, path: str | Path) -> "SweepResult":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class OverlayDataset:
    T: np.ndarray
    pe: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        pe = np.asarray(self.pe, dtype=float)
        if T.size == 0 or T.shape != pe.shape:
            raise ValueError("overlay needs matching, non-empty T and pe columns")
        if np.any(pe < 0) or np.any(pe > 1):
            raise ValueError("measured probabilities must lie in [0, 1]")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "pe", pe)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != T.shape or np.any(s <= 0):
                raise ValueError("sigma must be positive and match T")
            object.__setattr__(self, "sigma", s)

    @classmethod
    def read_csv(cls, path: str | Path) -> "OverlayDataset":
        """Columns T, pe and optionally sigma; ``#`` lines are comments."""
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(lines)
        T, pe, sig = [], [], []
        for row in reader:
            T.append(float(row["T"]))
            pe.append(float(row["pe"]))
            if row.get("sigma") not in (None, ""):
                sig.append(float(row["sigma"]))
        sigma = np.array(sig) if sig and len(sig) == len(T) else None
        return cls(np.array(T), np.array(pe), sigma)


@dataclass(frozen=True)
class ResidualReport:
    residuals: np.ndarray
    rms: float
    chi2: float | None
    phase_offset: float
    best_offset: float | None = None
    best_rms: float | None = None


def _model_at(T_model: np.ndarray, v_model: np.ndarray, T: np.ndarray) -> np.ndarray:
    span = 1e-12 * max(1.0, abs(T_model[-1]))
    if T.min() < T_model[0] - span or T.max() > T_model[-1] + span:
        raise RangeError(
            f"overlay times [{T.min():.6g}, {T.max():.6g}] outside sweep [{T_model[0]:.6g}, {T_model[-1]:.6g}]"
        )
    return np.interp(T, T_model, v_model)


def residuals(sweep: SweepResult, overlay: OverlayDataset, phase_offset: float = 0.0,
              tag: str | None = None, bracket: tuple[float, float] | None = None) -> ResidualReport:
    """measured - model(T + offset), with RMS, chi-square and an optional offset search.

    The search scans ``bracket`` on a grid a quarter of the sweep spacing
    wide, then polishes the best cell; offsets that push the overlay off the
    sweep are skipped.
    """
    T_model, v_model = sweep.curve(tag)
    res = overlay.pe - _model_at(T_model, v_model, overlay.T + phase_offset)
    rms = float(np.sqrt(np.mean(res**2)))
    chi2 = float(np.sum((res / overlay.sigma) ** 2)) if overlay.sigma is not None else None
    best = best_rms = None
    if bracket is not None:
        lo, hi = sorted(bracket)

        def rms_at(off: float) -> float:
            try:
                r = overlay.pe - _model_at(T_model, v_model, overlay.T + off)
            except RangeError:
                return math.inf
            return float(np.sqrt(np.mean(r**2)))

        step = np.min(np.diff(T_model)) / 4 if T_model.size > 1 else (hi - lo) / 100
        n = max(2, int(math.ceil((hi - lo) / step)) + 1)
        grid = np.linspace(lo, hi, n)
        vals = np.array([rms_at(o) for o in grid])
        if np.isfinite(vals).any():
            i = int(np.argmin(vals))
            a, b = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
            opt = minimize_scalar(rms_at, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
            if opt.fun <= vals[i]:
                best, best_rms = float(opt.x), float(opt.fun)
            else:
                best, best_rms = float(grid[i]), float(vals[i])
    return ResidualReport(res, rms, chi2, phase_offset, best, best_rms)
