"""Experiment configuration, dataset loaders and result files."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .chain import ChainSample, negative_sign_fraction, sign_corrected_estimate

log = logging.getLogger(__name__)

COAL_EVENTS = 191
LYNX_HARE_ROWS = 21

Experiment = Literal["toy", "lgcp", "lv", "pde", "gp", "estimator-check"]
Sampler = Literal["mh", "slice", "ess", "two-stage", "sa"]
Mode = Literal["single-fidelity", "multi-fidelity", "two-stage"]


class ConfigError(ValueError):
    pass


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SamplerParams(_Block):
    scale: Optional[float] = Field(None, gt=0, description="random-walk proposal scale")
    width: Optional[float] = Field(None, gt=0, description="slice initial bracket width")
    max_stepout: int = Field(50, ge=0)
    max_shrink: int = Field(100, ge=1)


class ToyBlock(_Block):
    n: int = Field(200, ge=0)


class LGCPBlock(_Block):
    data_path: Optional[str] = None
    domain: tuple[float, float] = (1851.0, 1963.0)
    lengthscale: float = Field(20.0, gt=0)
    variance: float = Field(1.0, gt=0)
    offset: int = Field(10, ge=1)
    report_at: list[float] = [1862.0]


class LVBlock(_Block):
    data_path: Optional[str] = None
    sigma: float = Field(0.25, gt=0, description="likelihood noise on the log scale")
    synth_sigma: float = Field(0.8, gt=0)
    synth_n: int = Field(200, ge=1)
    synth_t_end: float = Field(3.0, gt=0)
    solver: Literal["euler", "rk4"] = "rk4"
    s: float = Field(10.0, gt=0)
    c: float = Field(50.0, gt=0)
    z0: Optional[tuple[float, float]] = None


class PDEBlock(_Block):
    alpha0: float = Field(0.85, gt=0)
    beta0: float = Field(0.21, gt=0)
    c: float = Field(8.0, ge=0)
    reference_dx: float = Field(5e-3, gt=0)
    start: tuple[float, float] = (0.0, 0.0)
    max_evaluations: int = Field(2000, ge=1)
    T0: float = Field(1.0, gt=0)


class GPBlock(_Block):
    n: int = Field(100, ge=1)
    lengthscale0: float = Field(45.0, gt=0)
    noise_var: float = Field(1.0, gt=0)
    x_range: tuple[float, float] = (0.0, 500.0)
    nu0: float = 3.8
    nu1: float = Field(0.03, gt=0)


class EstimatorCheckBlock(_Block):
    thetas: list[float] = [-1.0, 0.5, 2.0]
    replicates: int = Field(100_000, ge=2)
    n: int = Field(1, ge=0, description="toy observations behind the checked sequence")
    tolerance_se: float = Field(4.0, gt=0)


_MODEL_BLOCKS = {"toy": ToyBlock, "lgcp": LGCPBlock, "lv": LVBlock, "pde": PDEBlock, "gp": GPBlock,
                 "estimator-check": EstimatorCheckBlock}

# protocol defaults per experiment; explicit config values win
_DEFAULTS = {
    "toy": dict(sampler="mh", chains=4, iterations=10_000, burn_in=2000, thin=2, gamma0=0.1,
                sampler_params={"scale": 0.15, "width": 0.2}),
    "lgcp": dict(sampler="ess", chains=4, iterations=10_000, burn_in=1000, thin=3, gamma0=0.08),
    "lv": dict(sampler="ess", chains=4, iterations=10_000, burn_in=5000, thin=3, gamma0=0.12),
    "pde": dict(sampler="sa", chains=1, iterations=1, burn_in=0, thin=1, gamma0=0.1,
                sampler_params={"scale": 0.3}),
    "gp": dict(sampler="mh", chains=1, iterations=50_000, burn_in=5000, thin=1, gamma0=0.1,
               sampler_params={"scale": 8.0}),
    "estimator-check": dict(sampler="mh", chains=1, iterations=1, burn_in=0, thin=1, gamma0=0.1),
}


class ExperimentConfig(_Block):
    experiment: Experiment
    seed: int = Field(ge=0, lt=2**64)
    sampler: Sampler
    mode: Mode = "multi-fidelity"
    scheme: Literal["rr", "single-term"] = "rr"
    gamma0: Optional[float] = Field(None, gt=0, lt=1)
    k: Optional[int] = Field(None, ge=1)
    k_hf: Optional[int] = Field(None, ge=1)
    k_lf: Optional[int] = Field(None, ge=1)
    chains: int = Field(ge=1)
    iterations: int = Field(ge=1)
    burn_in: int = Field(ge=0)
    thin: int = Field(ge=1)
    sampler_params: SamplerParams = SamplerParams()
    model: dict = {}

    @model_validator(mode="after")
    def _check(self):
        if self.burn_in >= self.iterations and self.experiment not in ("pde", "estimator-check"):
            raise ValueError(f"burn_in ({self.burn_in}) must be below iterations ({self.iterations})")
        if self.mode == "single-fidelity" and self.k is None:
            raise ValueError("mode 'single-fidelity' needs k")
        if self.mode == "multi-fidelity" and self.gamma0 is None:
            raise ValueError("mode 'multi-fidelity' needs gamma0")
        if self.mode == "two-stage":
            if self.k_hf is None or self.k_lf is None:
                raise ValueError("mode 'two-stage' needs k_hf and k_lf")
            if self.sampler != "two-stage":
                raise ValueError("mode 'two-stage' needs sampler = 'two-stage'")
        if self.sampler == "two-stage" and self.mode != "two-stage":
            raise ValueError("sampler 'two-stage' needs mode = 'two-stage'")
        if (self.sampler == "sa") != (self.experiment == "pde"):
            raise ValueError("sampler 'sa' is used exactly for the pde experiment")
        if self.sampler == "ess" and self.experiment in ("toy", "gp"):
            raise ValueError(f"sampler 'ess' needs a Gaussian prior; {self.experiment} has none")
        block = _MODEL_BLOCKS[self.experiment]
        try:
            self.model = block(**self.model).model_dump()
        except ValidationError as exc:
            raise ValueError("; ".join(f"model.{'.'.join(map(str, e['loc']))}: {e['msg']}"
                                       for e in exc.errors())) from None
        return self

    def model_block(self):
        return _MODEL_BLOCKS[self.experiment](**self.model)


def resolve_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Fill protocol defaults, apply overrides and validate."""
    raw = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    experiment = raw.get("experiment")
    if experiment not in _DEFAULTS:
        raise ConfigError(f"experiment must be one of {sorted(_DEFAULTS)}, got {experiment!r}")
    merged = {k: v for k, v in _DEFAULTS[experiment].items() if k != "sampler_params"}
    merged.update({k: v for k, v in raw.items() if k != "sampler_params"})
    params = dict(_DEFAULTS[experiment].get("sampler_params", {}))
    params.update(raw.get("sampler_params", {}))
    merged["sampler_params"] = params
    if merged.get("seed") is None:
        raise ConfigError("seed is required (set it in the config or pass --seed)")
    try:
        return ExperimentConfig(**merged)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, e['loc'])) or 'config'}: {e['msg']}"
                             for e in exc.errors())
        raise ConfigError(problems) from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve_config(raw, overrides)


# --------------------------------------------------------------------------
# datasets


class DatasetError(ValueError):
    pass


def _data_lines(path: Path):
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.strip()
        if text and not text.startswith("#"):
            yield lineno, text


def default_coal_path() -> Path:
    return Path(str(resources.files("mfmcmc") / "data" / "coal.txt"))


def load_coal_dataset(path=None) -> np.ndarray:
    """Event times in decimal years, one per line, returned sorted."""
    path = Path(path) if path is not None else default_coal_path()
    values = []
    for lineno, text in _data_lines(path):
        try:
            values.append(float(text))
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: not a decimal year: {text!r}") from None
        if not math.isfinite(values[-1]):
            raise DatasetError(f"{path}:{lineno}: non-finite value")
    if not values:
        raise DatasetError(f"{path}: no events")
    if len(values) != COAL_EVENTS:
        log.warning("%s: expected %d events, found %d", path, COAL_EVENTS, len(values))
    return np.sort(np.array(values))


def load_lynx_hare(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(years, hare, lynx)`` from a CSV with a header and ``year,hare,lynx`` rows."""
    path = Path(path)
    rows = list(_data_lines(path))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    years, hare, lynx = [], [], []
    for lineno, text in rows[1:]:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            y, h, l = float(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric field in {text!r}") from None
        if h <= 0 or l <= 0:
            raise DatasetError(f"{path}:{lineno}: populations must be positive")
        years.append(y)
        hare.append(h)
        lynx.append(l)
    if not years:
        raise DatasetError(f"{path}: no data rows")
    if np.any(np.diff(years) <= 0):
        raise DatasetError(f"{path}: years must be strictly increasing")
    if len(years) != LYNX_HARE_ROWS:
        log.warning("%s: expected %d yearly rows, found %d", path, LYNX_HARE_ROWS, len(years))
    return np.array(years), np.array(hare), np.array(lynx)


# --------------------------------------------------------------------------
# result files


def _atomic_write(path: Path, write) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise OSError(f"could not write {path}: {exc}") from exc
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def sample_header(dim: int) -> list[str]:
    return ["iter", "K", "sign", "cum_cost"] + [f"theta_{i}" for i in range(dim)]


def write_samples(stream: Iterable[ChainSample], path, dim: int | None = None) -> int:
    """Write samples as CSV; returns the row count.

    ``dim`` fixes the header for an empty stream (default 1).
    """
    samples = list(stream)
    if dim is None:
        dim = samples[0].theta.size if samples else 1

    def write(fh):
        w = csv.writer(fh)
        w.writerow(sample_header(dim))
        for s in samples:
            theta = np.asarray(s.theta, dtype=float).reshape(-1)
            if theta.size != dim:
                raise ValueError(f"sample {s.iter} has dimension {theta.size}, expected {dim}")
            w.writerow([s.iter, s.K, s.sign, repr(float(s.cum_cost))] + [repr(float(v)) for v in theta])

    _atomic_write(Path(path), write)
    return len(samples)


def read_samples(path) -> list[ChainSample]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["iter", "K", "sign", "cum_cost"]:
            raise DatasetError(f"{path}: not a samples file")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields")
            out.append(ChainSample(int(row[0]), np.array([float(v) for v in row[4:]]), int(row[1]),
                                   int(row[2]), float(row[3])))
    return out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def summarize(samples: Sequence[ChainSample], functionals: dict) -> dict:
    """Sign-corrected functionals, negative-sign fraction and mean K.

    A ``<name>_std`` entry is derived for every ``<name>_mean`` / ``<name>_sq`` pair.
    """
    out = {
        "n_samples": len(samples),
        "negative_sign_fraction": negative_sign_fraction(samples) if samples else None,
        "mean_K": float(np.mean([s.K for s in samples])) if samples else None,
        "functionals": {},
    }
    for name, h in functionals.items():
        try:
            out["functionals"][name] = sign_corrected_estimate(samples, h)
        except (ZeroDivisionError, ValueError) as exc:
            out["functionals"][name] = None
            out.setdefault("warnings", []).append(f"{name}: {exc}")
    f = out["functionals"]
    for name in [n for n in f if n.endswith("_sq")]:
        mean, sq = f.get(name[:-3] + "_mean"), f[name]
        if mean is not None and sq is not None:
            f[name[:-3] + "_std"] = math.sqrt(max(sq - mean * mean, 0.0))
    return out


def write_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    _atomic_write(Path(path), lambda fh: fh.write(text))


def write_summary(chains: Sequence[Sequence[ChainSample]], functionals: dict, path,
                  total_costs: Sequence[float] | None = None, extra: dict | None = None) -> dict:
    """Per-chain and pooled summaries as JSON; returns the written document."""
    doc = {"per_chain": [], "pooled": None}
    for i, chain in enumerate(chains):
        entry = summarize(chain, functionals)
        entry["total_cost"] = (float(total_costs[i]) if total_costs is not None
                               else (chain[-1].cum_cost if chain else 0.0))
        doc["per_chain"].append(entry)
    pooled = [s for chain in chains for s in chain]
    doc["pooled"] = summarize(pooled, functionals)
    doc["pooled"]["total_cost"] = float(sum(c["total_cost"] for c in doc["per_chain"]))
    if extra:
        doc.update(extra)
    write_json(doc, path)
    return doc


@dataclass
class RunArtifact:
    samples_paths: list[Path]
    summary_path: Path
    metadata: dict = field(default_factory=dict)
