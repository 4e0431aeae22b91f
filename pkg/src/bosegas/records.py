"""Experiment configuration files and persisted result records.

Config files are INI-style with fixed sections and a closed key set; records
are JSON objects with an embedded schema version.  Multi-chain results are
pooled through count/mean/M2 sufficient statistics so merging is associative
and independent of completion order.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .lattice import ModelParams, TimeGrid, TorusGeometry
from .stats import ComplexEstimate, MomentAccumulator

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentRecord",
    "record_from_estimate",
    "merge_chains",
]

SCHEMA_VERSION = 1


class ConfigError(Exception):
    """Malformed or invalid experiment configuration."""


ALLOWED_KEYS = {
    "geometry": {"mode", "dimension", "sites_per_side", "circumference"},
    "model": {"nu", "kappa0", "lambda0", "n_species", "coupling_mode",
              "rho_mode", "rho"},
    "grid": {"n_tau"},
    "mc": {"samples", "seed", "chains"},
    "truncations": {"n_max", "l_max"},
    "potential": {"kind", "strength", "width"},
    "limit": {"kind", "nu_list", "n_list", "z"},
}

DEFAULTS = {
    "geometry": {"mode": "lattice", "dimension": "1", "sites_per_side": "1",
                 "circumference": "0"},
    "model": {"nu": "1.0", "kappa0": "1.0", "lambda0": "0.0",
              "n_species": "1.0", "coupling_mode": "fixed",
              "rho_mode": "explicit", "rho": "0.0"},
    "grid": {"n_tau": "32"},
    "mc": {"samples": "10000", "seed": "0", "chains": "1"},
    "truncations": {"n_max": "30", "l_max": "30"},
    "potential": {"kind": "delta", "strength": "1.0", "width": "0.5"},
    "limit": {"kind": "classical", "nu_list": "0.4,0.2,0.1,0.05",
              "n_list": "4,64", "z": "0.5"},
}


@dataclass
class ExperimentConfig:
    """Fully resolved, validated experiment parameters."""

    raw: dict

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (configparser.Error, OSError) as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser) -> "ExperimentConfig":
        raw = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
        for sec in parser.sections():
            if sec not in ALLOWED_KEYS:
                raise ConfigError(f"unknown config section [{sec}]")
            for key, val in parser.items(sec):
                if key not in ALLOWED_KEYS[sec]:
                    raise ConfigError(f"unknown key '{key}' in section [{sec}]")
                raw[sec][key] = val
        return cls(raw=raw)

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls(raw={sec: dict(vals) for sec, vals in DEFAULTS.items()})

    def override(self, section: str, key: str, value) -> None:
        if key not in ALLOWED_KEYS[section]:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        self.raw[section][key] = str(value)

    # typed accessors ------------------------------------------------------

    def _get(self, section, key, cast):
        try:
            return cast(self.raw[section][key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: "
                              f"{self.raw[section][key]!r}") from exc

    def geometry(self) -> TorusGeometry:
        mode = self.raw["geometry"]["mode"]
        try:
            if mode == "circle":
                return TorusGeometry(dimension=1, mode="circle",
                                     circumference=self._get("geometry", "circumference", float))
            return TorusGeometry(dimension=self._get("geometry", "dimension", int),
                                 sites_per_side=self._get("geometry", "sites_per_side", int))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model(self) -> ModelParams:
        try:
            return ModelParams(
                nu=self._get("model", "nu", float),
                kappa0=self._get("model", "kappa0", float),
                lambda0=self._get("model", "lambda0", float),
                n_species=self._get("model", "n_species", float),
                coupling_mode=self.raw["model"]["coupling_mode"],
                rho_mode=self.raw["model"]["rho_mode"],
                rho=self._get("model", "rho", float),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> TimeGrid:
        return TimeGrid(nu=self._get("model", "nu", float),
                        n_slices=self._get("grid", "n_tau", int))

    def potential(self, geom: TorusGeometry):
        from .lattice import (CirclePotential, delta_potential,
                              wrapped_gaussian_potential)

        kind = self.raw["potential"]["kind"]
        strength = self._get("potential", "strength", float)
        width = self._get("potential", "width", float)
        if geom.mode == "circle":
            return CirclePotential(geom.circumference, strength=strength,
                                   width=width)
        if kind == "delta":
            return delta_potential(geom, strength)
        if kind == "gaussian":
            return wrapped_gaussian_potential(geom, strength, width)
        raise ConfigError(f"unknown potential kind {kind!r}")

    def mc(self) -> dict:
        return {
            "samples": self._get("mc", "samples", int),
            "seed": self._get("mc", "seed", int),
            "chains": self._get("mc", "chains", int),
        }

    def truncations(self) -> dict:
        return {
            "n_max": self._get("truncations", "n_max", int),
            "l_max": self._get("truncations", "l_max", int),
        }

    def float_list(self, section, key):
        return [float(tok) for tok in self.raw[section][key].split(",") if tok]


@dataclass
class ExperimentRecord:
    """One persisted estimate with enough statistics to merge later."""

    command: str
    parameters: dict
    estimate_re: float
    estimate_im: float
    stderr_re: float
    stderr_im: float
    n_samples: int
    ess: float
    seed: int
    unreliable: bool
    wall_seconds: float
    moments: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentRecord":
        return cls(**json.loads(text))

    def deterministic_view(self) -> dict:
        """Everything except timing, for rerun-identity checks."""
        data = asdict(self)
        data.pop("wall_seconds")
        return data


def record_from_estimate(command: str, parameters: dict, est: ComplexEstimate,
                         wall_seconds: float,
                         sample_values: np.ndarray | None = None) -> ExperimentRecord:
    acc = MomentAccumulator(2)
    if sample_values is not None:
        acc.add_samples(np.stack([np.real(sample_values),
                                  np.imag(sample_values)], axis=1))
    else:
        # no raw stream: rebuild equivalent sufficient statistics from the
        # reported mean and standard error so chains stay mergeable
        n = max(int(est.n_samples), 1)
        acc.count = n
        acc.mean = np.array([est.value.real, est.value.imag])
        acc.m2 = np.diag([est.stderr_re**2 * n * max(n - 1, 1),
                          est.stderr_im**2 * n * max(n - 1, 1)])
    moments = acc.to_dict()
    extra = {k: v for k, v in est.extra.items()
             if isinstance(v, (int, float, bool, str))}
    return ExperimentRecord(
        command=command,
        parameters=parameters,
        estimate_re=float(est.value.real),
        estimate_im=float(est.value.imag),
        stderr_re=est.stderr_re,
        stderr_im=est.stderr_im,
        n_samples=est.n_samples,
        ess=float(est.ess),
        seed=est.seed if est.seed is not None else 0,
        unreliable=bool(est.unreliable),
        wall_seconds=wall_seconds,
        moments=moments,
        extra=extra,
    )


class MergeError(Exception):
    pass


def merge_chains(*recs: ExperimentRecord) -> ExperimentRecord:
    """Pool per-chain records via count/mean/M2; associative to rounding.

    Records must share resolved parameters and carry distinct seeds.
    """
    if not recs:
        raise MergeError("nothing to merge")
    base = recs[0]
    seeds = set()
    for r in recs:
        if r.parameters != base.parameters or r.command != base.command:
            raise MergeError("cannot merge records with different parameters")
        if not r.moments:
            raise MergeError("record lacks moment statistics")
        if r.seed in seeds:
            raise MergeError(f"duplicate chain seed {r.seed}")
        seeds.add(r.seed)
    acc = MomentAccumulator.from_dict(base.moments)
    for r in recs[1:]:
        acc.merge(MomentAccumulator.from_dict(r.moments))
    se = acc.mean_stderr()
    return ExperimentRecord(
        command=base.command,
        parameters=base.parameters,
        estimate_re=float(acc.mean[0]),
        estimate_im=float(acc.mean[1]),
        stderr_re=float(se[0]),
        stderr_im=float(se[1]),
        n_samples=int(acc.count),
        ess=float(sum(r.ess for r in recs)),
        seed=min(seeds),
        unreliable=any(r.unreliable for r in recs),
        wall_seconds=float(sum(r.wall_seconds for r in recs)),
        moments=acc.to_dict(),
        extra={"merged_chains": len(recs)},
    )
