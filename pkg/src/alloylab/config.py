"""Experiment configuration: JSON schema, named presets, digests.

All physical parameters (dimension, box radii, disorder strength) must be
explicit in the config; silent defaults would corrupt reproducibility
claims.  Sampling parameters (seed, samples, workers) have CLI flags.
"""

from __future__ import annotations

import json
from pathlib import Path

from .disorder import (
    DisorderDensity,
    PiecewisePolynomialDensity,
    PiecewiseProfile,
    SingleSitePotential,
    density_preset,
)
from .estimators import ExperimentConfig


class ConfigError(ValueError):
    """Malformed or incomplete experiment configuration."""


def delta_potential(dimension: int) -> SingleSitePotential:
    return SingleSitePotential.delta(dimension)


def nn_positive_potential(dimension: int) -> SingleSitePotential:
    """Unit peak plus 0.2 on every nearest neighbor."""
    values = {(0,) * dimension: 1.0}
    for axis in range(dimension):
        for sign in (-1, 1):
            site = tuple(sign if a == axis else 0 for a in range(dimension))
            values[site] = 0.2
    return SingleSitePotential(values)


def nn_signed_potential(dimension: int) -> SingleSitePotential:
    """Unit peak with sign-changing 0.2 neighbors (dominant, zero-free transform)."""
    values = {(0,) * dimension: 1.0}
    for axis in range(dimension):
        for sign in (-1, 1):
            site = tuple(sign if a == axis else 0 for a in range(dimension))
            values[site] = 0.2 * sign
    return SingleSitePotential(values)


POTENTIAL_PRESETS = {
    "delta": delta_potential,
    "nn_positive": nn_positive_potential,
    "nn_signed": nn_signed_potential,
}


def potential_from_config(obj, dimension: int) -> SingleSitePotential:
    """Potential from a preset name or a list of (offset, value) pairs."""
    if isinstance(obj, str):
        try:
            return POTENTIAL_PRESETS[obj](dimension)
        except KeyError:
            raise ConfigError(
                f"unknown potential preset {obj!r}; have {sorted(POTENTIAL_PRESETS)}"
            ) from None
    if isinstance(obj, dict) and "preset" in obj:
        return potential_from_config(obj["preset"], dimension)
    if isinstance(obj, list):
        try:
            pairs = [(tuple(int(c) for c in site), float(v)) for site, v in obj]
        except (TypeError, ValueError) as err:
            raise ConfigError(f"potential pairs must be [[offset...], value] entries: {err}") from err
        potential = SingleSitePotential.from_pairs(pairs)
        if potential.dimension != dimension:
            raise ConfigError(
                f"potential offsets have dimension {potential.dimension}, expected {dimension}"
            )
        return potential
    raise ConfigError("field 'potential' must be a preset name or a list of pairs")


def density_from_config(obj) -> DisorderDensity:
    """Density from a preset name or an explicit piecewise coefficient table."""
    if isinstance(obj, str):
        try:
            return density_preset(obj)
        except ValueError as err:
            raise ConfigError(str(err)) from err
    if isinstance(obj, dict) and "preset" in obj:
        return density_from_config(obj["preset"])
    if isinstance(obj, dict) and "pieces" in obj:
        breakpoints: list[float] = []
        coefficients = []
        for piece in obj["pieces"]:
            try:
                lo, hi = (float(t) for t in piece["interval"])
                coeffs = tuple(float(c) for c in piece["coefficients"])
            except (KeyError, TypeError, ValueError) as err:
                raise ConfigError(
                    f"each density piece needs 'interval' and 'coefficients': {err}"
                ) from err
            if not breakpoints:
                breakpoints.extend([lo, hi])
            else:
                if lo != breakpoints[-1]:
                    raise ConfigError("density pieces must be contiguous")
                breakpoints.append(hi)
            coefficients.append(coeffs)
        try:
            profile = PiecewiseProfile(tuple(breakpoints), tuple(coefficients))
            return PiecewisePolynomialDensity(profile)
        except ValueError as err:
            raise ConfigError(f"invalid density table: {err}") from err
    raise ConfigError("field 'density' must be a preset name or a piecewise table")


def load_config(path: str | Path) -> dict:
    """Parse a JSON config file with positional diagnostics."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}:{err.lineno}:{err.colno}: invalid JSON ({err.msg})"
        ) from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    return raw


def require_fields(raw: dict, fields: tuple[str, ...]) -> None:
    missing = [f for f in fields if f not in raw]
    if missing:
        raise ConfigError(f"missing required config fields: {', '.join(missing)}")


def experiment_from_config(
    raw: dict,
    required: tuple[str, ...] = (),
    overrides: dict | None = None,
) -> ExperimentConfig:
    """Build an experiment from a parsed config, applying CLI overrides.

    ``dimension``, ``disorder_strength``, ``potential`` and ``density`` are
    always required; estimator-specific fields are passed via ``required``.
    """
    merged = dict(raw)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    require_fields(merged, ("dimension", "disorder_strength", "potential", "density") + required)
    dimension = int(merged["dimension"])
    energy = merged.get("energy")
    if energy is not None:
        if isinstance(energy, (int, float)):
            energy = complex(float(energy), 0.0)
        elif isinstance(energy, (list, tuple)) and len(energy) == 2:
            energy = complex(float(energy[0]), float(energy[1]))
        else:
            raise ConfigError("field 'energy' must be a number or a [re, im] pair")
    interval = merged.get("interval")
    if interval is not None:
        if not (isinstance(interval, (list, tuple)) and len(interval) == 2):
            raise ConfigError("field 'interval' must be an [a, b] pair")
        interval = (float(interval[0]), float(interval[1]))
    try:
        return ExperimentConfig(
            dimension=dimension,
            box_radius=int(merged.get("box_radius", 0)),
            potential=potential_from_config(merged["potential"], dimension),
            density=density_from_config(merged["density"]),
            disorder_strength=float(merged["disorder_strength"]),
            energy=energy,
            interval=interval,
            site_x=tuple(merged["site_x"]) if "site_x" in merged else None,
            site_y=tuple(merged["site_y"]) if "site_y" in merged else None,
            n_samples=int(merged.get("samples", 1000)),
            seed=int(merged.get("seed", 0)),
            workers=int(merged.get("workers", 1)),
            shifted_laplacian=bool(merged.get("shifted_laplacian", False)),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
