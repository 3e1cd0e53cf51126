"""Scenario construction: geometry-derived target angles, Rician fading
links between the base station and each reflecting surface, and the
round-trip target coefficient from the bistatic radar equation.

Every random draw comes from a named substream keyed by
(seed, draw index, surface index, purpose), so changing the number of
surfaces or the sweep grid never reshuffles unrelated draws.

Config files are flat ``key = value`` text (``#`` starts a comment).
Recognized keys and their defaults match the fields of
:class:`ScenarioConfig`; positions are comma-separated triples and
``irs_positions`` takes semicolon-separated triples.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .steering import ArrayGeometry, Doa, steering_upa

FOUR_PI = 4.0 * math.pi

# rng purpose tags: keep stable, they feed the substream keys
_STREAM_CHANNEL = 0
_STREAM_BETA = 1
STREAM_OPTIMIZER = 2
STREAM_INIT = 3


def dbm_to_watts(dbm: float) -> float:
    """-80 dBm -> 1e-11 W.  All dB conversions live here."""
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts / 1e-3)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, *key); stable under unrelated changes."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))


@dataclass(frozen=True)
class ScenarioConfig:
    """Full experiment description.

    Noise powers are stored in watts; the config file takes them in dBm.
    Spacings default to half the carrier wavelength when left at None.
    ``beta_override`` (one complex value per surface, or a single value
    applied to all) bypasses the radar-equation model for the round-trip
    coefficient.
    """

    bs_position: tuple = (0.0, 0.0, 0.0)
    irs_positions: tuple = ((-5.0, 10.0, 0.0), (-5.0, 20.0, 0.0))
    target_position: tuple = (5.0, 15.0, 0.0)
    bs_antennas: int = 8
    reflect_n_h: int = 4
    reflect_n_v: int = 4
    sensor_n_h: int = 4
    sensor_n_v: int = 4
    wavelength: float = 0.1
    spacing_h: float | None = None
    spacing_v: float | None = None
    sensor_spacing_h: float | None = None
    sensor_spacing_v: float | None = None
    p_t: float = 10.0
    p_s: float = 0.1
    a_max: float = 8.0
    sigma_r2: float = dbm_to_watts(-80.0)
    sigma_b2: float = dbm_to_watts(-80.0)
    sigma_s2: float = dbm_to_watts(-80.0)
    t_c: int = 100
    k_factor_db: float = 5.0
    rcs: float = 1.0
    seed: int = 1
    beta_override: tuple | None = None

    def __post_init__(self):
        if self.n_irs < 1:
            raise ValueError("need at least one reflecting surface")
        for name in ("p_t", "p_s", "sigma_r2", "sigma_b2", "sigma_s2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.a_max < 1.0:
            raise ValueError("a_max must be >= 1")
        if self.t_c <= 0 or self.t_c % self.n_irs:
            raise ValueError("t_c must be a positive multiple of the surface count")
        if self.bs_antennas < 1:
            raise ValueError("bs_antennas must be >= 1")

    @property
    def n_irs(self) -> int:
        return len(self.irs_positions)

    @property
    def reflect_geom(self) -> ArrayGeometry:
        return ArrayGeometry(
            self.reflect_n_h,
            self.reflect_n_v,
            self.spacing_h or self.wavelength / 2,
            self.spacing_v or self.wavelength / 2,
            self.wavelength,
        )

    @property
    def sensor_geom(self) -> ArrayGeometry:
        return ArrayGeometry(
            self.sensor_n_h,
            self.sensor_n_v,
            self.sensor_spacing_h or self.wavelength / 2,
            self.sensor_spacing_v or self.wavelength / 2,
            self.wavelength,
        )

    @property
    def bs_geom(self) -> ArrayGeometry:
        # BS is a horizontal uniform linear array
        return ArrayGeometry(
            self.bs_antennas, 1, self.wavelength / 2, self.wavelength / 2, self.wavelength
        )


@dataclass(frozen=True)
class ChannelSet:
    """Immutable per-scenario channel realization.

    g: one N x M matrix per surface; truth: (theta, phi, beta) per surface;
    distances in meters.
    """

    g: tuple
    truth: tuple
    d_bs_irs: tuple
    d_irs_target: tuple

    @property
    def n_irs(self) -> int:
        return len(self.g)


def _local_angles(origin: Sequence[float], point: Sequence[float]) -> tuple[float, float, float]:
    """(theta, phi, distance) of `point` in the local frame at `origin`.

    Local frames share the global axes with boresight along +x: theta is the
    polar angle from +z, phi the azimuth from +x toward +y.
    """
    rel = np.asarray(point, dtype=float) - np.asarray(origin, dtype=float)
    dist = float(np.linalg.norm(rel))
    if dist == 0.0:
        raise ValueError("coincident points: angles undefined")
    theta = math.acos(max(-1.0, min(1.0, rel[2] / dist)))
    phi = math.atan2(rel[1], rel[0])
    return theta, phi, dist


def derive_truth(config: ScenarioConfig) -> list[tuple[float, float]]:
    """Target (theta, phi) in each surface's local frame."""
    return [
        _local_angles(pos, config.target_position)[:2] for pos in config.irs_positions
    ]


def path_gain(wavelength: float, dist: float) -> float:
    """Free-space one-hop power gain (lambda / 4 pi d)^2."""
    return (wavelength / (FOUR_PI * dist)) ** 2


def synth_channel(config: ScenarioConfig, l: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the N x M Rician channel between the BS and surface `l`.

    The line-of-sight component is the outer product of the surface steering
    vector toward the BS and the BS steering vector toward the surface; the
    scattered component has i.i.d. standard complex Gaussian entries.  Both
    are scaled by the free-space path gain.
    """
    irs_pos = config.irs_positions[l]
    theta_b, phi_b, dist = _local_angles(irs_pos, config.bs_position)
    theta_i, phi_i, _ = _local_angles(config.bs_position, irs_pos)
    a_irs = steering_upa(config.reflect_geom, Doa(theta_b, phi_b))
    a_bs = steering_upa(config.bs_geom, Doa(theta_i, phi_i))
    g_los = np.outer(a_irs, a_bs)
    n, m = g_los.shape
    g_nlos = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / math.sqrt(2.0)
    kappa = 10.0 ** (config.k_factor_db / 10.0)
    mix = math.sqrt(kappa / (1.0 + kappa)) * g_los + math.sqrt(1.0 / (1.0 + kappa)) * g_nlos
    return math.sqrt(path_gain(config.wavelength, dist)) * mix


def compute_beta(config: ScenarioConfig, l: int, rng: np.random.Generator) -> complex:
    """Round-trip target coefficient for surface `l`.

    Magnitude follows the bistatic radar equation with equal legs,
    |beta|^2 = lambda^2 rcs / ((4 pi)^3 d^4); the phase is uniform.  An
    explicit ``beta_override`` in the config wins.
    """
    if config.beta_override is not None:
        ov = config.beta_override
        return complex(ov[l] if len(ov) > 1 else ov[0])
    _, _, dist = _local_angles(config.irs_positions[l], config.target_position)
    mag2 = config.wavelength**2 * config.rcs / (FOUR_PI**3 * dist**4)
    phase = rng.uniform(-math.pi, math.pi)
    return cmath.rect(math.sqrt(mag2), phase)


def build_channels(config: ScenarioConfig, draw: int = 0) -> ChannelSet:
    """Deterministically realize all channels and truth for one draw index."""
    g = []
    truth = []
    d_bi = []
    d_it = []
    for l in range(config.n_irs):
        theta, phi = derive_truth(config)[l]
        beta = compute_beta(config, l, substream(config.seed, draw, l, _STREAM_BETA))
        g.append(synth_channel(config, l, substream(config.seed, draw, l, _STREAM_CHANNEL)))
        truth.append((theta, phi, beta))
        d_bi.append(_local_angles(config.irs_positions[l], config.bs_position)[2])
        d_it.append(_local_angles(config.irs_positions[l], config.target_position)[2])
    return ChannelSet(g=tuple(g), truth=tuple(truth), d_bs_irs=tuple(d_bi), d_irs_target=tuple(d_it))


# --- config file round-trip ------------------------------------------------

_VEC_KEYS = {"bs_position", "target_position"}
_INT_KEYS = {
    "bs_antennas", "reflect_n_h", "reflect_n_v", "sensor_n_h", "sensor_n_v", "t_c", "seed",
}
_DBM_KEYS = {"noise_reflect_dbm": "sigma_r2", "noise_bs_dbm": "sigma_b2", "noise_sensor_dbm": "sigma_s2"}
_FLOAT_KEYS = {
    "wavelength", "spacing_h", "spacing_v", "sensor_spacing_h", "sensor_spacing_v",
    "p_t", "p_s", "a_max", "k_factor_db", "rcs",
}


def _parse_vec(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


class ConfigError(ValueError):
    """Malformed or inconsistent scenario config file."""


def parse_config_text(text: str) -> ScenarioConfig:
    fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _VEC_KEYS:
                fields[key] = _parse_vec(value)
            elif key == "irs_positions":
                fields[key] = tuple(_parse_vec(part) for part in value.split(";"))
            elif key == "beta_override":
                fields[key] = tuple(complex(part.strip()) for part in value.split(";"))
            elif key in _INT_KEYS:
                fields[key] = int(value)
            elif key in _DBM_KEYS:
                fields[_DBM_KEYS[key]] = dbm_to_watts(float(value))
            elif key in _FLOAT_KEYS:
                fields[key] = float(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    try:
        return ScenarioConfig(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def with_seed(config: ScenarioConfig, seed: int | None) -> ScenarioConfig:
    return config if seed is None else replace(config, seed=seed)
