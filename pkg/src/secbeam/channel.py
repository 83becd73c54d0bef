"""MIMO channel generation for the ground-station / UAV / eavesdropper geometry.

The base station carries a uniform planar array (boresight +z), the
legitimate UAV and the eavesdropper each carry a uniform linear array
(axis +x by convention).  Channels follow a Rician model

    H = sqrt(g) * ( sqrt(K/(K+1)) * a_rx a_tx^H * sqrt(Nrx*Ntx)
                    + sqrt(1/(K+1)) * W ),

with path gain g = 10^(ref_db/10) * d^(-alpha) and W i.i.d. standard
complex Gaussian.  All randomness flows through explicit seeds.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

EVE_UNCERTAINTY_FACTOR = 2.0  # covert eavesdropper: inflate every sigma 2x


def rng_from(seed, *path) -> np.random.Generator:
    """Deterministic generator for (seed, *path); path entries are small ints."""
    if isinstance(seed, (tuple, list)):
        entropy = tuple(seed) + tuple(path)
    else:
        entropy = (int(seed),) + tuple(path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna array: kind 'upa' uses (nx, ny), kind 'ula' uses n."""

    kind: str
    nx: int = 1
    ny: int = 1
    n: int = 1
    spacing: float = 0.5  # element spacing in wavelengths

    def __post_init__(self):
        if self.kind not in ("upa", "ula"):
            raise ValueError(f"unknown array kind {self.kind!r}")
        if self.spacing <= 0:
            raise ValueError("element spacing must be positive")
        counts = (self.nx, self.ny) if self.kind == "upa" else (self.n,)
        if any(c < 1 for c in counts):
            raise ValueError("element counts must be >= 1")

    @property
    def size(self) -> int:
        return self.nx * self.ny if self.kind == "upa" else self.n

    def to_json_dict(self) -> dict:
        if self.kind == "upa":
            return {"kind": "upa", "nx": self.nx, "ny": self.ny,
                    "spacing_wavelengths": self.spacing}
        return {"kind": "ula", "n": self.n, "spacing_wavelengths": self.spacing}

    @staticmethod
    def from_json_dict(d: dict) -> "ArrayGeometry":
        kind = d.get("kind")
        if kind == "upa":
            _require_keys(d, {"kind", "nx", "ny", "spacing_wavelengths"}, "bs_array")
            return ArrayGeometry("upa", nx=int(d["nx"]), ny=int(d["ny"]),
                                 spacing=float(d["spacing_wavelengths"]))
        if kind == "ula":
            _require_keys(d, {"kind", "n", "spacing_wavelengths"}, "array")
            return ArrayGeometry("ula", n=int(d["n"]),
                                 spacing=float(d["spacing_wavelengths"]))
        raise ValueError(f"array kind must be 'upa' or 'ula', got {kind!r}")


class ComplexMatrix:
    """Dense complex matrix stored as paired real/imaginary float64 arrays."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = np.array(re, dtype=np.float64)
        self.im = np.array(im, dtype=np.float64)
        if self.re.ndim != 2 or self.re.shape != self.im.shape:
            raise ValueError("re and im must be equal-shape 2D arrays")

    @property
    def rows(self) -> int:
        return self.re.shape[0]

    @property
    def cols(self) -> int:
        return self.re.shape[1]

    @staticmethod
    def from_complex(z: np.ndarray) -> "ComplexMatrix":
        z = np.atleast_2d(np.asarray(z))
        return ComplexMatrix(z.real, z.imag)

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def hermitian(self) -> "ComplexMatrix":
        return ComplexMatrix(self.re.T, -self.im.T)

    def frobenius_sq(self) -> float:
        return float(np.sum(self.re * self.re) + np.sum(self.im * self.im))

    def copy(self) -> "ComplexMatrix":
        return ComplexMatrix(self.re, self.im)

    def __eq__(self, other):
        return (isinstance(other, ComplexMatrix)
                and np.array_equal(self.re, other.re)
                and np.array_equal(self.im, other.im))


@dataclass(frozen=True)
class Scenario:
    """Geometry, power budget and fading parameters of one deployment."""

    bs_position: tuple = (0.0, 0.0, 10.0)
    uav_position: tuple = (50.0, 0.0, 100.0)
    eve_position: tuple = (40.0, 30.0, 80.0)
    tx_power: float = 1.0
    noise_power: float = 1e-9
    rician_k: float = 10.0
    pathloss_exponent: float = 2.2
    reference_gain_db: float = -40.0
    bs_array: ArrayGeometry = field(
        default_factory=lambda: ArrayGeometry("upa", nx=4, ny=4))
    uav_array: ArrayGeometry = field(
        default_factory=lambda: ArrayGeometry("ula", n=6))
    eve_array: ArrayGeometry = field(
        default_factory=lambda: ArrayGeometry("ula", n=6))

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.rician_k < 0:
            raise ValueError("rician_k must be non-negative")
        for name, pos in (("uav", self.uav_position), ("eve", self.eve_position)):
            if not 0.0 < pos[2] <= 1000.0:
                raise ValueError(
                    f"{name} altitude {pos[2]} m outside low-altitude band (0, 1000]")

    def with_positions(self, uav=None, eve=None) -> "Scenario":
        return replace(self,
                       uav_position=tuple(uav) if uav is not None else self.uav_position,
                       eve_position=tuple(eve) if eve is not None else self.eve_position)

    def to_json_dict(self) -> dict:
        return {
            "bs_position_m": list(self.bs_position),
            "uav_position_m": list(self.uav_position),
            "eve_position_m": list(self.eve_position),
            "tx_power_w": self.tx_power,
            "noise_power_w": self.noise_power,
            "rician_k": self.rician_k,
            "pathloss_exponent": self.pathloss_exponent,
            "reference_gain_db": self.reference_gain_db,
            "bs_array": self.bs_array.to_json_dict(),
            "uav_array": self.uav_array.to_json_dict(),
            "eve_array": self.eve_array.to_json_dict(),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Scenario":
        _require_keys(d, {
            "bs_position_m", "uav_position_m", "eve_position_m", "tx_power_w",
            "noise_power_w", "rician_k", "pathloss_exponent",
            "reference_gain_db", "bs_array", "uav_array", "eve_array"},
            "scenario")
        return Scenario(
            bs_position=tuple(float(v) for v in d["bs_position_m"]),
            uav_position=tuple(float(v) for v in d["uav_position_m"]),
            eve_position=tuple(float(v) for v in d["eve_position_m"]),
            tx_power=float(d["tx_power_w"]),
            noise_power=float(d["noise_power_w"]),
            rician_k=float(d["rician_k"]),
            pathloss_exponent=float(d["pathloss_exponent"]),
            reference_gain_db=float(d["reference_gain_db"]),
            bs_array=ArrayGeometry.from_json_dict(d["bs_array"]),
            uav_array=ArrayGeometry.from_json_dict(d["uav_array"]),
            eve_array=ArrayGeometry.from_json_dict(d["eve_array"]),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @staticmethod
    def from_json(path) -> "Scenario":
        with open(path) as fh:
            return Scenario.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class UncertaintyModel:
    """Std-devs of location, CSI and AoA errors; all-zero means exact knowledge."""

    position_sigma: float = 2.0   # meters
    csi_error_sigma: float = 0.05  # relative
    aoa_sigma: float = 0.02       # radians

    def __post_init__(self):
        if min(self.position_sigma, self.csi_error_sigma, self.aoa_sigma) < 0:
            raise ValueError("uncertainty sigmas must be non-negative")

    def is_zero(self) -> bool:
        return (self.position_sigma == 0.0 and self.csi_error_sigma == 0.0
                and self.aoa_sigma == 0.0)

    def scaled(self, factor: float) -> "UncertaintyModel":
        return UncertaintyModel(self.position_sigma * factor,
                                self.csi_error_sigma * factor,
                                self.aoa_sigma * factor)

    def to_json_dict(self) -> dict:
        return {"position_sigma_m": self.position_sigma,
                "csi_error_sigma": self.csi_error_sigma,
                "aoa_sigma_rad": self.aoa_sigma}

    @staticmethod
    def from_json_dict(d: dict) -> "UncertaintyModel":
        _require_keys(d, {"position_sigma_m", "csi_error_sigma", "aoa_sigma_rad"},
                      "uncertainty")
        return UncertaintyModel(position_sigma=float(d["position_sigma_m"]),
                                csi_error_sigma=float(d["csi_error_sigma"]),
                                aoa_sigma=float(d["aoa_sigma_rad"]))


@dataclass
class ChannelPair:
    """h_b: BS->UAV and h_e: BS->Eve, receiver antennas x transmit elements."""

    h_b: ComplexMatrix
    h_e: ComplexMatrix

    def __post_init__(self):
        if (self.h_b.rows, self.h_b.cols) != (self.h_e.rows, self.h_e.cols):
            raise ValueError("h_b and h_e dimensions differ")

    def copy(self) -> "ChannelPair":
        return ChannelPair(self.h_b.copy(), self.h_e.copy())


def _require_keys(d: dict, expected: set, what: str):
    unknown = set(d) - expected
    if unknown:
        raise ValueError(f"{what}: unknown keys {sorted(unknown)}")
    missing = expected - set(d)
    if missing:
        raise ValueError(f"{what}: missing keys {sorted(missing)}")


# ---------------------------------------------------------------------------
# steering vectors


def steering_upa(geometry: ArrayGeometry, elevation: float, azimuth: float) -> np.ndarray:
    """Unit-norm UPA response; element (m, n) phases m*sin(el)cos(az)+n*sin(el)sin(az).

    Flattened row-major over (m, n), m along x, n along y.
    """
    if geometry.kind != "upa":
        raise ValueError("steering_upa needs a UPA geometry")
    m = np.arange(geometry.nx)[:, None]
    n = np.arange(geometry.ny)[None, :]
    phase = 2.0 * np.pi * geometry.spacing * (
        m * np.sin(elevation) * np.cos(azimuth)
        + n * np.sin(elevation) * np.sin(azimuth))
    vec = np.exp(1j * phase) / np.sqrt(geometry.nx * geometry.ny)
    return vec.reshape(-1)


def steering_ula(geometry: ArrayGeometry, angle: float) -> np.ndarray:
    """Unit-norm ULA response; element k phase k*cos(angle)."""
    if geometry.kind != "ula":
        raise ValueError("steering_ula needs a ULA geometry")
    k = np.arange(geometry.n)
    phase = 2.0 * np.pi * geometry.spacing * k * np.cos(angle)
    return np.exp(1j * phase) / np.sqrt(geometry.n)


def _link_angles(bs_pos, rx_pos):
    """(distance, BS elevation from +z, BS azimuth, ULA angle from +x at rx)."""
    d = np.asarray(rx_pos, dtype=np.float64) - np.asarray(bs_pos, dtype=np.float64)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("transmitter and receiver positions coincide")
    elevation = float(np.arccos(np.clip(d[2] / r, -1.0, 1.0)))
    azimuth = float(np.arctan2(d[1], d[0]))
    ula_angle = float(np.arccos(np.clip(-d[0] / r, -1.0, 1.0)))
    return r, elevation, azimuth, ula_angle


def path_gain(scenario: Scenario, distance: float) -> float:
    return 10.0 ** (scenario.reference_gain_db / 10.0) * distance ** (
        -scenario.pathloss_exponent)


def _los_component(scenario: Scenario, rx_array: ArrayGeometry,
                   elevation, azimuth, ula_angle) -> np.ndarray:
    a_tx = steering_upa(scenario.bs_array, elevation, azimuth)
    a_rx = steering_ula(rx_array, ula_angle)
    scale = np.sqrt(rx_array.size * scenario.bs_array.size)
    return scale * np.outer(a_rx, np.conj(a_tx))


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    # CN(0, 1): unit total variance split between re and im
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _link_channel(scenario: Scenario, rx_pos, rx_array, rng) -> np.ndarray:
    r, elevation, azimuth, ula_angle = _link_angles(scenario.bs_position, rx_pos)
    g = path_gain(scenario, r)
    k = scenario.rician_k
    los = _los_component(scenario, rx_array, elevation, azimuth, ula_angle)
    w = _complex_gaussian(rng, los.shape)
    h = np.sqrt(g) * (np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * w)
    return h


def nominal_channel(scenario: Scenario, rng_seed) -> ChannelPair:
    """Draw the nominal (estimated) channel pair; deterministic per seed."""
    rng = rng_from(rng_seed, 0)
    h_b = _link_channel(scenario, scenario.uav_position, scenario.uav_array, rng)
    h_e = _link_channel(scenario, scenario.eve_position, scenario.eve_array, rng)
    return ChannelPair(ComplexMatrix.from_complex(h_b),
                       ComplexMatrix.from_complex(h_e))


class _LinkBasis:
    """Per-link quantities shared by every perturbation sample."""

    __slots__ = ("h0", "rx_pos", "rx_array", "w0")

    def __init__(self, h0: np.ndarray, scenario: Scenario, rx_pos, rx_array,
                 geo_active: bool):
        self.h0 = h0
        self.rx_pos = np.asarray(rx_pos, dtype=np.float64)
        self.rx_array = rx_array
        self.w0 = None
        if geo_active:
            # reconstruct the nominal scattering term once
            r0, el0, az0, ua0 = _link_angles(scenario.bs_position, rx_pos)
            g0 = path_gain(scenario, r0)
            k = scenario.rician_k
            los0 = _los_component(scenario, rx_array, el0, az0, ua0)
            self.w0 = (h0 / np.sqrt(g0)
                       - np.sqrt(k / (k + 1.0)) * los0) * np.sqrt(k + 1.0)


def _perturb_from_basis(basis: _LinkBasis, scenario: Scenario,
                        u: UncertaintyModel, rng) -> np.ndarray:
    if basis.w0 is not None:
        k = scenario.rician_k
        pos = basis.rx_pos + u.position_sigma * rng.standard_normal(3)
        r1, el1, az1, ua1 = _link_angles(scenario.bs_position, pos)
        el1 += u.aoa_sigma * rng.standard_normal()
        az1 += u.aoa_sigma * rng.standard_normal()
        ua1 += u.aoa_sigma * rng.standard_normal()
        g1 = path_gain(scenario, r1)
        los1 = _los_component(scenario, basis.rx_array, el1, az1, ua1)
        h_geo = np.sqrt(g1) * (np.sqrt(k / (k + 1.0)) * los1
                               + np.sqrt(1.0 / (k + 1.0)) * basis.w0)
    else:
        h_geo = basis.h0
    if u.csi_error_sigma > 0.0:
        scale = u.csi_error_sigma * np.linalg.norm(h_geo) / np.sqrt(h_geo.size)
        h_geo = h_geo + scale * _complex_gaussian(rng, h_geo.shape)
    return h_geo


def _perturb_link(h0: np.ndarray, scenario: Scenario, rx_pos, rx_array,
                  u: UncertaintyModel, rng) -> np.ndarray:
    geo_active = u.position_sigma > 0.0 or u.aoa_sigma > 0.0
    basis = _LinkBasis(h0, scenario, rx_pos, rx_array, geo_active)
    return _perturb_from_basis(basis, scenario, u, rng)


def perturb(nominal: ChannelPair, scenario: Scenario, u: UncertaintyModel,
            rng_seed) -> ChannelPair:
    """One uncertainty realization around the nominal pair.

    Eve's sigmas are inflated by EVE_UNCERTAINTY_FACTOR. A zero model
    returns a bit-exact copy of the nominal.
    """
    if u.is_zero():
        return nominal.copy()
    rng = rng_from(rng_seed, 1)
    u_eve = u.scaled(EVE_UNCERTAINTY_FACTOR)
    h_b = _perturb_link(nominal.h_b.to_complex(), scenario,
                        scenario.uav_position, scenario.uav_array, u, rng)
    h_e = _perturb_link(nominal.h_e.to_complex(), scenario,
                        scenario.eve_position, scenario.eve_array, u_eve, rng)
    return ChannelPair(ComplexMatrix.from_complex(h_b),
                       ComplexMatrix.from_complex(h_e))


def _mc_workers() -> int:
    value = os.environ.get("THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"THREADS must be an integer, got {value!r}")


_POOL = None


def _mc_pool():
    global _POOL
    if _POOL is None:
        _POOL = ThreadPoolExecutor(max_workers=_mc_workers())
    return _POOL


def perturb_batch(nominal: ChannelPair, scenario: Scenario, u: UncertaintyModel,
                  rng_seed, n: int):
    """n realizations with per-sample seeds (rng_seed, counter); stacked complex.

    Samples may be filled by a THREADS-capped pool; every sample is an
    independent function of its own seed and lands at its own index, so the
    result is identical regardless of worker count.
    """
    hb = np.empty((n, nominal.h_b.rows, nominal.h_b.cols), dtype=np.complex128)
    he = np.empty_like(hb)
    if u.is_zero():
        hb[:] = nominal.h_b.to_complex()
        he[:] = nominal.h_e.to_complex()
        return hb, he

    geo_active = u.position_sigma > 0.0 or u.aoa_sigma > 0.0
    u_eve = u.scaled(EVE_UNCERTAINTY_FACTOR)
    basis_b = _LinkBasis(nominal.h_b.to_complex(), scenario,
                         scenario.uav_position, scenario.uav_array, geo_active)
    basis_e = _LinkBasis(nominal.h_e.to_complex(), scenario,
                         scenario.eve_position, scenario.eve_array, geo_active)

    def fill(lo: int, hi: int):
        for i in range(lo, hi):
            rng = rng_from(seed_child(rng_seed, i), 1)
            hb[i] = _perturb_from_basis(basis_b, scenario, u, rng)
            he[i] = _perturb_from_basis(basis_e, scenario, u_eve, rng)

    workers = _mc_workers()
    if workers > 1 and n >= 96:
        # one contiguous slice per worker; placement by index keeps the
        # result independent of scheduling
        bounds = np.linspace(0, n, workers + 1, dtype=int)
        futures = [_mc_pool().submit(fill, bounds[w], bounds[w + 1])
                   for w in range(workers)]
        for f in futures:
            f.result()
    else:
        fill(0, n)
    return hb, he


def seed_child(rng_seed, *path) -> tuple:
    """Derive a deterministic child seed by appending counters."""
    if isinstance(rng_seed, (tuple, list)):
        return tuple(rng_seed) + tuple(path)
    return (int(rng_seed),) + tuple(path)
