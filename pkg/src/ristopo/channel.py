"""Vehicle-to-vehicle channels with a passive reflecting surface.

Each coefficient is ``sqrt(path_gain) * fading``. Path gain follows a
log-distance law with a reference loss at 1 m; the exponent and fading type
depend on whether the straight segment between the endpoints crosses an
obstruction box. The surface is a planar grid of half-wavelength elements, so
each element sees its own line-of-sight phase.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LIGHT_SPEED = 299_792_458.0
UNIT_TOL = 1e-9
MAX_ELEMENTS = 1024


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    bandwidth: float = 3e6
    tx_power_dbm: float = 30.0
    noise_power_dbm: float = -90.0
    rice_factor: float = 10.0
    los_exponent: float = 1.5
    nlos_exponent: float = 4.0
    ref_loss_db: float = 30.0
    carrier_hz: float = 5.9e9

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.rice_factor < 0:
            raise ValueError("rice_factor must be >= 0")
        if self.los_exponent <= 0 or self.nlos_exponent <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")

    @property
    def wavelength(self) -> float:
        return LIGHT_SPEED / self.carrier_hz

    @property
    def snr_scale(self) -> float:
        """p / sigma^2 in linear units."""
        return dbm_to_watt(self.tx_power_dbm) / dbm_to_watt(self.noise_power_dbm)

    def path_gain_db(self, distance: float, obstructed: bool) -> float:
        exp = self.nlos_exponent if obstructed else self.los_exponent
        return -self.ref_loss_db - 10.0 * exp * math.log10(distance)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"box needs lo < hi in 3-D, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def blocks(self, a, b) -> bool:
        """Slab test: does the open segment a->b pass through the box interior?"""
        a = np.asarray(a, float)
        d = np.asarray(b, float) - a
        t0, t1 = 0.0, 1.0
        for k in range(3):
            lo, hi = self.lo[k], self.hi[k]
            if abs(d[k]) < 1e-15:
                if not lo < a[k] < hi:
                    return False
                continue
            u, v = (lo - a[k]) / d[k], (hi - a[k]) / d[k]
            if u > v:
                u, v = v, u
            t0, t1 = max(t0, u), min(t1, v)
            if t0 >= t1:
                return False
        return True


@dataclass(frozen=True)
class Geometry:
    car_positions: tuple
    ris_position: tuple
    obstructions: tuple = ()
    ris_elements: int = 16

    def __post_init__(self):
        cars = np.asarray(self.car_positions, dtype=float)
        if cars.ndim != 2 or cars.shape[1] != 3:
            raise ValueError("car_positions must be a list of 3-D points")
        ris = np.asarray(self.ris_position, dtype=float)
        if ris.shape != (3,):
            raise ValueError("ris_position must be a 3-D point")
        if not (np.all(np.isfinite(cars)) and np.all(np.isfinite(ris))):
            raise ValueError("positions must be finite")
        if not 1 <= int(self.ris_elements) <= MAX_ELEMENTS:
            raise ValueError(f"ris_elements must be in [1, {MAX_ELEMENTS}]")
        boxes = tuple(b if isinstance(b, Box) else Box(*b) for b in self.obstructions)
        object.__setattr__(self, "car_positions", tuple(map(tuple, cars.tolist())))
        object.__setattr__(self, "ris_position", tuple(ris.tolist()))
        object.__setattr__(self, "obstructions", boxes)
        object.__setattr__(self, "ris_elements", int(self.ris_elements))

    @property
    def n_cars(self) -> int:
        return len(self.car_positions)

    def obstructed(self, a, b) -> bool:
        return any(box.blocks(a, b) for box in self.obstructions)

    def element_positions(self, wavelength: float) -> np.ndarray:
        """Half-wavelength grid in the vertical x-z plane, centred on the surface."""
        m = self.ris_elements
        cols = int(math.ceil(math.sqrt(m)))
        idx = np.arange(m)
        r, c = idx // cols, idx % cols
        rows = int(math.ceil(m / cols))
        step = wavelength / 2
        off = np.stack([(c - (cols - 1) / 2) * step, np.zeros(m), (r - (rows - 1) / 2) * step], axis=1)
        return np.asarray(self.ris_position) + off


def intersection_geometry(ris_elements: int = 16) -> Geometry:
    """Eight cars on four streets around a block of buildings.

    Buildings sit on the four corners of a crossroads, so most car-to-car
    paths are blocked, while the surface mounted high above the crossing
    sees every car.
    """
    cars = [
        (-120.0, -3.0, 1.5), (-20.0, 3.0, 1.5),  # west arm
        (3.0, 40.0, 1.5), (-3.0, 18.0, 1.5),     # north arm
        (25.0, -3.0, 1.5), (50.0, 3.0, 1.5),     # east arm
        (3.0, -30.0, 1.5), (-3.0, -55.0, 1.5),   # south arm
    ]
    h = 30.0
    boxes = [
        Box((-80.0, 8.0, 0.0), (-8.0, 80.0, h)),
        Box((8.0, 8.0, 0.0), (80.0, 80.0, h)),
        Box((-80.0, -80.0, 0.0), (-8.0, -8.0, h)),
        Box((8.0, -80.0, 0.0), (80.0, -8.0, h)),
        # parked trucks / kiosks splitting each arm
        Box((-35.0, -6.0, 0.0), (-30.0, 6.0, 4.0)),
        Box((-6.0, 26.0, 0.0), (6.0, 31.0, 4.0)),
        Box((35.0, -6.0, 0.0), (40.0, 6.0, 4.0)),
        Box((-6.0, -45.0, 0.0), (6.0, -40.0, 4.0)),
        Box((-5.0, -5.0, 0.0), (5.0, 5.0, 6.0)),
    ]
    return Geometry(tuple(cars), (0.0, 0.0, 35.0), tuple(boxes), ris_elements)


@dataclass
class ChannelSet:
    direct: np.ndarray      # (n, n) complex, symmetric, zero diagonal
    car_to_ris: np.ndarray  # (n, M)
    ris_to_car: np.ndarray  # (n, M)

    def __post_init__(self):
        self.direct = np.asarray(self.direct, dtype=complex)
        self.car_to_ris = np.atleast_2d(np.asarray(self.car_to_ris, dtype=complex))
        self.ris_to_car = np.atleast_2d(np.asarray(self.ris_to_car, dtype=complex))
        n = self.direct.shape[0]
        if self.direct.shape != (n, n):
            raise ValueError("direct must be square")
        if self.car_to_ris.shape != self.ris_to_car.shape or self.car_to_ris.shape[0] != n:
            raise ValueError("car_to_ris and ris_to_car must both be (n_cars, M)")
        for arr in (self.direct, self.car_to_ris, self.ris_to_car):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel coefficients must be finite")

    @property
    def n_cars(self) -> int:
        return self.direct.shape[0]

    @property
    def elements(self) -> int:
        return self.car_to_ris.shape[1]

    def cascade(self, link) -> np.ndarray:
        """Per-element cascade ``conj(h_RIS,m) * h_i,RIS`` so gain = direct + cascade @ phi."""
        i, m = link
        return np.conj(self.ris_to_car[m]) * self.car_to_ris[i]

    def link_matrix(self, links: Sequence) -> tuple[np.ndarray, np.ndarray]:
        links = list(links)
        for i, m in links:
            self._check(i, m)
        h = np.array([self.direct[i, m] for i, m in links], dtype=complex)
        a = np.array([self.cascade(l) for l in links], dtype=complex).reshape(len(links), self.elements)
        return h, a

    def _check(self, i, m):
        n = self.n_cars
        if not (0 <= i < n and 0 <= m < n) or i == m:
            raise IndexError(f"invalid link ({i}, {m}) for {n} cars")

    def equals(self, other: "ChannelSet") -> bool:
        return (np.array_equal(self.direct, other.direct)
                and np.array_equal(self.car_to_ris, other.car_to_ris)
                and np.array_equal(self.ris_to_car, other.ris_to_car))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["link_id", "element_id", "real", "imag"])
            n = self.n_cars
            for i in range(n):
                for m in range(i + 1, n):
                    z = self.direct[i, m]
                    w.writerow([f"direct:{i}-{m}", 0, repr(float(z.real)), repr(float(z.imag))])
            for name, arr in (("car_to_ris", self.car_to_ris), ("ris_to_car", self.ris_to_car)):
                for i, row in enumerate(arr):
                    for k, z in enumerate(row):
                        w.writerow([f"{name}:{i}", k, repr(float(z.real)), repr(float(z.imag))])

    @classmethod
    def read_csv(cls, path) -> "ChannelSet":
        direct, c2r, r2c = {}, {}, {}
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if header != ["link_id", "element_id", "real", "imag"]:
                raise ValueError(f"{path}: unexpected header {header}")
            for lineno, row in enumerate(rows, start=2):
                try:
                    kind, key = row[0].split(":")
                    z = complex(float(row[2]), float(row[3]))
                    k = int(row[1])
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed row {row}") from exc
                if kind == "direct":
                    i, m = map(int, key.split("-"))
                    direct[(i, m)] = z
                elif kind in ("car_to_ris", "ris_to_car"):
                    (c2r if kind == "car_to_ris" else r2c)[(int(key), k)] = z
                else:
                    raise ValueError(f"{path}:{lineno}: unknown link kind {kind!r}")
        n = 1 + max(i for i, _ in c2r)
        M = 1 + max(k for _, k in c2r)
        d = np.zeros((n, n), complex)
        for (i, m), z in direct.items():
            d[i, m] = d[m, i] = z
        a = np.zeros((n, M), complex)
        b = np.zeros((n, M), complex)
        for (i, k), z in c2r.items():
            a[i, k] = z
        for (i, k), z in r2c.items():
            b[i, k] = z
        return cls(d, a, b)


@dataclass(frozen=True)
class PhaseShiftVector:
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=complex)).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("phase vector must be a non-empty 1-D array")
        err = np.max(np.abs(np.abs(c) - 1.0))
        if err > UNIT_TOL:
            raise ValueError(f"phase coefficients must have modulus 1 (max error {err:.3g})")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def __len__(self):
        return self.coefficients.size

    @classmethod
    def ones(cls, m: int) -> "PhaseShiftVector":
        return cls(np.ones(m, complex))

    @classmethod
    def from_angles(cls, angles) -> "PhaseShiftVector":
        return cls(np.exp(1j * np.asarray(angles, dtype=float)))

    @classmethod
    def project(cls, raw) -> "PhaseShiftVector":
        """Scale each entry to modulus 1 keeping its phase; zero maps to 1."""
        return cls(project_unit(raw))

    @property
    def angles(self) -> np.ndarray:
        return np.angle(self.coefficients)


def project_unit(raw) -> np.ndarray:
    z = np.asarray(raw, dtype=complex)
    mag = np.abs(z)
    out = np.ones_like(z)
    nz = mag > 0
    out[nz] = z[nz] / mag[nz]
    # renormalise once more so the modulus sits at 1 to the last ulp or so
    return out / np.abs(out)


def _fading(rng, k_factor: float, los_phase, size) -> np.ndarray:
    scatter = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)
    if k_factor == 0:
        return scatter
    los = np.exp(1j * np.asarray(los_phase))
    return math.sqrt(k_factor / (k_factor + 1)) * los + math.sqrt(1 / (k_factor + 1)) * scatter


def sample_channels(geom: Geometry, params: ChannelParams, seed) -> ChannelSet:
    rng = np.random.default_rng(seed)
    cars = np.asarray(geom.car_positions)
    n = geom.n_cars
    M = geom.ris_elements
    lam = params.wavelength
    elems = geom.element_positions(lam)
    ris = np.asarray(geom.ris_position)

    direct = np.zeros((n, n), complex)
    for i in range(n):
        for m in range(i + 1, n):
            d = float(np.linalg.norm(cars[i] - cars[m]))
            if d == 0:
                raise ValueError(f"cars {i} and {m} coincide")
            blocked = geom.obstructed(cars[i], cars[m])
            amp = 10 ** (params.path_gain_db(d, blocked) / 20)
            k = 0.0 if blocked else params.rice_factor
            z = amp * _fading(rng, k, -2 * math.pi * d / lam, 1)[0]
            direct[i, m] = direct[m, i] = z

    hops = []
    for _ in range(2):  # car->surface, then surface->car
        out = np.zeros((n, M), complex)
        for i in range(n):
            d = float(np.linalg.norm(cars[i] - ris))
            if d == 0:
                raise ValueError(f"car {i} coincides with the surface")
            blocked = geom.obstructed(cars[i], ris)
            amp = 10 ** (params.path_gain_db(d, blocked) / 20)
            k = 0.0 if blocked else params.rice_factor
            per_elem = np.linalg.norm(elems - cars[i], axis=1)
            out[i] = amp * _fading(rng, k, -2 * math.pi * per_elem / lam, M)
        hops.append(out)
    return ChannelSet(direct, hops[0], hops[1])


def effective_gain(ch: ChannelSet, phi: PhaseShiftVector, link) -> complex:
    i, m = link
    ch._check(i, m)
    if len(phi) != ch.elements:
        raise ValueError(f"phase vector length {len(phi)} != {ch.elements} elements")
    return complex(ch.direct[i, m] + np.sum(ch.cascade(link) * phi.coefficients))


def rate_from_gain(gain, params: ChannelParams):
    g2 = np.abs(gain) ** 2
    return params.bandwidth * np.log2(1.0 + params.snr_scale * g2)


def link_rate(ch: ChannelSet, phi: PhaseShiftVector, link, params: ChannelParams) -> float:
    return float(rate_from_gain(effective_gain(ch, phi, link), params))


@dataclass(frozen=True)
class PhaseSolution:
    phase: PhaseShiftVector
    residuals: dict
    unconstrained: np.ndarray


def deconstructive_phase(ch: ChannelSet, link) -> PhaseSolution:
    """Scalar cancellation: phi = -h_direct / cascade, then projected to |phi| = 1."""
    if ch.elements != 1:
        raise ValueError("closed-form cancellation needs a single element; use direct_control")
    i, m = link
    ch._check(i, m)
    a = complex(ch.cascade(link)[0])
    h = complex(ch.direct[i, m])
    if a == 0:
        raise ValueError(f"link {link}: no reflected path to cancel with")
    if h == 0:
        raise ValueError(f"link {link}: direct path is zero, a single unit element cannot null the cascade")
    raw = -h / a
    phi = PhaseShiftVector.project([raw])
    return PhaseSolution(phi, {tuple(link): abs(h + a * phi.coefficients[0])}, np.array([raw]))


def direct_control(ch: ChannelSet, plan) -> PhaseSolution:
    """Equal-split element-wise solve for the first deconstruction target.

    Each usable element takes 1/M' of -h, i.e. X_k = -h / (M' J_k B_k); the
    result is projected to unit modulus. Constructive targets are ignored.
    """
    targets = list(plan.deconstruct)
    if not targets:
        raise ValueError("plan has no link to deconstruct")
    M = ch.elements
    first = targets[0]
    h = complex(ch.direct[first[0], first[1]])
    jb = ch.cascade(first)
    usable = jb != 0
    if not usable.any():
        raise ValueError(f"link {first}: every element has a zero cascade")
    raw = np.ones(M, complex)
    raw[usable] = -h / (usable.sum() * jb[usable])
    phi = PhaseShiftVector.project(raw)
    residuals = {tuple(l): abs(effective_gain(ch, phi, l)) for l in targets}
    return PhaseSolution(phi, residuals, raw)
