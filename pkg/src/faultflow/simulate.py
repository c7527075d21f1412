"""Synthetic strike-slip deformation and image-pair generation.

Each fault is modelled as a screw dislocation: the displacement is parallel
to the fault trace with magnitude ``(s / pi) * atan(delta / d)``, ``delta``
being the signed distance to the trace and ``d`` the locking depth. The
profile jumps sharply across the trace and flattens to ``+-s/2`` far away.
This stands in for a full elastic simulator.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import (
    ConfigInvalid,
    DisplacementField,
    Raster,
    RangeBucket,
    RegionMask,
    classify_range,
)
from .warp import bilinear_grid, warp_array

MAX_SLIP = 30.0


class Sense(enum.Enum):
    LeftLateral = "left_lateral"
    RightLateral = "right_lateral"


@dataclass(frozen=True)
class FaultSpec:
    """A straight fault through ``(x, y)`` with trace direction ``angle``.

    ``slip`` is the total across-fault offset in pixels. The field does not
    depend on which of the two trace directions ``angle`` names.
    """

    x: float
    y: float
    angle: float
    slip: float
    locking_depth: float = 2.0
    sense: Sense = Sense.RightLateral

    def __post_init__(self):
        if isinstance(self.sense, str):
            object.__setattr__(self, "sense", Sense(self.sense))
        if not self.locking_depth > 0:
            raise ConfigInvalid("locking_depth must be > 0")
        if abs(self.slip) > MAX_SLIP:
            raise ConfigInvalid(f"|slip| must be <= {MAX_SLIP} px")

    @property
    def direction(self):
        return math.cos(self.angle), math.sin(self.angle)

    def signed_distance(self, xx, yy):
        tx, ty = self.direction
        return (xx - self.x) * -ty + (yy - self.y) * tx


@dataclass(frozen=True)
class TextureSpec:
    octaves: int = 5
    base_scale: float = 32.0
    seed: int = 0

    def __post_init__(self):
        if self.octaves < 1:
            raise ConfigInvalid("octaves must be >= 1")
        if not self.base_scale > 0:
            raise ConfigInvalid("base_scale must be > 0")


@dataclass(frozen=True)
class PerturbationSpec:
    """Temporal changes applied to the second image only."""

    gaussian_sigma: float = 0.0
    brightness_gradient: float = 0.0
    patch_count: int = 0
    patch_size: int = 16
    blotch_count: int = 0
    blotch_size: float = 6.0
    blotch_amplitude: float = 0.05

    def __post_init__(self):
        if self.gaussian_sigma < 0 or self.brightness_gradient < 0 or self.blotch_amplitude < 0:
            raise ConfigInvalid("perturbation amplitudes must be >= 0")
        if self.patch_count < 0 or self.blotch_count < 0:
            raise ConfigInvalid("perturbation counts must be >= 0")
        if self.patch_size < 1 or not self.blotch_size > 0:
            raise ConfigInvalid("perturbation sizes must be positive")

    @property
    def active(self) -> bool:
        return bool(self.gaussian_sigma or self.brightness_gradient or self.patch_count or self.blotch_count)


@dataclass(frozen=True)
class SimulationSpec:
    height: int = 256
    width: int = 256
    faults: tuple[FaultSpec, ...] = ()
    texture: TextureSpec = field(default_factory=TextureSpec)
    perturbations: PerturbationSpec = field(default_factory=PerturbationSpec)
    near_fault_halfwidth: float = 10.0
    # debug mode: replace the fault field by a constant (u, v)
    constant_shift: tuple[float, float] | None = None
    expected_bucket: RangeBucket | None = None

    def __post_init__(self):
        object.__setattr__(self, "faults", tuple(self.faults))
        if isinstance(self.expected_bucket, str):
            object.__setattr__(self, "expected_bucket", RangeBucket(self.expected_bucket))
        if self.constant_shift is not None:
            object.__setattr__(self, "constant_shift", tuple(float(c) for c in self.constant_shift))
        if self.height < 2 or self.width < 2:
            raise ConfigInvalid("height and width must be >= 2")
        if not 1 <= len(self.faults) <= 3 and self.constant_shift is None:
            raise ConfigInvalid("a simulation needs 1 to 3 faults")
        if len(self.faults) > 3:
            raise ConfigInvalid("at most 3 faults")
        if not self.near_fault_halfwidth >= 1:
            raise ConfigInvalid("near_fault_halfwidth must be >= 1")


def _pixel_coords(h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return xx, yy


def screw_dislocation_field(spec: FaultSpec, h: int, w: int) -> DisplacementField:
    xx, yy = _pixel_coords(h, w)
    delta = spec.signed_distance(xx, yy)
    sign = 1.0 if spec.sense is Sense.RightLateral else -1.0
    mag = sign * (spec.slip / math.pi) * np.arctan(delta / spec.locking_depth)
    tx, ty = spec.direction
    return DisplacementField(mag * tx, mag * ty)


def near_fault_mask(spec: SimulationSpec) -> RegionMask:
    xx, yy = _pixel_coords(spec.height, spec.width)
    bits = np.zeros((spec.height, spec.width), dtype=bool)
    for f in spec.faults:
        bits |= np.abs(f.signed_distance(xx, yy)) <= spec.near_fault_halfwidth
    return RegionMask(bits)


def make_ground_truth(spec: SimulationSpec) -> tuple[DisplacementField, RegionMask]:
    h, w = spec.height, spec.width
    if spec.constant_shift is not None:
        df = DisplacementField.constant(h, w, *spec.constant_shift)
    else:
        u = np.zeros((h, w))
        v = np.zeros((h, w))
        for f in spec.faults:
            part = screw_dislocation_field(f, h, w)
            u += part.u
            v += part.v
        df = DisplacementField(u, v)
    return df, near_fault_mask(spec)


def _rng(seed, stream):
    # counter-based generator keyed on (seed, stream)
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def make_texture(h: int, w: int, octaves: int, base_scale: float, seed: int) -> Raster:
    """Multi-octave value noise normalized to [0, 1]."""
    if octaves < 1:
        raise ConfigInvalid("octaves must be >= 1")
    return Raster(_value_noise(h, w, octaves, base_scale, _rng(seed, 0)))


def _value_noise(h, w, octaves, base_scale, rng):
    xx, yy = _pixel_coords(h, w)
    total = np.zeros((h, w))
    amp = 1.0
    for o in range(octaves):
        scale = base_scale / 2**o
        ny = int((h - 1) // scale) + 2
        nx = int((w - 1) // scale) + 2
        ctrl = rng.random((ny, nx))
        vals, _ = bilinear_grid(ctrl, xx / scale, yy / scale)
        total += amp * vals
        amp *= 0.5
    lo, hi = total.min(), total.max()
    if hi - lo <= 0:
        return np.zeros((h, w))
    return (total - lo) / (hi - lo)


def perturb(img, spec: PerturbationSpec, texture: TextureSpec, seed: int):
    """Apply the temporal-change models to an intensity array."""
    out = np.array(img, dtype=np.float64)
    h, w = out.shape
    if spec.patch_count:
        rng = _rng(seed, 1)
        fresh = _value_noise(h, w, texture.octaves, texture.base_scale, _rng(seed, 2))
        size = min(spec.patch_size, h, w)
        for _ in range(spec.patch_count):
            y0 = int(rng.integers(0, h - size + 1))
            x0 = int(rng.integers(0, w - size + 1))
            out[y0 : y0 + size, x0 : x0 + size] = fresh[y0 : y0 + size, x0 : x0 + size]
    if spec.blotch_count:
        rng = _rng(seed, 3)
        impulses = np.zeros((h, w))
        ys = rng.integers(0, h, spec.blotch_count)
        xs = rng.integers(0, w, spec.blotch_count)
        amps = rng.uniform(-1.0, 1.0, spec.blotch_count)
        np.add.at(impulses, (ys, xs), amps)
        # unit-peak blobs of std blotch_size, scaled to +-blotch_amplitude
        blobs = gaussian_filter(impulses, spec.blotch_size, mode="constant")
        out += spec.blotch_amplitude * blobs * (2.0 * math.pi * spec.blotch_size**2)
    if spec.brightness_gradient:
        rng = _rng(seed, 4)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        xx, yy = _pixel_coords(h, w)
        ramp = (xx - (w - 1) / 2) * math.cos(phi) + (yy - (h - 1) / 2) * math.sin(phi)
        span = np.ptp(ramp)
        if span > 0:
            out += spec.brightness_gradient * ramp / span
    if spec.gaussian_sigma:
        out += _rng(seed, 5).normal(0.0, spec.gaussian_sigma, (h, w))
    return out


def synthesize_pair(spec: SimulationSpec):
    """Return ``(I1, I2, df_gt, near_fault)``.

    I2 samples I1 at ``(x + u, y + v)``; perturbations then act on I2 only.
    When ``spec.expected_bucket`` is set, the ground truth must land in it.
    """
    df, mask = make_ground_truth(spec)
    if spec.expected_bucket is not None:
        got = classify_range(df)
        if got is not spec.expected_bucket:
            raise ConfigInvalid(
                f"ground truth falls in bucket {got.value}, spec expects {spec.expected_bucket.value}"
            )
    tex = spec.texture
    I1 = make_texture(spec.height, spec.width, tex.octaves, tex.base_scale, tex.seed)
    i2, _ = warp_array(I1.data, df.u, df.v)
    if spec.perturbations.active:
        i2 = perturb(i2, spec.perturbations, tex, tex.seed)
    return I1, Raster(i2), df, mask
