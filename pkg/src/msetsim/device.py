"""Device descriptions: materials, doped regions, contacts and the stock
two-drain / three-drain split-drain geometries.

Lengths are in micrometers, dopings in cm^-3 (positive = net donors).
All types are immutable; builders return fully scaled specs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .constants import EPS_0, Q_E, thermal_voltage

SEMICONDUCTOR = "semiconductor"
INSULATOR = "insulator"

_SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class MaterialParams:
    """Bulk material constants shared by every region of a device.

    Defaults are standard silicon/oxide values at 300 K with constant
    (doping-independent) mobilities.
    """

    epsilon_r_semiconductor: float = 11.7
    epsilon_r_insulator: float = 3.9
    n_i: float = 1.08e10          # intrinsic density, cm^-3
    mu_n: float = 1417.0          # electron mobility, cm^2/(V s)
    mu_p: float = 470.0           # hole mobility, cm^2/(V s)
    temperature: float = 300.0    # K

    def __post_init__(self):
        for name in ("epsilon_r_semiconductor", "epsilon_r_insulator",
                     "n_i", "mu_n", "mu_p", "temperature"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"MaterialParams.{name} must be positive")

    @property
    def thermal_voltage(self):
        """kT/q in volts."""
        return thermal_voltage(self.temperature)


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle with a material kind and a net doping."""

    name: str
    x0: float
    x1: float
    y0: float
    y1: float
    kind: str = SEMICONDUCTOR
    net_doping: float = 0.0       # cm^-3, donors minus acceptors

    def __post_init__(self):
        if self.kind not in (SEMICONDUCTOR, INSULATOR):
            raise ValueError(f"region {self.name!r}: unknown kind {self.kind!r}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    def contains(self, x, y):
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def scaled(self, s):
        return replace(self, x0=self.x0 * s, x1=self.x1 * s,
                       y0=self.y0 * s, y1=self.y1 * s)


@dataclass(frozen=True)
class Contact:
    """Ohmic contact on a span of the device boundary.

    ``side`` names the boundary edge, ``span`` is the (lo, hi) coordinate
    interval along that edge (x for bottom/top, y for left/right).
    """

    name: str
    side: str
    span: tuple[float, float]
    kind: str = "ohmic"

    def __post_init__(self):
        if self.side not in _SIDES:
            raise ValueError(f"contact {self.name!r}: side must be one of {_SIDES}")
        if not self.span[0] < self.span[1]:
            raise ValueError(f"contact {self.name!r}: empty span {self.span}")

    def scaled(self, s):
        return replace(self, span=(self.span[0] * s, self.span[1] * s))


@dataclass(frozen=True)
class DeviceSpec:
    """Complete 2D device description: regions tile a rectangle, contacts
    sit on its boundary.  ``depth`` extrudes the third dimension so terminal
    currents come out in amperes."""

    regions: tuple[Region, ...]
    contacts: tuple[Contact, ...]
    material: MaterialParams = field(default_factory=MaterialParams)
    scale: float = 1.0
    depth: float = 1.0            # um

    @property
    def bounds(self):
        """(x0, x1, y0, y1) of the bounding rectangle."""
        return (min(r.x0 for r in self.regions), max(r.x1 for r in self.regions),
                min(r.y0 for r in self.regions), max(r.y1 for r in self.regions))

    @property
    def contact_names(self):
        return tuple(c.name for c in self.contacts)


def zero_bias_depletion_width(doping_light, doping_heavy, material):
    """One-sided depletion width (um) of an abrupt junction at zero bias,
    measured into the lightly doped side."""
    vt = material.thermal_voltage
    v_bi = vt * math.log(abs(doping_light) * abs(doping_heavy) / material.n_i**2)
    eps = material.epsilon_r_semiconductor * EPS_0
    n_m3 = abs(doping_light) * 1e6
    return math.sqrt(2.0 * eps * v_bi / (Q_E * n_m3)) * 1e6


@dataclass(frozen=True)
class TwoDrainGeometry:
    """Default proportions of the two-drain device (um, at scale 1).

    The device is two p+ junction gates on the flanks, an n bulk channel
    between them, a full-width n+ source strip at the bottom and two n+
    drains at the top separated by an oxide buffer.  The channel steers to
    the drain on the grounded-gate side; reverse-biasing both gates pinches
    the gap between the gates and turns the device off.
    """

    gate_width: float = 0.5
    stem_gap: float = 0.4         # gate-to-gate spacing
    gate_y0: float = 0.45
    gate_y1: float = 0.90
    feed_gap: float = 0.14        # gate top to drain bottom
    drain_width: float = 0.35
    buffer_width: float = 0.10
    source_height: float = 0.15
    height: float = 1.20

    @property
    def width(self):
        return 2.0 * self.gate_width + self.stem_gap


@dataclass(frozen=True)
class ThreeDrainGeometry:
    """Default proportions of the three-drain device (um, at scale 1).

    The two lateral drains sit directly above the gates behind short n(1e17)
    feed gaps, which deplete at moderate reverse bias.  The middle drain is
    fed through a lightly doped block between the buffers; its much larger
    depletion width keeps a central column alive at moderate bias and closes
    it only when both gates are strongly reverse biased.
    """

    gate_width: float = 1.0
    stem_gap: float = 1.0
    gate_y0: float = 0.45
    gate_y1: float = 0.95
    feed_gap: float = 0.15        # gate top to lateral-drain bottom
    drain_width: float = 0.35
    buffer_width: float = 0.10
    nminus_clearance: float = 0.30   # bulk band between feed gap and N- block
    nminus_height: float = 0.20
    middle_drain_height: float = 0.15
    source_height: float = 0.15
    nminus_doping: float = 1e16   # cm^-3

    @property
    def width(self):
        return 2.0 * self.gate_width + self.stem_gap

    @property
    def height(self):
        return (self.gate_y1 + self.feed_gap + self.nminus_clearance
                + self.nminus_height + self.middle_drain_height)


BULK_DOPING = 1e17        # cm^-3, n-type channel
CONTACT_DOPING = 5e19     # cm^-3, n+ source/drains; gates are -CONTACT_DOPING


def build_two_drain_spec(scale=1.0, geometry=None, material=None, depth=1.0):
    """Two-drain device: contacts {source, d1, d2, jg1, jg2}.

    Every length scales linearly with ``scale``; dopings do not scale.
    """
    if not scale > 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    g = geometry or TwoDrainGeometry()
    mat = material or MaterialParams()

    w = g.width
    xg1 = g.gate_width                    # gate1 right edge
    xg2 = g.gate_width + g.stem_gap       # gate2 left edge
    y_drain = g.gate_y1 + g.feed_gap
    xc = w / 2.0
    d1x0 = xc - g.buffer_width / 2.0 - g.drain_width
    d1x1 = xc - g.buffer_width / 2.0
    d2x0 = xc + g.buffer_width / 2.0
    d2x1 = xc + g.buffer_width / 2.0 + g.drain_width

    regions = (
        Region("source_n+", 0.0, w, 0.0, g.source_height, net_doping=CONTACT_DOPING),
        Region("bulk_lower", 0.0, w, g.source_height, g.gate_y0, net_doping=BULK_DOPING),
        Region("gate1", 0.0, xg1, g.gate_y0, g.gate_y1, net_doping=-CONTACT_DOPING),
        Region("stem", xg1, xg2, g.gate_y0, g.gate_y1, net_doping=BULK_DOPING),
        Region("gate2", xg2, w, g.gate_y0, g.gate_y1, net_doping=-CONTACT_DOPING),
        Region("bulk_feed", 0.0, w, g.gate_y1, y_drain, net_doping=BULK_DOPING),
        Region("bulk_top_l", 0.0, d1x0, y_drain, g.height, net_doping=BULK_DOPING),
        Region("d1_n+", d1x0, d1x1, y_drain, g.height, net_doping=CONTACT_DOPING),
        Region("buffer", d1x1, d2x0, y_drain, g.height, kind=INSULATOR),
        Region("d2_n+", d2x0, d2x1, y_drain, g.height, net_doping=CONTACT_DOPING),
        Region("bulk_top_r", d2x1, w, y_drain, g.height, net_doping=BULK_DOPING),
    )
    contacts = (
        Contact("source", "bottom", (0.0, w)),
        Contact("d1", "top", (d1x0, d1x1)),
        Contact("d2", "top", (d2x0, d2x1)),
        Contact("jg1", "left", (g.gate_y0, g.gate_y1)),
        Contact("jg2", "right", (g.gate_y0, g.gate_y1)),
    )
    return DeviceSpec(
        regions=tuple(r.scaled(scale) for r in regions),
        contacts=tuple(c.scaled(scale) for c in contacts),
        material=mat, scale=scale, depth=depth,
    )


def build_three_drain_spec(scale=1.0, geometry=None, material=None, depth=1.0):
    """Three-drain device: contacts {source, d1, d2, d3, jg1, jg2} with a
    lightly doped block under the middle drain."""
    if not scale > 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    g = geometry or ThreeDrainGeometry()
    mat = material or MaterialParams()

    w = g.width
    h = g.height
    xg1 = g.gate_width
    xg2 = g.gate_width + g.stem_gap
    y_feed = g.gate_y1 + g.feed_gap          # lateral-drain bottom
    y_nm = y_feed + g.nminus_clearance       # N- block bottom
    y_d2 = y_nm + g.nminus_height            # middle-drain bottom
    xc = w / 2.0
    # lateral drains sit against the buffers, which sit against the gate
    # inner edges; middle drain is centered on top of the N- block
    b1x0, b1x1 = xg1 - g.buffer_width, xg1
    b2x0, b2x1 = xg2, xg2 + g.buffer_width
    d1x0, d1x1 = b1x0 - g.drain_width, b1x0
    d3x0, d3x1 = b2x1, b2x1 + g.drain_width
    d2x0, d2x1 = xc - g.drain_width / 2.0, xc + g.drain_width / 2.0
    nm = g.nminus_doping

    regions = (
        Region("source_n+", 0.0, w, 0.0, g.source_height, net_doping=CONTACT_DOPING),
        Region("bulk_lower", 0.0, w, g.source_height, g.gate_y0, net_doping=BULK_DOPING),
        Region("gate1", 0.0, xg1, g.gate_y0, g.gate_y1, net_doping=-CONTACT_DOPING),
        Region("stem", xg1, xg2, g.gate_y0, g.gate_y1, net_doping=BULK_DOPING),
        Region("gate2", xg2, w, g.gate_y0, g.gate_y1, net_doping=-CONTACT_DOPING),
        Region("bulk_feed", 0.0, w, g.gate_y1, y_feed, net_doping=BULK_DOPING),
        # band between the lateral-drain bottoms and the N- block
        Region("bulk_side_l", 0.0, d1x0, y_feed, h, net_doping=BULK_DOPING),
        Region("d1_n+", d1x0, d1x1, y_feed, h, net_doping=CONTACT_DOPING),
        Region("buffer1", b1x0, b1x1, y_feed, h, kind=INSULATOR),
        Region("mid_clearance", xg1, xg2, y_feed, y_nm, net_doping=BULK_DOPING),
        Region("nminus", xg1, xg2, y_nm, y_d2, net_doping=nm),
        Region("nminus_shoulder_l", xg1, d2x0, y_d2, h, net_doping=nm),
        Region("d2_n+", d2x0, d2x1, y_d2, h, net_doping=CONTACT_DOPING),
        Region("nminus_shoulder_r", d2x1, xg2, y_d2, h, net_doping=nm),
        Region("buffer2", b2x0, b2x1, y_feed, h, kind=INSULATOR),
        Region("d3_n+", d3x0, d3x1, y_feed, h, net_doping=CONTACT_DOPING),
        Region("bulk_side_r", d3x1, w, y_feed, h, net_doping=BULK_DOPING),
    )
    contacts = (
        Contact("source", "bottom", (0.0, w)),
        Contact("d1", "top", (d1x0, d1x1)),
        Contact("d2", "top", (d2x0, d2x1)),
        Contact("d3", "top", (d3x0, d3x1)),
        Contact("jg1", "left", (g.gate_y0, g.gate_y1)),
        Contact("jg2", "right", (g.gate_y0, g.gate_y1)),
    )
    return DeviceSpec(
        regions=tuple(r.scaled(scale) for r in regions),
        contacts=tuple(c.scaled(scale) for c in contacts),
        material=mat, scale=scale, depth=depth,
    )


def _overlap_1d(a0, a1, b0, b1):
    return min(a1, b1) - max(a0, b0)


def validate_spec(spec):
    """Check a DeviceSpec for geometric and electrical consistency.

    Returns a list of violation messages; an empty list means the spec is
    valid.  Checks: positive rectangle extents, pairwise region overlap,
    complete tiling of the bounding rectangle, contacts on the boundary
    touching exactly one semiconductor region, zero doping in insulators,
    unique contact names and a positive scale.
    """
    report = []
    if not spec.scale > 0.0:
        report.append(f"spec: scale must be positive, got {spec.scale}")
    if not spec.depth > 0.0:
        report.append(f"spec: depth must be positive, got {spec.depth}")
    if not spec.regions:
        report.append("spec: no regions")
        return report

    for r in spec.regions:
        if not (r.x0 < r.x1 and r.y0 < r.y1):
            report.append(f"region {r.name!r}: empty or inverted bounds")
        if r.kind == INSULATOR and r.net_doping != 0.0:
            report.append(f"region {r.name!r}: insulator with nonzero doping")

    regs = [r for r in spec.regions if r.x0 < r.x1 and r.y0 < r.y1]
    for i, a in enumerate(regs):
        for b in regs[i + 1:]:
            ox = _overlap_1d(a.x0, a.x1, b.x0, b.x1)
            oy = _overlap_1d(a.y0, a.y1, b.y0, b.y1)
            if ox > 1e-12 and oy > 1e-12:
                report.append(f"regions {a.name!r} and {b.name!r} overlap")

    x0, x1, y0, y1 = spec.bounds
    bbox_area = (x1 - x0) * (y1 - y0)
    area = sum(r.width * r.height for r in regs)
    if bbox_area > 0 and abs(area - bbox_area) > 1e-9 * bbox_area:
        report.append(
            f"regions do not tile the bounding rectangle: "
            f"covered {area:.9g} of {bbox_area:.9g} um^2")

    names = [c.name for c in spec.contacts]
    for name in sorted(set(n for n in names if names.count(n) > 1)):
        report.append(f"contact name {name!r} used more than once")

    for c in spec.contacts:
        lo, hi = c.span
        if c.side in ("bottom", "top"):
            edge = y0 if c.side == "bottom" else y1
            ok_span = x0 - 1e-12 <= lo and hi <= x1 + 1e-12
            touching = [r for r in regs
                        if abs((r.y0 if c.side == "bottom" else r.y1) - edge) < 1e-12
                        and _overlap_1d(lo, hi, r.x0, r.x1) > 1e-12]
        else:
            edge = x0 if c.side == "left" else x1
            ok_span = y0 - 1e-12 <= lo and hi <= y1 + 1e-12
            touching = [r for r in regs
                        if abs((r.x0 if c.side == "left" else r.x1) - edge) < 1e-12
                        and _overlap_1d(lo, hi, r.y0, r.y1) > 1e-12]
        if not ok_span:
            report.append(f"contact {c.name!r}: span {c.span} outside the device boundary")
            continue
        if len(touching) != 1:
            report.append(
                f"contact {c.name!r}: touches {len(touching)} regions, expected exactly one")
        elif touching[0].kind != SEMICONDUCTOR:
            report.append(f"contact {c.name!r}: lies on insulator region {touching[0].name!r}")

    return report
