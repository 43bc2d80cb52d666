"""Synthetic car-following scenario generator and frame renderer.

Stands in for a real driving dataset at desk scale. The ego vehicle
follows an (optional) lead vehicle under the Intelligent Driver Model

    a = a_max * [1 - (v/v0)^delta - (s*/s)^2],
    s* = s0 + v*T + v*dv / (2*sqrt(a_max*b)),

integrated at the frame period with velocities clamped at zero. The lead
vehicle drives a sinusoid-plus-noise speed profile.

Recorded kinematics mimic a measurement chain: the ego vehicle knows its
own velocity exactly, while every front-vehicle field (relative distance,
front velocity, and the front acceleration derived from consecutive noisy
velocities) carries seeded Gaussian measurement noise. The camera image,
by contrast, is rendered from the *true* gap and lateral offset — so the
image and the kinematic features are complementary, not redundant.

Velocities are quantized to multiples of 2^-20 m/s before recording; the
per-frame acceleration targets (velocity differences) then telescope over
a segment bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DataError
from .features import segment_feature_vectors
from .records import FrameRecord, Segment
from .tensor import Rng, Tensor

__all__ = ["ScenarioConfig", "generate_synthetic_segment", "render_frame_image",
           "DatasetStats", "dataset_stats"]

_QUANTUM = 2.0 ** -20

# renderer palette and geometry
_SKY = 0.8
_ROAD = 0.3
_LANE = 0.95
_CAR = 0.1
_NEAR_GAP_M = 5.0     # gap that puts the car's bottom edge at the image bottom
_LATERAL_GAIN = 160.0  # px offset per unit of lateral_offset/gap


@dataclass
class ScenarioConfig:
    """Physical and rendering parameters for one synthetic segment."""

    duration_s: float = 20.0
    frame_rate_hz: int = 10
    lead_probability: float = 0.8
    # Intelligent Driver Model
    desired_speed: float = 15.0   # v0 (m/s)
    time_headway: float = 1.5     # T (s)
    min_gap: float = 2.0          # s0 (m)
    max_accel: float = 1.5        # a_max (m/s^2)
    comfort_decel: float = 2.0    # b (m/s^2)
    accel_exponent: float = 4.0   # delta
    # lead-vehicle speed profile
    lead_base_speed: float = 11.0
    lead_sin_amplitude: float = 2.5
    lead_sin_period_s: float = 7.0
    lead_noise_sigma: float = 0.15
    # measurement noise on recorded front-vehicle fields
    distance_noise_sigma: float = 0.6
    velocity_noise_sigma: float = 0.35
    # ego lateral dynamics (slowly decaying random walk)
    lateral_accel_sigma: float = 0.02
    # rendering
    image_h: int = 64
    image_w: int = 64
    render_width_gain: float = 320.0
    render_noise_amplitude: float = 0.02

    def __post_init__(self):
        for name in ("duration_s", "frame_rate_hz", "desired_speed", "time_headway",
                     "min_gap", "max_accel", "comfort_decel", "accel_exponent",
                     "lead_base_speed", "lead_sin_period_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lead_sin_amplitude", "lead_noise_sigma", "distance_noise_sigma",
                     "velocity_noise_sigma", "lateral_accel_sigma",
                     "render_width_gain", "render_noise_amplitude"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 <= self.lead_probability <= 1.0:
            raise ConfigError(f"lead_probability must be in [0,1], got {self.lead_probability}")
        for name in ("image_h", "image_w"):
            v = getattr(self, name)
            if v <= 0 or v % 2:
                raise ConfigError(f"{name} must be positive and even, got {v}")
        if round(self.duration_s * self.frame_rate_hz) < 2:
            raise ConfigError("duration too short: a segment needs at least 2 frames")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
        return cls(**d)


def _quantize(v: float) -> float:
    """Snap to the 2^-20 grid so velocity differences are exact in float64."""
    return math.floor(v / _QUANTUM + 0.5) * _QUANTUM


def _idm_accel(cfg: ScenarioConfig, v: float, gap: float, v_lead: float,
               lead_present: bool) -> float:
    free = (v / cfg.desired_speed) ** cfg.accel_exponent
    if not lead_present:
        return cfg.max_accel * (1.0 - free)
    dv = v - v_lead
    s_star = cfg.min_gap + v * cfg.time_headway + \
        v * dv / (2.0 * math.sqrt(cfg.max_accel * cfg.comfort_decel))
    return cfg.max_accel * (1.0 - free - (s_star / gap) ** 2)


def generate_synthetic_segment(cfg: ScenarioConfig, seed: int) -> Segment:
    """One deterministic segment; the seed doubles as the segment id."""
    n = round(cfg.duration_s * cfg.frame_rate_hz)
    dt = 1.0 / cfg.frame_rate_hz
    root = Rng(seed)
    dyn = root.spawn("dynamics")
    lat = root.spawn("lateral")
    meas = root.spawn("measure")
    rend = root.spawn("render")

    lead_present = bool(dyn.next_double(1)[0] < cfg.lead_probability)
    v_av = _quantize(float(dyn.uniform((1,), 0.3, 0.8).item()) * cfg.desired_speed)
    v_lat = 0.0
    gap = float(dyn.uniform((1,), 15.0, 40.0).item())
    phase = float(dyn.uniform((1,), 0.0, 2.0 * math.pi).item())
    lat_offset = float(dyn.uniform((1,), -1.0, 1.0).item())
    omega = 2.0 * math.pi / cfg.lead_sin_period_s

    def lead_speed(k: int) -> float:
        base = cfg.lead_base_speed + cfg.lead_sin_amplitude * math.sin(omega * k * dt + phase)
        if cfg.lead_noise_sigma > 0:
            base += float(dyn.normal((1,), 0.0, cfg.lead_noise_sigma).item())
        return max(0.0, base)

    v_lead = lead_speed(0) if lead_present else 0.0
    prev_vf_meas = None
    frames = []
    for k in range(n):
        if lead_present and gap <= 0.0:
            raise DataError(f"generated scenario collided at frame {k} (seed {seed})")
        if lead_present:
            noise_d = meas.normal((2,), 0.0, cfg.distance_noise_sigma).data \
                if cfg.distance_noise_sigma > 0 else np.zeros(2)
            noise_v = meas.normal((3,), 0.0, cfg.velocity_noise_sigma).data \
                if cfg.velocity_noise_sigma > 0 else np.zeros(3)
            vf_meas = (v_lead + noise_v[0], noise_v[1], noise_v[2])
            accel_meas = (0.0, 0.0, 0.0) if prev_vf_meas is None else tuple(
                a - b for a, b in zip(vf_meas, prev_vf_meas))
            prev_vf_meas = vf_meas
            rel = (gap + noise_d[0], lat_offset + noise_d[1])
            image = render_frame_image(gap, lat_offset, cfg, rng=rend.spawn(f"frame{k}"))
        else:
            vf_meas = (0.0, 0.0, 0.0)
            accel_meas = (0.0, 0.0, 0.0)
            rel = (0.0, 0.0)
            image = render_frame_image(None, 0.0, cfg, rng=rend.spawn(f"frame{k}"))
        frames.append(FrameRecord(
            frame_index=k,
            av_velocity=(v_av, v_lat, 0.0),
            front_present=lead_present,
            front_velocity=vf_meas,
            front_accel=accel_meas,
            rel_distance=rel,
            image=image,
        ))
        # advance the true state
        a = _idm_accel(cfg, v_av, gap, v_lead, lead_present)
        v_av_next = _quantize(max(0.0, v_av + a * dt))
        if cfg.lateral_accel_sigma > 0:
            kick = float(lat.normal((1,), 0.0, cfg.lateral_accel_sigma).item())
        else:
            kick = 0.0
        v_lat = _quantize(0.95 * v_lat + kick)
        if lead_present:
            gap += (v_lead - v_av) * dt
            v_lead = lead_speed(k + 1)
        v_av = v_av_next
    return Segment(segment_id=int(seed) & 0xFFFFFFFFFFFFFFFF, frames=frames,
                   frame_rate_hz=cfg.frame_rate_hz)


def _coverage(n: int, lo: float, hi: float) -> np.ndarray:
    """Fraction of each unit pixel cell [i, i+1) covered by [lo, hi]."""
    i = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(hi, i + 1.0) - np.maximum(lo, i), 0.0, 1.0)


def render_frame_image(gap_m, lateral_offset_m: float, cfg: ScenarioConfig,
                       rng: Rng = None) -> Tensor:
    """Deterministic forward-camera view.

    Horizon at h/2 with sky above and road below, bright converging lane
    edges, and — when ``gap_m`` is not None — the lead vehicle as a dark
    rectangle with width clamp(k/gap, 2, w/2) px, drawn with sub-pixel
    (anti-aliased) edges so small gap changes stay visible. Seeded uniform
    noise of the configured amplitude is added and the result clamped to
    [0, 1]. With ``rng=None`` a fixed stream is used, making the function
    pure in its arguments.
    """
    h, w = cfg.image_h, cfg.image_w
    horizon = h // 2
    img = np.empty((h, w), dtype=np.float64)
    img[:horizon, :] = _SKY
    img[horizon:, :] = _ROAD
    cx = (w - 1) / 2.0
    rows = np.arange(horizon, h)
    depth = (rows - horizon + 1.0) / (h - horizon)  # (0,1], 1 at the bottom
    half = depth * (0.45 * w)
    for sign in (-1.0, 1.0):
        xs = np.rint(cx + sign * half).astype(int)
        ok = (xs >= 0) & (xs < w)
        img[rows[ok], xs[ok]] = _LANE

    if gap_m is not None:
        if gap_m <= 0:
            raise DataError(f"lead-vehicle gap must be positive, got {gap_m}")
        width = min(max(cfg.render_width_gain / gap_m, 2.0), w / 2.0)
        height = 0.8 * width
        y_bottom = horizon + min(max((h - horizon) * (_NEAR_GAP_M / gap_m), 1.0),
                                 float(h - horizon))
        x_center = cx + _LATERAL_GAIN * lateral_offset_m / gap_m
        cov = np.outer(_coverage(h, y_bottom - height, y_bottom),
                       _coverage(w, x_center - width / 2.0, x_center + width / 2.0))
        img = img * (1.0 - cov) + _CAR * cov

    out = np.repeat(img[:, :, None], 3, axis=2)
    if cfg.render_noise_amplitude > 0:
        stream = rng if rng is not None else Rng(0)
        amp = cfg.render_noise_amplitude
        out = out + stream.uniform((h, w, 3), -amp, amp).data
    return Tensor._wrap(np.clip(out, 0.0, 1.0))


@dataclass
class DatasetStats:
    """Summary counts and ranges over a set of segments."""

    segments: int
    frames: int
    windows: int
    lead_fraction: float
    feature_min: tuple
    feature_mean: tuple
    feature_max: tuple
    accel_min: float
    accel_max: float

    def to_text(self) -> str:
        from .features import FEATURE_NAMES

        lines = [
            f"segments        {self.segments}",
            f"frames          {self.frames}",
            f"windows         {self.windows}",
            f"lead fraction   {self.lead_fraction:.3f}",
            f"accel range     [{self.accel_min:.6f}, {self.accel_max:.6f}]",
            "feature              min          mean           max",
        ]
        for i, name in enumerate(FEATURE_NAMES):
            lines.append(f"  {name:<6} {self.feature_min[i]:>13.6f} "
                         f"{self.feature_mean[i]:>13.6f} {self.feature_max[i]:>13.6f}")
        return "\n".join(lines)


def dataset_stats(segments) -> DatasetStats:
    """Counts, lead fraction, per-feature ranges, acceleration bounds.

    Streams over the input, so it can consume a generator of segments
    without holding more than one in memory.
    """
    n_segments = 0
    n_frames = 0
    n_windows = 0
    n_lead = 0
    fmin = np.full(11, np.inf)
    fmax = np.full(11, -np.inf)
    fsum = np.zeros(11)
    count = 0
    amin = math.inf
    amax = -math.inf
    for seg in segments:
        n_segments += 1
        n_frames += len(seg)
        n_windows += max(0, len(seg) - 4)
        if any(fr.front_present for fr in seg.frames):
            n_lead += 1
        for fv in segment_feature_vectors(seg.frames):
            vals = fv.values.data
            np.minimum(fmin, vals, out=fmin)
            np.maximum(fmax, vals, out=fmax)
            fsum += vals
            count += 1
            t = fv.target.data
            amin = min(amin, float(t.min()))
            amax = max(amax, float(t.max()))
    if not n_segments:
        raise DataError("dataset_stats needs at least one segment")
    return DatasetStats(
        segments=n_segments,
        frames=n_frames,
        windows=n_windows,
        lead_fraction=n_lead / n_segments,
        feature_min=tuple(fmin),
        feature_mean=tuple(fsum / count),
        feature_max=tuple(fmax),
        accel_min=amin,
        accel_max=amax,
    )
