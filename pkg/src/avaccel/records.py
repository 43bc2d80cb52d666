"""Drive-segment records and their binary file format.

A :class:`Segment` is one contiguous recording (nominally 20 s at 10 Hz,
200 frames) of ego-vehicle kinematics, front-vehicle observations, and a
camera frame. Segments serialize to the ``AVSG1`` format::

    magic   "AVSG1"                      5 bytes
    version u8 = 1
    segment_id u64, frame_count u32, frame_rate u16
    per frame:
        frame_index u32
        av_velocity 3 x f64
        front_present u8
        front_velocity 3 x f64
        front_accel  3 x f64
        rel_distance 2 x f64
        image: h u16, w u16, channels u8, then h*w*channels pixel bytes
               (pixel byte = round(value * 255))
        crc32 of the frame's bytes, u32
    crc32 over everything after the magic, u32

All integers and floats are little-endian. The per-frame CRC pins down
which frame a corruption hit; the trailing CRC covers the whole body.
Round-trips are bit-exact except pixel quantization, which is lossy by at
most 1/510 per channel.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .tensor import Tensor

__all__ = ["FrameRecord", "Segment", "write_segment", "read_segment",
           "write_segment_file", "read_segment_file"]

MAGIC = b"AVSG1"
FORMAT_VERSION = 1

# frame body layout before the pixel block:
#   frame_index u32 | av_vel 3d | front_present u8 | front_vel 3d |
#   front_accel 3d | rel_dist 2d | h u16 | w u16 | channels u8
_FRAME_HEAD = struct.Struct("<I3dB3d3d2dHHB")


def _vec(values, n: int, name: str) -> tuple:
    t = tuple(float(v) for v in values)
    if len(t) != n:
        raise DataError(f"{name} must have {n} components, got {len(t)}")
    for v in t:
        if not np.isfinite(v):
            raise DataError(f"{name} contains a non-finite value")
    return t


@dataclass
class FrameRecord:
    """One frame: ego kinematics, front-vehicle observations, camera image.

    Velocities are m/s in the ego frame (x forward, y left, z up);
    ``front_accel`` is in velocity-units per frame; ``rel_distance`` is the
    front vehicle's position relative to the ego vehicle in metres (x, y).
    When ``front_present`` is false every front-vehicle field is exactly
    zero. ``image`` holds values in [0, 1] with even, positive extents.
    """

    frame_index: int
    av_velocity: tuple
    front_present: bool
    front_velocity: tuple
    front_accel: tuple
    rel_distance: tuple
    image: Tensor

    def __post_init__(self):
        if self.frame_index < 0:
            raise DataError(f"negative frame index {self.frame_index}")
        self.av_velocity = _vec(self.av_velocity, 3, "av_velocity")
        self.front_velocity = _vec(self.front_velocity, 3, "front_velocity")
        self.front_accel = _vec(self.front_accel, 3, "front_accel")
        self.rel_distance = _vec(self.rel_distance, 2, "rel_distance")
        if not self.front_present:
            for name in ("front_velocity", "front_accel", "rel_distance"):
                if any(v != 0.0 for v in getattr(self, name)):
                    raise DataError(f"front vehicle absent but {name} is non-zero "
                                    f"in frame {self.frame_index}")
        if not isinstance(self.image, Tensor):
            self.image = Tensor(self.image)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DataError(f"image must be [h,w,3], got {self.image.shape}")
        h, w, _ = self.image.shape
        if h <= 0 or w <= 0 or h % 2 or w % 2:
            raise DataError(f"image extents must be positive and even, got {h}x{w}")
        if float(self.image.data.min()) < 0.0 or float(self.image.data.max()) > 1.0:
            raise DataError(f"image values outside [0,1] in frame {self.frame_index}")


@dataclass
class Segment:
    """An ordered run of frames with consecutive indices starting at 0."""

    segment_id: int
    frames: list = field(default_factory=list)
    frame_rate_hz: int = 10

    def __post_init__(self):
        if not 0 <= self.segment_id < 2 ** 64:
            raise DataError(f"segment_id out of u64 range: {self.segment_id}")
        if not 0 < self.frame_rate_hz < 2 ** 16:
            raise DataError(f"frame_rate_hz out of range: {self.frame_rate_hz}")
        if len(self.frames) < 2:
            raise DataError(f"segment needs at least 2 frames, got {len(self.frames)}")
        for i, fr in enumerate(self.frames):
            if fr.frame_index != i:
                raise DataError(f"frame indices must run 0..n-1; position {i} "
                                f"has index {fr.frame_index}")

    def __len__(self) -> int:
        return len(self.frames)


def _encode_frame(fr: FrameRecord) -> bytes:
    h, w, c = fr.image.shape
    head = _FRAME_HEAD.pack(
        fr.frame_index,
        *fr.av_velocity,
        1 if fr.front_present else 0,
        *fr.front_velocity,
        *fr.front_accel,
        *fr.rel_distance,
        h, w, c,
    )
    pixels = np.rint(fr.image.data * 255.0).astype(np.uint8).tobytes()
    body = head + pixels
    return body + struct.pack("<I", zlib.crc32(body))


def write_segment(seg: Segment, sink) -> int:
    """Serialize ``seg`` to the binary ``sink``; returns bytes written."""
    body = bytearray()
    body += struct.pack("<BQIH", FORMAT_VERSION, seg.segment_id,
                        len(seg.frames), seg.frame_rate_hz)
    for fr in seg.frames:
        body += _encode_frame(fr)
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    sink.write(MAGIC)
    sink.write(bytes(body))
    return len(MAGIC) + len(body)


def _take(buf: bytes, pos: int, n: int, what: str) -> tuple:
    if pos + n > len(buf):
        raise FormatError(f"truncated stream while reading {what} "
                          f"(needed {n} bytes at offset {pos})")
    return buf[pos:pos + n], pos + n


def read_segment(source) -> Segment:
    """Parse one segment from a binary ``source``, verifying all CRCs."""
    raw = source.read()
    pos = 0
    magic, pos = _take(raw, pos, len(MAGIC), "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    body_start = pos
    head, pos = _take(raw, pos, struct.calcsize("<BQIH"), "segment header")
    version, segment_id, frame_count, frame_rate = struct.unpack("<BQIH", head)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    frames = []
    for k in range(frame_count):
        frame_start = pos
        head, pos = _take(raw, pos, _FRAME_HEAD.size, f"frame {k} header")
        fields = _FRAME_HEAD.unpack(head)
        h, w, c = fields[-3], fields[-2], fields[-1]
        pix, pos = _take(raw, pos, h * w * c, f"frame {k} pixels")
        crc_raw, pos = _take(raw, pos, 4, f"frame {k} checksum")
        (crc,) = struct.unpack("<I", crc_raw)
        if zlib.crc32(raw[frame_start:frame_start + _FRAME_HEAD.size + h * w * c]) != crc:
            raise FormatError(f"CRC mismatch in frame {k}", frame_index=k)
        if c != 3:
            raise FormatError(f"frame {k} has {c} channels, expected 3", frame_index=k)
        image = np.frombuffer(pix, dtype=np.uint8).reshape(h, w, c).astype(np.float64) / 255.0
        frames.append(FrameRecord(
            frame_index=fields[0],
            av_velocity=fields[1:4],
            front_present=bool(fields[4]),
            front_velocity=fields[5:8],
            front_accel=fields[8:11],
            rel_distance=fields[11:13],
            image=Tensor._wrap(image),
        ))
    crc_raw, pos = _take(raw, pos, 4, "file checksum")
    (file_crc,) = struct.unpack("<I", crc_raw)
    if zlib.crc32(raw[body_start:pos - 4]) != file_crc:
        raise FormatError("file-level CRC mismatch")
    return Segment(segment_id=segment_id, frames=frames, frame_rate_hz=frame_rate)


def write_segment_file(path, seg: Segment) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        return write_segment(seg, fh)


def read_segment_file(path) -> Segment:
    path = Path(path)
    if not path.exists():
        raise DataError(f"segment file not found: {path}")
    with open(path, "rb") as fh:
        return read_segment(fh)
