"""Planar integer coordinates and the floored Euclidean distance."""
from __future__ import annotations

import math
import struct
from typing import NamedTuple

COORD_LIMIT = 10**6
_POINT = struct.Struct(">II")


class Point(NamedTuple):
    x: int
    y: int

    def pack(self) -> bytes:
        """Canonical 8-byte form: two big-endian unsigned 32-bit integers."""
        return _POINT.pack(self.x, self.y)

    @classmethod
    def unpack(cls, data: bytes) -> "Point":
        if len(data) != _POINT.size:
            raise ValueError("a packed point is exactly 8 bytes")
        return cls(*_POINT.unpack(data))


def check_point(p: Point) -> Point:
    if not (0 <= p.x < COORD_LIMIT and 0 <= p.y < COORD_LIMIT):
        raise ValueError(f"coordinates out of range: {p}")
    return p


def distance(a: Point, b: Point) -> int:
    return math.isqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2)
