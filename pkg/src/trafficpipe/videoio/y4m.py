"""YUV4MPEG2 reader/writer restricted to 4:2:0 chroma."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from ..geometry import Frame, PixelFormat, buffer_size

MAGIC = b"YUV4MPEG2"
FRAME_MARKER = b"FRAME"
ACCEPTED_COLORSPACES = ("420jpeg", "420", "420mpeg2")
_MAX_HEADER = 4096


class Y4mError(ValueError):
    pass


@dataclass(frozen=True)
class Y4mHeader:
    width: int
    height: int
    fps_num: int = 30
    fps_den: int = 1
    interlace: str = "p"
    aspect: tuple[int, int] = (0, 0)
    colorspace: str = "420jpeg"
    extras: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("width", "height", "fps_num", "fps_den"):
            if getattr(self, name) <= 0:
                raise Y4mError(f"{name} must be positive")
        if self.width % 2 or self.height % 2:
            raise Y4mError("4:2:0 streams need even width and height")
        if self.colorspace not in ACCEPTED_COLORSPACES:
            raise Y4mError(f"unsupported colorspace C{self.colorspace}")

    @property
    def fps(self) -> float:
        return self.fps_num / self.fps_den

    @property
    def frame_bytes(self) -> int:
        return buffer_size(PixelFormat.YCBCR420, self.width, self.height)

    def timestamp_ms(self, seq: int) -> float:
        return seq * 1000.0 * self.fps_den / self.fps_num

    def encode(self) -> bytes:
        parts = [
            MAGIC.decode(),
            f"W{self.width}",
            f"H{self.height}",
            f"F{self.fps_num}:{self.fps_den}",
            f"I{self.interlace}",
            f"A{self.aspect[0]}:{self.aspect[1]}",
            f"C{self.colorspace}",
            *self.extras,
        ]
        return (" ".join(parts) + "\n").encode("ascii")


def _ratio(token: str, what: str) -> tuple[int, int]:
    try:
        a, b = token.split(":")
        return int(a), int(b)
    except ValueError:
        raise Y4mError(f"malformed {what} ratio {token!r}") from None


def parse_header(line: bytes) -> Y4mHeader:
    """Parse a header line (with or without its trailing newline)."""
    line = line.rstrip(b"\n")
    tokens = line.split(b" ")
    if not tokens or tokens[0] != MAGIC:
        raise Y4mError("bad magic: stream does not start with YUV4MPEG2")
    fields: dict = {}
    extras = []
    for raw in tokens[1:]:
        if not raw:
            continue
        tok = raw.decode("ascii", errors="replace")
        key, val = tok[0], tok[1:]
        try:
            if key == "W":
                fields["width"] = int(val)
            elif key == "H":
                fields["height"] = int(val)
            elif key == "F":
                fields["fps_num"], fields["fps_den"] = _ratio(val, "frame rate")
            elif key == "I":
                fields["interlace"] = val
            elif key == "A":
                fields["aspect"] = _ratio(val, "aspect")
            elif key == "C":
                fields["colorspace"] = val
            else:
                extras.append(tok)
        except ValueError as exc:
            if isinstance(exc, Y4mError):
                raise
            raise Y4mError(f"malformed header parameter {tok!r}") from None
    for req, letter in (("width", "W"), ("height", "H")):
        if req not in fields:
            raise Y4mError(f"header missing {letter} parameter")
    if fields.get("colorspace", "420jpeg") not in ACCEPTED_COLORSPACES:
        raise Y4mError(f"unsupported colorspace C{fields['colorspace']}")
    return Y4mHeader(extras=tuple(extras), **fields)


def _read_line(stream: BinaryIO, limit: int = _MAX_HEADER) -> bytes:
    buf = bytearray()
    while len(buf) < limit:
        ch = stream.read(1)
        if not ch:
            break
        buf += ch
        if ch == b"\n":
            break
    return bytes(buf)


def _header_line(stream: BinaryIO) -> bytes:
    line = _read_line(stream)
    if not line.startswith(MAGIC):
        raise Y4mError("bad magic: stream does not start with YUV4MPEG2")
    if not line.endswith(b"\n"):
        raise Y4mError("header not terminated by newline")
    return line


def read_header(stream: BinaryIO | bytes) -> Y4mHeader:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    return parse_header(_header_line(stream))


def read_frame(stream: BinaryIO, hdr: Y4mHeader, seq: int, offset: int | None = None) -> Frame | None:
    """Read the next frame, or ``None`` at a clean end of stream."""
    start = offset if offset is not None else stream.tell()
    frame, _ = _read_frame(stream, hdr, seq, start)
    return frame


def _read_frame(stream: BinaryIO, hdr: Y4mHeader, seq: int, start: int) -> tuple[Frame | None, int]:
    marker = _read_line(stream, limit=1024)
    if not marker:
        return None, 0
    if not marker.startswith(FRAME_MARKER) or not marker.endswith(b"\n"):
        raise Y4mError(f"missing FRAME marker at byte offset {start}")
    n = hdr.frame_bytes
    data = stream.read(n)
    if len(data) != n:
        raise Y4mError(
            f"truncated frame {seq} at byte offset {start + len(marker) + len(data)}: "
            f"expected {n} bytes, got {len(data)}"
        )
    frame = Frame(seq, hdr.timestamp_ms(seq), hdr.width, hdr.height,
                  np.frombuffer(data, dtype=np.uint8), PixelFormat.YCBCR420)
    return frame, len(marker) + n


class Y4mReader:
    """Sequential frame iterator over a Y4M byte stream."""

    def __init__(self, stream: BinaryIO):
        self.stream = stream
        line = _header_line(stream)
        self.header = parse_header(line)
        self._offset = len(line)

    def __iter__(self) -> Iterator[Frame]:
        seq = 0
        hdr = self.header
        while True:
            frame, consumed = _read_frame(self.stream, hdr, seq, self._offset)
            if frame is None:
                return
            self._offset += consumed
            yield frame
            seq += 1


def iter_y4m(path) -> Iterator[Frame]:
    with open(path, "rb") as fh:
        yield from Y4mReader(fh)


def read_y4m(path) -> tuple[Y4mHeader, list[Frame]]:
    with open(path, "rb") as fh:
        reader = Y4mReader(fh)
        return reader.header, list(reader)


def write_frame(frame: Frame, hdr: Y4mHeader, stream: BinaryIO) -> int:
    if frame.format is not PixelFormat.YCBCR420:
        raise Y4mError(f"frame {frame.seq} is {frame.format.value}, Y4M output needs YCbCr420")
    if (frame.width, frame.height) != (hdr.width, hdr.height):
        raise Y4mError(
            f"frame {frame.seq} is {frame.width}x{frame.height}, header says {hdr.width}x{hdr.height}"
        )
    stream.write(FRAME_MARKER + b"\n")
    stream.write(frame.pixels.tobytes())
    return len(FRAME_MARKER) + 1 + frame.pixels.size


def y4m_write(frames: Iterable[Frame], hdr: Y4mHeader, stream: BinaryIO) -> int:
    head = hdr.encode()
    stream.write(head)
    count = len(head)
    for frame in frames:
        count += write_frame(frame, hdr, stream)
    return count


def write_y4m(path, frames: Iterable[Frame], hdr: Y4mHeader) -> int:
    with open(path, "wb") as fh:
        return y4m_write(frames, hdr, fh)


def header_for(frame: Frame, fps_num: int = 25, fps_den: int = 1, **kw) -> Y4mHeader:
    return replace(Y4mHeader(frame.width, frame.height, fps_num, fps_den), **kw)
