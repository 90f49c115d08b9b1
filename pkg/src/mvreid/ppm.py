"""Binary PPM (P6) image I/O with bit-exact round trips."""

import numpy as np

from .errors import ContractError, FormatError, TruncatedFileError


def write_ppm(image, path):
    """Write an 8-bit H x W x 3 RGB array as binary PPM."""
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ContractError("PPM writer needs uint8 HxWx3 RGB, got %s %s"
                            % (img.dtype, img.shape))
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def _tokens(buf):
    """Yield (token, end offset) over the header region, skipping # comments."""
    pos = 0
    while pos < len(buf):
        ch = buf[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = buf.find(b"\n", pos)
            pos = len(buf) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(buf) and not buf[end:end + 1].isspace():
                end += 1
            yield buf[pos:end], end
            pos = end


def read_ppm(path):
    """Read a binary PPM written by write_ppm (or any maxval-255 P6 file)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    fields = []
    offset = 0
    for token, end in _tokens(buf):
        fields.append(token)
        offset = end
        if len(fields) == 4:
            break
    if len(fields) < 4:
        raise FormatError("PPM header incomplete in %s" % path)
    if fields[0] != b"P6":
        raise FormatError("not a binary PPM (magic %r) in %s" % (fields[0], path))
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError("non-numeric PPM header fields in %s" % path)
    if w < 1 or h < 1:
        raise FormatError("bad PPM dimensions %dx%d in %s" % (w, h, path))
    if maxval != 255:
        raise FormatError("only 8-bit PPM supported, maxval %d in %s" % (maxval, path))
    payload = buf[offset + 1:]  # single whitespace byte after maxval
    need = 3 * w * h
    if len(payload) < need:
        raise TruncatedFileError("PPM payload %d bytes, need %d in %s"
                                 % (len(payload), need, path))
    if len(payload) > need:
        raise FormatError("PPM has %d trailing bytes in %s" % (len(payload) - need, path))
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()
