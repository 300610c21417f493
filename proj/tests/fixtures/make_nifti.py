# Copyright 2026 The uqseg Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the NIfTI-1 fixtures used by the acceptance run.

Headers are packed by hand with struct so the files do not depend on the
library's own writer. Values follow closed-form patterns that the C++ side
recomputes.
"""
import gzip
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def header(dims, datatype, bitpix, pixdim, slope=0.0, inter=0.0):
    h = bytearray(348)
    struct.pack_into("<i", h, 0, 348)
    dim = [len(dims)] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into("<8h", h, 40, *dim)
    struct.pack_into("<hh", h, 70, datatype, bitpix)
    pd = [1.0] + list(pixdim) + [1.0] * (7 - len(pixdim))
    struct.pack_into("<8f", h, 76, *pd)
    struct.pack_into("<fff", h, 108, 352.0, slope, inter)
    h[344:348] = b"n+1\0"
    return bytes(h) + b"\0\0\0\0"


def main():
    # int16, 4 x 3 x 2 (x fastest), value (7 i mod 23) - 11
    n = 4 * 3 * 2
    data = struct.pack(f"<{n}h", *[(7 * i) % 23 - 11 for i in range(n)])
    (HERE / "int16_4x3x2.nii").write_bytes(header((4, 3, 2), 4, 16, (0.5, 0.75, 2.0)) + data)

    # float32, 5 x 6, value 0.25 i - 3, gzip with a zero timestamp
    n = 5 * 6
    data = struct.pack(f"<{n}f", *[0.25 * i - 3 for i in range(n)])
    raw = header((5, 6), 16, 32, (1.5, 1.5)) + data
    (HERE / "float32_5x6.nii.gz").write_bytes(gzip.compress(raw, mtime=0))

    # uint8, 3 x 4, raw 10 i, scaled by 2 and shifted by -1
    n = 3 * 4
    data = bytes(10 * i for i in range(n))
    (HERE / "uint8_3x4_scaled.nii").write_bytes(header((3, 4), 2, 8, (1.0, 1.0), 2.0, -1.0) + data)


if __name__ == "__main__":
    main()
