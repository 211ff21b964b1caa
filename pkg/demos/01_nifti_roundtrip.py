"""Write a small volume to NIfTI-1 bytes (plain and gzip) and read it back."""

import numpy as np

from gliopipe.nifti_io import read_nifti, write_nifti, write_nifti_gz
from gliopipe.volume import Volume3D

rng = np.random.default_rng(0)
vol = Volume3D(rng.normal(size=(8, 8, 8)).astype(np.float32), spacing=(1.0, 1.0, 1.0))

raw = write_nifti(vol)
print(f"plain file: {len(raw)} bytes (352-byte header + payload)")

header, back = read_nifti(raw)
print(f"dims {header.zyx_dims}, spacing {header.zyx_spacing}, dtype code {header.datatype_code}")
assert np.array_equal(back.data, vol.data)

gz = write_nifti_gz(vol)
_, back_gz = read_nifti(gz)
assert np.array_equal(back_gz.data, vol.data)
print(f"gzip file: {len(gz)} bytes, round-trips identically")

# deterministic output: same volume always serializes to the same bytes
assert write_nifti_gz(vol) == gz
print("serialization is byte-deterministic")
