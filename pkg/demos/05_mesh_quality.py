"""
Surface extraction, smoothing and tetrahedral quality
=====================================================
"""

import numpy as np

from segaeval.mesh import TetMesh, marching_cubes, smooth, tet_quality_report, watertight_check, write_stl
from segaeval.synthetic import ball_mask

mask = ball_mask(10, (1.0, 1.0, 1.0))
surf = marching_cubes(mask)
exact = 4 / 3 * np.pi * 10**3
print(f"{len(surf.triangles)} triangles, volume error {(surf.volume() - exact) / exact:+.2%}")
print(watertight_check(surf).as_dict())

soft = smooth(surf)
print(f"after smoothing: volume change {(soft.volume() - surf.volume()) / surf.volume():+.2%}")
write_stl(soft, "sphere.stl")

# one good element and one with two vertices swapped
tet = np.array([[1, 1, 1], [-1, -1, 1], [-1, 1, -1], [1, -1, -1]], float)
mesh = TetMesh(np.vstack([tet, tet + 4]), np.array([[0, 1, 2, 3], [5, 4, 6, 7]]))
print(tet_quality_report(mesh).as_dict())
