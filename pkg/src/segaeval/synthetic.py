"""Small synthetic CT phantoms for tests and demos."""

import numpy as np

from .volume import LabelMask, VoxelGrid


def ball_mask(radius, spacing=(1.0, 1.0, 1.0), margin=2):
    """Voxelized ball of ``radius`` voxels centred in a cubic grid."""
    n = 2 * int(np.ceil(radius)) + 1 + 2 * margin
    g = np.indices((n, n, n)) - (n - 1) / 2.0
    return LabelMask((g**2).sum(axis=0) <= radius * radius, spacing=spacing)


def vessel_phantom(shape=(32, 32, 16), spacing=(0.8, 0.8, 2.0), radius_mm=4.5,
                   vessel_hu=350.0, tissue_hu=40.0, branch=True):
    """CT-like image in HU with a tubular 'aorta' along z and an oblique branch.

    Returns ``(image, mask)`` sharing geometry; origin puts the grid centre at
    the world origin.
    """
    sp = np.asarray(spacing, dtype=float)
    dims = np.asarray(shape)
    origin = -(dims - 1) / 2.0 * sp
    idx = np.indices(shape).astype(float)
    x = origin[0] + idx[0] * sp[0]
    y = origin[1] + idx[1] * sp[1]
    z = origin[2] + idx[2] * sp[2]
    mask = (x - 2.0) ** 2 + (y + 1.0) ** 2 <= radius_mm**2
    if branch:
        # branch leaving the trunk towards +x+y, ascending in z
        t = np.clip(((x - 2.0) + (y + 1.0)) / np.sqrt(2.0), 0.0, None)
        px, py = 2.0 + t / np.sqrt(2.0), -1.0 + t / np.sqrt(2.0)
        pz = 0.5 * t
        mask |= (x - px) ** 2 + (y - py) ** 2 + (z - pz) ** 2 <= (0.5 * radius_mm) ** 2
    values = np.where(mask, vessel_hu, tissue_hu).astype(np.int16)
    image = VoxelGrid(values, tuple(sp), tuple(origin))
    return image, LabelMask.like(image, mask)


def threshold_segmenter(image, threshold):
    """Toy 'algorithm': foreground where the normalized intensity exceeds
    ``threshold``."""
    return LabelMask.like(image, np.asarray(image.values, dtype=float) > threshold)


def write_base_cases(directory, n_cases=1, encoding="gzip"):
    """Write ``case<k>.nrrd`` / ``case<k>.seg.nrrd`` phantom pairs."""
    from pathlib import Path

    from .volume import write_nrrd

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = []
    for k in range(n_cases):
        image, mask = vessel_phantom(radius_mm=4.5 + 0.5 * k, branch=(k % 2 == 0))
        write_nrrd(image, directory / f"case{k}.nrrd", encoding)
        write_nrrd(mask, directory / f"case{k}.seg.nrrd", encoding)
        ids.append(f"case{k}")
    return ids


def write_team_predictions(augmented_dir, submissions_dir, teams, encoding="gzip"):
    """Segment every augmented image with per-team toy algorithms.

    ``teams`` maps team id -> dict(threshold=..., median=bool, runtime=float,
    skip=set of case ids to leave out).
    """
    from pathlib import Path

    from scipy import ndimage

    from .volume import read_nrrd, write_nrrd

    augmented_dir, submissions_dir = Path(augmented_dir), Path(submissions_dir)
    images = sorted(p for p in augmented_dir.glob("*.nrrd") if not p.name.endswith(".seg.nrrd"))
    for team, opts in teams.items():
        tdir = submissions_dir / team
        tdir.mkdir(parents=True, exist_ok=True)
        rows = ["case,seconds"]
        for p in images:
            case = p.name[: -len(".nrrd")]
            rows.append(f"{case},{opts.get('runtime', 1.0)!r}")
            if case in opts.get("skip", ()):
                continue
            image = read_nrrd(p, as_mask=False)
            vals = np.asarray(image.values, dtype=float)
            if opts.get("median"):
                vals = ndimage.median_filter(vals, size=3)
            pred = LabelMask.like(image, vals > opts["threshold"])
            write_nrrd(pred, tdir / f"{case}.seg.nrrd", encoding)
        (tdir / "runtimes.csv").write_text("\n".join(rows) + "\n")
