"""
Anchor Layouts

A layout names the K anchors of a locally decomposed identity field and
splits them into on-axis anchors (M), left anchors (S) and their right
mirror partners (S*). Anchor rows are 0-based; the field's region index of
anchor row ``i`` is ``i + 1`` because region 0 is the global field.

Canonical axes: x runs left to right (the symmetry axis, left is +x),
y points up and z points out of the face towards the camera.
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

SYMMETRY_AXIS = 0

# Semi-axes of the reference head ellipsoid in canonical units.
REFERENCE_AXES = (0.55, 0.70, 0.62)

# (azimuth, elevation) in degrees; azimuth is measured from +z towards +x.
PAIRED_SITES: Dict[str, Tuple[float, float]] = {
    "eye_outer": (30.0, 8.0),
    "eye_inner": (12.0, 8.0),
    "mouth_corner": (19.0, -20.0),
    "brow_outer": (32.0, 22.0),
    "brow_inner": (12.0, 22.0),
    "nose_wing": (9.0, -5.0),
    "cheek": (30.0, -10.0),
    "cheekbone": (45.0, 0.0),
    "chin_side": (18.0, -36.0),
    "jaw": (45.0, -30.0),
    "jaw_angle": (75.0, -22.0),
    "temple": (58.0, 20.0),
    "forehead_side": (28.0, 42.0),
    "ear": (92.0, 2.0),
    "crown": (50.0, 62.0),
    "occiput": (140.0, 20.0),
}

MIDDLE_SITES: Dict[str, Tuple[float, float]] = {
    "nose_tip": (0.0, -2.0),
    "lip_upper": (0.0, -15.0),
    "lip_lower": (0.0, -24.0),
    "forehead": (0.0, 40.0),
    "nose_bridge": (0.0, 12.0),
    "chin": (0.0, -38.0),
    "back": (180.0, 10.0),
}

BUILTIN_LAYOUTS: Dict[int, Tuple[Tuple[str, ...], Tuple[str, ...]]] = {
    0: ((), ()),
    1: ((), ("nose_tip",)),
    5: (("eye_outer", "mouth_corner"), ("nose_tip",)),
    9: (("eye_outer", "eye_inner", "mouth_corner"), ("lip_upper", "lip_lower", "nose_tip")),
    39: (tuple(PAIRED_SITES), tuple(MIDDLE_SITES)),
}

# Landmarks observed during sequence tracking.
TRACKING_LANDMARKS = (
    "eye_outer_l",
    "eye_outer_r",
    "eye_inner_l",
    "eye_inner_r",
    "mouth_corner_l",
    "mouth_corner_r",
    "lip_upper",
    "lip_lower",
)


def site_direction(azimuth_deg, elevation_deg) -> np.ndarray:
    """Unit direction(s) for azimuth/elevation angles in degrees."""
    az = np.radians(np.asarray(azimuth_deg, dtype=np.float64))
    el = np.radians(np.asarray(elevation_deg, dtype=np.float64))
    return np.stack([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)], axis=-1)


def ellipsoid_radius(directions: np.ndarray, axes: Sequence[float] = REFERENCE_AXES) -> np.ndarray:
    """Distance from the origin to the ellipsoid surface along unit directions."""
    axes = np.asarray(axes, dtype=np.float64)
    return 1.0 / np.sqrt(np.sum((directions / axes) ** 2, axis=-1))


def flip(points: np.ndarray) -> np.ndarray:
    """Mirror points across the symmetry plane."""
    out = np.array(points, dtype=np.float64, copy=True)
    out[..., SYMMETRY_AXIS] *= -1.0
    return out


def site_names(num_anchors: int) -> List[str]:
    pairs, middle = _layout_sites(num_anchors)
    names = []
    for site in pairs:
        names.extend([f"{site}_l", f"{site}_r"])
    names.extend(middle)
    return names


def _layout_sites(num_anchors: int) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    if num_anchors not in BUILTIN_LAYOUTS:
        raise ValueError(f"No built-in layout with {num_anchors} anchors (available: {sorted(BUILTIN_LAYOUTS)})")
    return BUILTIN_LAYOUTS[num_anchors]


def anchor_directions(names: Sequence[str]) -> np.ndarray:
    """Unit directions of named anchors; ``_r`` names mirror their ``_l`` partner."""
    directions = []
    for name in names:
        if name in MIDDLE_SITES:
            directions.append(site_direction(*MIDDLE_SITES[name]))
            continue
        site, side = name.rsplit("_", 1)
        direction = site_direction(*PAIRED_SITES[site])
        directions.append(flip(direction) if side == "r" else direction)
    return np.array(directions, dtype=np.float64).reshape(-1, 3)


@dataclass(frozen=True)
class AnchorLayout:
    """
    Named anchors and their mirror structure.

    Attributes:
        names: Anchor names, one per row
        middle: Rows of on-axis anchors (M)
        left: Rows of left anchors (S)
        right: Rows of right anchors (S*); ``right[i]`` mirrors ``left[i]``
        reference: Reference positions, K x 3
    """

    names: Tuple[str, ...]
    middle: Tuple[int, ...]
    left: Tuple[int, ...]
    right: Tuple[int, ...]
    reference: np.ndarray

    def __post_init__(self):
        k = len(self.names)
        if len(self.left) != len(self.right):
            raise ValueError("Left and right anchor sets must have the same size")
        if sorted(self.middle + self.left + self.right) != list(range(k)):
            raise ValueError("Anchor index sets must partition the anchor rows")
        if np.shape(self.reference) != (k, 3):
            raise ValueError(f"Reference positions must be {k}x3, got {np.shape(self.reference)}")

    @classmethod
    def builtin(cls, num_anchors: int) -> "AnchorLayout":
        """One of the built-in layouts with K in {0, 1, 5, 9, 39}."""
        names = site_names(num_anchors)
        directions = anchor_directions(names)
        reference = directions * ellipsoid_radius(directions)[:, None]
        n_pairs = len(_layout_sites(num_anchors)[0])
        left = tuple(2 * i for i in range(n_pairs))
        right = tuple(2 * i + 1 for i in range(n_pairs))
        middle = tuple(range(2 * n_pairs, len(names)))
        reference[list(middle), SYMMETRY_AXIS] = 0.0
        reference[list(right)] = flip(reference[list(left)])
        return cls(tuple(names), middle, left, right, reference)

    @property
    def num_anchors(self) -> int:
        return len(self.names)

    @property
    def num_symmetric(self) -> int:
        return len(self.left)

    def partner(self, row: int) -> int:
        """Mirror partner of an anchor row (on-axis anchors are their own partner)."""
        if row in self.middle:
            return row
        if row in self.left:
            return self.right[self.left.index(row)]
        return self.left[self.right.index(row)]

    def permutation(self) -> np.ndarray:
        """Row permutation that swaps every left anchor with its right partner."""
        return np.array([self.partner(row) for row in range(self.num_anchors)], dtype=int)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def mirror_anchors(self, anchors: np.ndarray) -> np.ndarray:
        """Reflect anchor positions and swap mirror partners."""
        return flip(np.asarray(anchors)[self.permutation()])

    def to_dict(self) -> Dict:
        return {
            "names": list(self.names),
            "middle": list(self.middle),
            "left": list(self.left),
            "right": list(self.right),
            "reference": np.asarray(self.reference).tolist(),
            "symmetry_axis": SYMMETRY_AXIS,
        }


def scaled_local_dim(num_anchors: int, d_loc: int = 32, base_anchors: int = 39) -> int:
    """
    Local latent size that keeps the total local latent budget of a
    ``base_anchors`` layout when fewer anchors are used.
    """
    return int(round((base_anchors + 1) * d_loc / (num_anchors + 1)))
