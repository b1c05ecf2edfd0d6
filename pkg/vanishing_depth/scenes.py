"""
scenes.py - Synthetic RGBD scenes

Ray-casts a room corner (back wall + floor) with spheres and boxes in front
of it. Depth is the camera-frame Z of the nearest hit, RGB is Lambertian
shading of the primitive albedo. Every ray hits the back wall, so depth is
dense.

Run directly to write a folder of scenes:
    python -m vanishing_depth.scenes --count 8 --seed 7 --out data/synth
"""

import sys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from vanishing_depth.lib.depth import Intrinsics, random_intrinsics
from vanishing_depth.lib.errors import ContractViolation
from vanishing_depth.lib.util import draw_seed, make_rng


EPS = 1e-9
AMBIENT = 0.25


# --- Primitives ---

@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple
    albedo: tuple


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    albedo: tuple


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    albedo: tuple


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    height: int
    width: int
    intrinsics: Intrinsics
    primitives: tuple
    yaw: float = 0.0    # radians
    pitch: float = 0.0
    light: tuple = field(default=(-0.4, -1.0, -0.6))  # direction toward the light

    def validate(self):
        if self.height < 2 or self.width < 2:
            raise ContractViolation(f"scene must be at least 2×2, got {self.height}×{self.width}")
        self.intrinsics.validate(self.height, self.width)
        if not self.primitives:
            raise ContractViolation("scene has no primitives")
        return self


# --- Ray casting ---

def _rotation(yaw, pitch):
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    about_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    about_x = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    return about_y @ about_x


def _rays(spec):
    """World-frame directions with camera-frame z = 1, so hit distance t is depth."""
    k = spec.intrinsics
    v, u = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    return cam @ _rotation(spec.yaw, spec.pitch).T


def _hit_plane(rays, plane):
    n = np.asarray(plane.normal, dtype=np.float64)
    p0 = np.asarray(plane.point, dtype=np.float64)
    denom = rays @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(denom) > EPS, (p0 @ n) / denom, np.inf)
    t = np.where(t > EPS, t, np.inf)
    normals = np.broadcast_to(n, rays.shape)
    return t, normals


def _hit_sphere(rays, sphere):
    c = np.asarray(sphere.center, dtype=np.float64)
    a = np.einsum("...i,...i->...", rays, rays)
    b = -2.0 * (rays @ c)
    cc = c @ c - sphere.radius**2
    disc = b * b - 4 * a * cc
    root = np.sqrt(np.maximum(disc, 0.0))
    near = (-b - root) / (2 * a)
    far = (-b + root) / (2 * a)
    t = np.where(near > EPS, near, far)
    t = np.where((disc >= 0) & (t > EPS), t, np.inf)
    points = rays * np.where(np.isfinite(t), t, 0.0)[..., None]
    normals = (points - c) / sphere.radius
    return t, normals


def _hit_box(rays, box):
    lo = np.asarray(box.lo, dtype=np.float64)
    hi = np.asarray(box.hi, dtype=np.float64)
    safe = np.where(np.abs(rays) > EPS, rays, EPS)
    t1 = lo / safe
    t2 = hi / safe
    t_enter = np.minimum(t1, t2)
    t_exit = np.maximum(t1, t2)
    near = t_enter.max(axis=-1)
    far = t_exit.min(axis=-1)
    t = np.where((near <= far) & (near > EPS), near, np.inf)

    axis = t_enter.argmax(axis=-1)
    normals = np.zeros(rays.shape)
    sign = -np.sign(np.take_along_axis(safe, axis[..., None], axis=-1))[..., 0]
    np.put_along_axis(normals, axis[..., None], sign[..., None], axis=-1)
    return t, normals


_HITS = {Plane: _hit_plane, Sphere: _hit_sphere, Box: _hit_box}


def render_scene(spec):
    """Returns (rgb 3×H×W in [0, 1], dense depth H×W in meters)."""
    spec.validate()
    rays = _rays(spec)
    depth = np.full(rays.shape[:2], np.inf)
    normals = np.zeros(rays.shape)
    albedo = np.zeros(rays.shape)
    for prim in spec.primitives:
        t, n = _HITS[type(prim)](rays, prim)
        closer = t < depth
        depth = np.where(closer, t, depth)
        normals = np.where(closer[..., None], n, normals)
        albedo = np.where(closer[..., None], np.asarray(prim.albedo, dtype=np.float64), albedo)
    if not np.isfinite(depth).all():
        raise ContractViolation("some camera rays hit nothing; the scene needs a background plane")

    # face normals toward the camera
    facing = np.einsum("...i,...i->...", normals, rays)
    normals = np.where((facing > 0)[..., None], -normals, normals)
    light = np.asarray(spec.light, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lambert = np.clip(normals @ light, 0.0, None)
    shade = AMBIENT + (1 - AMBIENT) * lambert
    rgb = np.clip(albedo * shade[..., None], 0.0, 1.0)
    return rgb.transpose(2, 0, 1), depth


# --- Random scenes ---

def _albedo(rng):
    return tuple(float(c) for c in rng.uniform(0.15, 0.95, size=3))


def random_scene(seed, height, width):
    """
    Back wall 4-8 m away, floor 1 m below the camera, 1-3 spheres and 0-2
    boxes between 1.5 m and the wall. Small random yaw/pitch.
    """
    rng = make_rng(seed)
    wall = rng.uniform(4.0, 8.0)
    primitives = [
        Plane(point=(0.0, 0.0, wall), normal=(0.0, 0.0, -1.0), albedo=_albedo(rng)),
        Plane(point=(0.0, 1.0, 0.0), normal=(0.0, -1.0, 0.0), albedo=_albedo(rng)),
    ]
    for _ in range(int(rng.integers(1, 4))):
        radius = rng.uniform(0.2, 0.6)
        z = rng.uniform(1.5 + radius, wall - radius - 0.2)
        center = (rng.uniform(-1.0, 1.0), rng.uniform(-0.8, 1.0 - radius), z)
        primitives.append(Sphere(center=tuple(float(c) for c in center), radius=float(radius), albedo=_albedo(rng)))
    for _ in range(int(rng.integers(0, 3))):
        size = rng.uniform(0.3, 0.8, size=3)
        z = rng.uniform(1.5, wall - size[2] - 0.2)
        x = rng.uniform(-1.2, 1.2 - size[0])
        lo = (x, 1.0 - size[1], z)
        hi = (x + size[0], 1.0, z + size[2])
        primitives.append(Box(lo=tuple(float(c) for c in lo), hi=tuple(float(c) for c in hi), albedo=_albedo(rng)))

    return SceneSpec(
        seed=seed,
        height=height,
        width=width,
        intrinsics=random_intrinsics(draw_seed(rng), height, width),
        primitives=tuple(primitives),
        yaw=float(np.radians(rng.uniform(-10, 10))),
        pitch=float(np.radians(rng.uniform(-5, 5))),
    )


SPLITS = {"train": 0, "eval": 1}


def scene_seed(seed, split, index):
    return draw_seed(make_rng(seed, SPLITS[split], index))


@lru_cache(maxsize=8)
def scene_bank(seed, split, count, height, width):
    """Rendered (rgb, depth, intrinsics) triples, cached per arguments."""
    scenes = []
    for i in range(count):
        spec = random_scene(scene_seed(seed, split, i), height, width)
        rgb, depth = render_scene(spec)
        rgb.flags.writeable = False
        depth.flags.writeable = False
        scenes.append((rgb, depth, spec.intrinsics))
    return tuple(scenes)


def main():
    from vanishing_depth.cli import run_cli
    sys.exit(run_cli(["synth", *sys.argv[1:]]))


if __name__ == "__main__":
    main()
