"""
Ground-truth world description: hallway obstacles, doors and their handles.
Loaded from the JSON scene format and queried by the sensors and the evaluator.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.models import Box, Pose, SpraySimError, UnknownEntityError, Vec3, unit, vec3

logger = logging.getLogger(__name__)

SPRAY_STANDOFF = 0.30

DEFAULT_HANDLE_SIZE = (0.12, 0.04, 0.04)  # along door width, along normal, vertical
DEFAULT_PROTRUSION = 0.06

_UP = np.array([0.0, 0.0, 1.0])


class SceneParseError(SpraySimError):
    """Scene file is not valid JSON or has the wrong shape"""


class SceneValidationError(SpraySimError):
    """Scene parses but breaks a geometric invariant"""


@dataclass(frozen=True)
class DoorSpec:
    id: str
    center: Vec3
    width: float
    height: float
    normal: Vec3

    def frame(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(normal, width direction, height direction) as unit vectors"""
        n = np.array(self.normal)
        u = unit(np.cross(_UP, n))
        v = np.cross(n, u)
        return n, u, v

    def corners(self) -> np.ndarray:
        n, u, v = self.frame()
        c = np.array(self.center)
        hw, hh = self.width / 2.0, self.height / 2.0
        return np.array([c + su * hw * u + sv * hh * v for su in (-1, 1) for sv in (-1, 1)])

    def signed_distance(self, point: np.ndarray) -> float:
        return float(np.dot(np.array(self.normal), np.asarray(point) - np.array(self.center)))


@dataclass(frozen=True)
class HandleSpec:
    id: str
    door: str
    center: Vec3
    extents: Vec3
    protrusion: float = DEFAULT_PROTRUSION

    @property
    def box(self) -> Box:
        return Box.around(self.center, self.extents)


@dataclass(frozen=True)
class SceneModel:
    """Immutable ground-truth world; safe to share between readers"""
    bounds: Box
    obstacles: Tuple[Box, ...] = ()
    doors: Tuple[DoorSpec, ...] = ()
    handles: Tuple[HandleSpec, ...] = ()
    _door_index: Dict[str, DoorSpec] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_door_index", {d.id: d for d in self.doors})

    def door(self, door_id: str) -> DoorSpec:
        try:
            return self._door_index[door_id]
        except KeyError:
            raise UnknownEntityError(f"unknown door id {door_id!r}") from None

    def handle(self, handle_id: str) -> HandleSpec:
        for h in self.handles:
            if h.id == handle_id:
                return h
        raise UnknownEntityError(f"unknown handle id {handle_id!r}")

    def solid_boxes(self) -> List[Box]:
        """Everything a vehicle can collide with: obstacles plus handle boxes"""
        return list(self.obstacles) + [h.box for h in self.handles]


def default_handle_extents(door: DoorSpec) -> Vec3:
    """World AABB edge lengths of a default lever handle mounted on `door`"""
    n, u, v = door.frame()
    along_u, along_n, along_v = DEFAULT_HANDLE_SIZE
    return vec3(np.abs(u) * along_u + np.abs(n) * along_n + np.abs(v) * along_v)


def ground_truth_spray_pose(scene: SceneModel, handle_id: str,
                            standoff: float = SPRAY_STANDOFF) -> Pose:
    """
    Nozzle pose that sprays `handle_id` head-on: `standoff` meters out along the
    door's outward normal, heading back towards the handle.
    """
    handle = scene.handle(handle_id)
    normal = np.array(scene.door(handle.door).normal)
    position = np.array(handle.center) + standoff * normal
    return Pose.facing(position, -normal)


# --- file format -----------------------------------------------------------

def _require(entry: Dict[str, Any], key: str, where: str) -> Any:
    if key not in entry:
        raise SceneParseError(f"{where}: missing field '{key}'")
    return entry[key]


def _parse_vec(value: Any, where: str) -> Vec3:
    try:
        return vec3(value)
    except (TypeError, ValueError) as e:
        raise SceneParseError(f"{where}: expected a 3-vector ({e})") from None


def _parse_box(entry: Dict[str, Any], where: str) -> Box:
    lo = _parse_vec(_require(entry, "min", where), f"{where}.min")
    hi = _parse_vec(_require(entry, "max", where), f"{where}.max")
    try:
        return Box(lo, hi)
    except ValueError as e:
        raise SceneValidationError(f"{where}: {e}") from None


def scene_from_dict(data: Dict[str, Any]) -> SceneModel:
    if not isinstance(data, dict):
        raise SceneParseError("scene document must be an object")

    bounds = _parse_box(_require(data, "bounds", "scene"), "bounds")
    obstacles = tuple(
        _parse_box(o, f"obstacles[{i}]") for i, o in enumerate(data.get("obstacles", []))
    )

    doors = []
    for i, d in enumerate(data.get("doors", [])):
        where = f"doors[{i}]"
        doors.append(DoorSpec(
            id=str(_require(d, "id", where)),
            center=_parse_vec(_require(d, "center", where), f"{where}.center"),
            width=float(_require(d, "width", where)),
            height=float(_require(d, "height", where)),
            normal=_parse_vec(_require(d, "normal", where), f"{where}.normal"),
        ))
    door_lookup = {d.id: d for d in doors}

    handles = []
    for i, h in enumerate(data.get("handles", [])):
        where = f"handles[{i}]"
        door_id = str(_require(h, "door", where))
        if door_id not in door_lookup:
            raise SceneValidationError(f"{where}: references missing door '{door_id}'")
        if "extents" in h:
            extents = _parse_vec(h["extents"], f"{where}.extents")
        else:
            extents = default_handle_extents(door_lookup[door_id])
        handles.append(HandleSpec(
            id=str(h.get("id", f"{door_id}-h{i}")),
            door=door_id,
            center=_parse_vec(_require(h, "center", where), f"{where}.center"),
            extents=extents,
            protrusion=float(h.get("protrusion", DEFAULT_PROTRUSION)),
        ))

    scene = SceneModel(bounds=bounds, obstacles=obstacles, doors=tuple(doors), handles=tuple(handles))
    validate_scene(scene)
    return scene


def scene_to_dict(scene: SceneModel) -> Dict[str, Any]:
    return {
        "bounds": {"min": list(scene.bounds.min), "max": list(scene.bounds.max)},
        "obstacles": [{"min": list(o.min), "max": list(o.max)} for o in scene.obstacles],
        "doors": [
            {"id": d.id, "center": list(d.center), "width": d.width,
             "height": d.height, "normal": list(d.normal)}
            for d in scene.doors
        ],
        "handles": [
            {"id": h.id, "door": h.door, "center": list(h.center),
             "extents": list(h.extents), "protrusion": h.protrusion}
            for h in scene.handles
        ],
    }


def validate_scene(scene: SceneModel) -> None:
    """Raise SceneValidationError naming the first entity that breaks an invariant"""
    for i, o in enumerate(scene.obstacles):
        if not scene.bounds.contains_box(o):
            raise SceneValidationError(f"obstacles[{i}] extends outside world bounds")

    seen = set()
    for d in scene.doors:
        if d.id in seen:
            raise SceneValidationError(f"door '{d.id}': duplicate id")
        seen.add(d.id)
        if d.width <= 0 or d.height <= 0:
            raise SceneValidationError(f"door '{d.id}': width and height must be positive")
        n = np.array(d.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise SceneValidationError(f"door '{d.id}': normal must have unit length")
        if np.linalg.norm(n[:2]) < 1e-6:
            raise SceneValidationError(f"door '{d.id}': normal must not be vertical")
        for corner in d.corners():
            if not scene.bounds.contains_point(corner):
                raise SceneValidationError(f"door '{d.id}': rectangle extends outside world bounds")

    handle_ids = set()
    for h in scene.handles:
        if h.id in handle_ids:
            raise SceneValidationError(f"handle '{h.id}': duplicate id")
        handle_ids.add(h.id)
        if h.protrusion < 0:
            raise SceneValidationError(f"handle '{h.id}': protrusion must be >= 0")
        if any(e <= 0 for e in h.extents):
            raise SceneValidationError(f"handle '{h.id}': extents must be positive")
        door = scene.door(h.door)
        offset = door.signed_distance(np.array(h.center))
        if abs(offset - h.protrusion) > 1e-3:
            raise SceneValidationError(
                f"handle '{h.id}': center sits {offset:.4f} m off door '{door.id}', "
                f"protrusion says {h.protrusion:.4f} m"
            )
        n, u, v = door.frame()
        rel = np.array(h.center) - np.array(door.center)
        if abs(rel @ u) > door.width / 2.0 or abs(rel @ v) > door.height / 2.0:
            raise SceneValidationError(f"handle '{h.id}': not within door '{door.id}' rectangle")
        if not scene.bounds.contains_box(h.box):
            raise SceneValidationError(f"handle '{h.id}': extends outside world bounds")


def load_scene(path: Union[str, Path]) -> SceneModel:
    """Parse and validate a scene file"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SceneParseError(f"{path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        lines = text.splitlines()
        context = lines[e.lineno - 1] if 0 < e.lineno <= len(lines) else ""
        raise SceneParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}\n    {context}") from None
    try:
        scene = scene_from_dict(data)
    except (SceneParseError, SceneValidationError) as e:
        raise type(e)(f"{path}: {e}") from None
    logger.info(f"[SCENE] Loaded {path.name}: {len(scene.obstacles)} obstacles, "
                f"{len(scene.doors)} doors, {len(scene.handles)} handles")
    return scene


def save_scene(scene: SceneModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def hallway_scene(length: float = 10.0, half_width: float = 1.2, height: float = 2.5,
                  doors: Optional[List[Tuple[float, int]]] = None) -> SceneModel:
    """
    Straight hallway along +x from x=0 to x=length, closed at both ends, with a floor.
    `doors` lists (x position, side) pairs; side -1 puts the door in the y<0 wall.
    """
    wall = 0.3
    bounds = Box((-0.5, -half_width - 0.4, -0.2), (length + 0.5, half_width + 0.4, height + 0.1))
    obstacles = (
        Box((-0.5, -half_width - 0.4, -0.2), (length + 0.5, half_width + 0.4, 0.0)),
        Box((-0.5, half_width, 0.0), (length + 0.5, half_width + wall, height)),
        Box((-0.5, -half_width - wall, 0.0), (length + 0.5, -half_width, height)),
        Box((-wall, -half_width, 0.0), (0.0, half_width, height)),
        Box((length, -half_width, 0.0), (length + wall, half_width, height)),
    )
    door_specs, handle_specs = [], []
    for i, (x, side) in enumerate(doors or []):
        door = DoorSpec(
            id=f"d{i + 1}",
            center=(float(x), side * half_width, 1.0),
            width=0.9,
            height=2.0,
            normal=(0.0, float(-side), 0.0),
        )
        n, u, _ = door.frame()
        handle_center = np.array(door.center) + 0.35 * u + DEFAULT_PROTRUSION * n
        door_specs.append(door)
        handle_specs.append(HandleSpec(
            id=f"{door.id}-h0",
            door=door.id,
            center=vec3(handle_center),
            extents=default_handle_extents(door),
        ))
    scene = SceneModel(bounds, obstacles, tuple(door_specs), tuple(handle_specs))
    validate_scene(scene)
    return scene


def random_hallway_scene(seed: int, length: float = 10.0) -> SceneModel:
    """Hallway with 1-3 doors on random walls, at least 2 m apart"""
    rng = np.random.default_rng(seed)
    half_width = float(rng.uniform(1.1, 1.4))
    count = int(rng.integers(1, 4))
    slots = np.arange(3.0, length - 1.5, 2.0)
    xs = sorted(rng.choice(slots, size=min(count, len(slots)), replace=False))
    doors = [(float(x) + float(rng.uniform(-0.3, 0.3)), int(rng.choice([-1, 1]))) for x in xs]
    return hallway_scene(length=length, half_width=round(half_width, 3), doors=doors)


def scene_summary(scene: SceneModel) -> Dict[str, Any]:
    return {
        "obstacles": len(scene.obstacles),
        "doors": [d.id for d in scene.doors],
        "handles": [h.id for h in scene.handles],
        "bounds": [list(scene.bounds.min), list(scene.bounds.max)],
    }
