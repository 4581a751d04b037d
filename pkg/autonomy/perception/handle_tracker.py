"""
Multi-frame fusion of handle estimates before the mission commits to a spray pose.
"""

import logging
from collections import deque
from typing import Deque, Optional

import numpy as np

from autonomy.perception.door_handle_localizer import HandleEstimate, Plane
from src.models import vec3

logger = logging.getLogger(__name__)


class HandleTracker:
    """
    Keeps the last `window` estimates that fall within `gate` meters of the running
    mean. After `max_rejections` consecutive rejections the window restarts from
    the latest estimate.
    """

    def __init__(self, window: int = 5, gate: float = 0.3, max_rejections: int = 10):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.gate = gate
        self.max_rejections = max_rejections
        self.estimates: Deque[HandleEstimate] = deque(maxlen=window)
        self.rejections = 0

    def reset(self) -> None:
        self.estimates.clear()
        self.rejections = 0

    @property
    def stable(self) -> bool:
        return len(self.estimates) == self.window

    def running_mean(self) -> Optional[np.ndarray]:
        if not self.estimates:
            return None
        return np.mean([e.position for e in self.estimates], axis=0)

    def add(self, est: HandleEstimate) -> bool:
        """Returns whether the estimate joined the window"""
        mean = self.running_mean()
        if mean is not None and np.linalg.norm(np.array(est.position) - mean) > self.gate:
            self.rejections += 1
            if self.rejections >= self.max_rejections:
                logger.debug(f"[TRACKER] {self.rejections} rejections in a row, restarting window")
                self.reset()
                self.estimates.append(est)
            return False
        self.rejections = 0
        self.estimates.append(est)
        return True

    def fused(self) -> Optional[HandleEstimate]:
        """Mean position and mean plane of the window; None while empty"""
        if not self.estimates:
            return None
        position = self.running_mean()
        normals = np.array([e.plane.normal for e in self.estimates])
        normal = normals.mean(axis=0)
        normal /= np.linalg.norm(normal)
        offset = float(np.mean([np.dot(e.plane.normal, e.position) - e.plane.d for e in self.estimates]))
        plane = Plane(vec3(normal), float(normal @ position) - offset,
                      int(np.mean([e.plane.inlier_count for e in self.estimates])))
        return HandleEstimate(vec3(position), plane, sum(e.point_count for e in self.estimates))
