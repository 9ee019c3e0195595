"""Small value types shared by the flow, collision and control modules."""
from __future__ import annotations

import enum
from dataclasses import dataclass


@dataclass(frozen=True)
class FlowEstimate:
    v_x_mps: float
    v_y_mps: float
    omega_x_radps: float
    omega_y_radps: float
    altitude_m: float
    timestamp_s: float = 0.0

    def as_row(self) -> str:
        return (f"{self.timestamp_s:.6f} {self.v_x_mps:.6f} {self.v_y_mps:.6f} "
                f"{self.omega_x_radps:.6f} {self.omega_y_radps:.6f} {self.altitude_m:.6f}")


class Decision(str, enum.Enum):
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    STOP = "Stop"


@dataclass(frozen=True)
class ObstacleReport:
    p_left: float
    p_center: float
    p_right: float
    decision: Decision
    timestamp_s: float = 0.0

    def __post_init__(self):
        for p in (self.p_left, self.p_center, self.p_right):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")

    def as_row(self) -> str:
        return (f"{self.timestamp_s:.6f} {self.p_left:.6f} {self.p_center:.6f} "
                f"{self.p_right:.6f} {self.decision.value}")
