"""Multi-robot intersection coordination with assigned priorities and bounded acceleration."""

from .coordination import (CrossSection, EllipseSection, EmptySection, GoalRegion, GridSection,
                           PriorityGraph, ShiftBound, StripSection, build_bounds,
                           build_cross_section, curve_intersects_shifted, in_goal,
                           in_shifted_obstacle, induced_priority_graph, shift_bound)
from .geometry import (IntersectionLayout, LaneSpec, PathGeometry, RobotFootprint, crossroads,
                       pair_collision, point_at)
from .kinodynamics import (KinodynamicModel, RobotState, SystemState, braking_state, max_state,
                           position_vector, stopping_distance)
from .planner import (DeadlockDetected, Decision, InitialStateUnsafe, PlannerConfig,
                      StepLimitExceeded, Trajectory, check_initial, decide, detect_deadlock, plan,
                      step, virtual_path)
from .policy import assign_priorities, extend_priorities

__version__ = "0.1.0"
