"""Coverage trajectory planning: GA visiting order, B-spline refinement, quadrotor check."""

__version__ = "0.1.0"
