"""spinequad: locomotion stack and analysis toolkit for a quadruped with an
actuated two-pitch/two-yaw spine."""

__version__ = "0.1.0"
