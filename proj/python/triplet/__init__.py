"""Mesh-based inverse rendering over triangle patchlets."""

from ._triplet import *  # noqa: F401,F403
