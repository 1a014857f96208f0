"""Interaction-landscape descriptors for moving particle sets around static meshes."""

__version__ = "0.1.0"

from ilscape.geometry import Mesh, load_mesh
from ilscape.sensor_grid import InteractionSpace, SensorTree, build_space, build_sensor_tree
from ilscape.trajectory import TrajectorySet, read_trajectories, synthesize, write_trajectories
from ilscape.descriptor import (
    ATTRIBUTES,
    AttributeWeights,
    InteractionDescriptor,
    bhattacharyya,
    distance,
    load_descriptor,
    save_descriptor,
)
from ilscape.pipeline import EncodingParams, Scene, encode_scene

__all__ = [
    "ATTRIBUTES",
    "AttributeWeights",
    "EncodingParams",
    "InteractionDescriptor",
    "InteractionSpace",
    "Mesh",
    "Scene",
    "SensorTree",
    "TrajectorySet",
    "bhattacharyya",
    "build_sensor_tree",
    "build_space",
    "distance",
    "encode_scene",
    "load_descriptor",
    "load_mesh",
    "read_trajectories",
    "save_descriptor",
    "synthesize",
    "write_trajectories",
]
