"""Finite element solver for the Richards equation in a bounded auxiliary variable ``u``.

Modules
-------
constitutive   soil water retention and relative permeability models
transform      the saturation <-> ``u`` map and its derivatives
mesh           P1 meshes, Gmsh reader, layered two-subdomain splits
assembly       sparse mass, stiffness, gravity and boundary assembly
schemes        time-stepping schemes for one subdomain
dd             Robin-Schwarz coupling of two subdomains
verification   manufactured solutions and convergence studies
scenario, cli  JSON scenarios and the ``urichards`` command
"""
from .constitutive import HydraulicModel, check_boundedness
from .dd import CoupledProblem, CouplingConfig, run_coupled
from .kernels import BACKEND
from .mesh import Mesh, interval_mesh, layered_split, read_msh, rectangle_mesh
from .schemes import Problem, SolverConfig, project_initial, run_transient
from .transform import S_from_u, dS_du, pressure_from_u, u_from_S, u_max

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CoupledProblem",
    "CouplingConfig",
    "HydraulicModel",
    "Mesh",
    "Problem",
    "S_from_u",
    "SolverConfig",
    "check_boundedness",
    "dS_du",
    "interval_mesh",
    "layered_split",
    "pressure_from_u",
    "project_initial",
    "read_msh",
    "rectangle_mesh",
    "run_coupled",
    "run_transient",
    "u_from_S",
    "u_max",
]
