"""Spreading speeds of KPP-type reaction-diffusion equations with delay in shifting environments.

Three routes to the same number: explicit speed formulas (:mod:`.speeds`),
the free boundary of a reduced Hamilton-Jacobi obstacle problem (:mod:`.hj`)
and direct simulation (:mod:`.simulate`).
"""
from .dispersion import DispersionRelation, htilde
from .environment import (Profile, RayProfile, ShiftedEnvironment, check_hypotheses,
                          ray_limit, realize)
from .hj import (RaySolution, free_boundary, hj_solve, rho_closed_form,
                 viscosity_residual)
from .kernels import DelayKernel, make_kernel, mgf
from .simulate import (FrontTrace, InitialData, ModelSpec, Nonlinearity, estimate_speed,
                       simulate, tail_bound_check, verify_dichotomy)
from .speeds import (SpeedResult, bar_p, speed_from_profile, speed_homogeneous,
                     speed_nonlocal_pulling, speed_single_shift, speed_single_shift_kpp,
                     speed_two_shift_kpp, underline_p)

__version__ = "0.1.0"
