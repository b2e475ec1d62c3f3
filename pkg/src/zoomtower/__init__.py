"""Zooming sets, first-return Markov maps and tower measures for expanding and
derived-from-expanding endomorphisms of tori."""

from .errors import ZoomTowerError
from .induced import InducedBase, InducedMarkovMap, build_base, build_induced_map, certify_markov, return_time_tail
from .maps import (
    DoublingFamilyMap,
    DynamicalMap,
    LinearExpandingMap,
    PerturbedExampleMap,
    PowerMap,
    build_perturbed_example,
    derivative_cocycle,
    map_from_dict,
)
from .orbits import (
    PeriodicOrbit,
    build_preorbit_tree,
    find_periodic_points,
    forward_orbit_density,
    preorbit_density_certificate,
    verify_expanding_off_U0,
    verify_irg,
)
from .stats import correlation_decay, lyapunov_exponents, tail_decay_fit
from .torus import Ball, TorusPoint, is_epsilon_dense, torus_distance
from .tower import TowerMeasure, cylinder_measure, integrate, make_weights, sample_mu_a
from .zooming import ZoomingContraction, check_zooming_axioms, compute_source_zooming_data, is_zooming_time, zooming_frequency

__version__ = "0.1.0"
