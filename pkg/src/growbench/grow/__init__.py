"""Growth mechanics and new-neuron initializers."""
from .apply import apply_growth, event_norm, growth_signal, initialize, insertion_cross_gradient
from .init import (gradmax_objective, init_firefly_opt, init_gradmax, init_gradmax_opt,
                   init_random, init_zero_unit_bias)
from .mechanics import InitResult, grow_layer, grow_neurons, insertion_shapes, unit_shapes
from .plan import DIRECTIONS, METHODS, GrowthEvent, GrowthPlan, NormPolicy, target_norm

__all__ = [
    "DIRECTIONS", "METHODS", "GrowthEvent", "GrowthPlan", "InitResult", "NormPolicy",
    "apply_growth", "event_norm", "gradmax_objective", "grow_layer", "grow_neurons",
    "growth_signal", "init_firefly_opt", "init_gradmax", "init_gradmax_opt", "init_random",
    "init_zero_unit_bias", "initialize", "insertion_cross_gradient", "insertion_shapes",
    "target_norm", "unit_shapes",
]
