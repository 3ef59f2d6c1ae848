"""decnorm: directional decoupling norms and wave packet transforms on periodic grids."""

from .aniso import Direction, aniso_norm, aniso_norm_oracle, ball_volume, dilate, maximal_aniso
from .frames import (
    CapSystem,
    DirectionalFamily,
    RadialProfile,
    build_caps,
    build_directional_family,
    build_radial_profile,
    eval_rho,
    packet_symbol,
    parabolic_profile_symbol,
)
from .grid import (
    Symbol,
    TorusField,
    TorusGrid,
    apply_multiplier,
    load_field,
    lp_norm,
    resample_compose,
    save_field,
    sobolev_norm,
    to_frequency,
    to_physical,
)
from .norms import (
    NormSpec,
    dec_norm_continuous,
    dec_norm_discrete,
    exponent_alpha,
    exponent_d,
    exponent_s,
    exponent_sigma,
    fractional_exponent,
    isotropic_sqfn_norm,
    lqp_norm,
    parabolic_sqfn_norm,
)
from .transform import (
    PhaseSpaceField,
    RenormalizedFrame,
    analyze,
    build_frame,
    pair,
    project,
    synthesize,
)

__version__ = "0.1.0"
