"""
Controllers package for facestab
"""

from controllers.geometry import (
    project_onto_hull,
    brute_force_projection,
    support_function,
    face_gap,
    kkt_residual,
    tangent_basis,
    face_tangent_curvature
)

from controllers.entropic import (
    solve_entropic,
    pseudo_multipliers,
    fw_gap,
    frank_wolfe,
    fw_certificate,
    prescribe_epsilon,
    leakage_mass,
    epsilon_for_leakage,
    screen_and_certify
)

from controllers.verify import (
    check_main_bound,
    check_face_invariance,
    check_second_order,
    gap_statistic_mc,
    degenerate_leakage_demo,
    check_leakage_rate,
    check_fw_certificate,
    check_prescription,
    check_smr_lipschitz,
    summarize
)

from controllers.paged_attention import (
    build_cache,
    route_pages,
    route_tokens,
    sparse_decode,
    dense_decode,
    gap_diagnostic,
    decode_with_fallback,
    leakage_bound
)

from controllers.experiments import (
    scaling_experiment,
    ablation_experiment
)

from controllers.instances import (
    generate_instance,
    build_planted_cache,
    build_tie_cache,
    build_adversarial_cache
)

__all__ = [
    # Geometry controllers
    'project_onto_hull',
    'brute_force_projection',
    'support_function',
    'face_gap',
    'kkt_residual',
    'tangent_basis',
    'face_tangent_curvature',

    # Entropic solver controllers
    'solve_entropic',
    'pseudo_multipliers',
    'fw_gap',
    'frank_wolfe',
    'fw_certificate',
    'prescribe_epsilon',
    'leakage_mass',
    'epsilon_for_leakage',
    'screen_and_certify',

    # Verification controllers
    'check_main_bound',
    'check_face_invariance',
    'check_second_order',
    'gap_statistic_mc',
    'degenerate_leakage_demo',
    'check_leakage_rate',
    'check_fw_certificate',
    'check_prescription',
    'check_smr_lipschitz',
    'summarize',

    # Paged attention controllers
    'build_cache',
    'route_pages',
    'route_tokens',
    'sparse_decode',
    'dense_decode',
    'gap_diagnostic',
    'decode_with_fallback',
    'leakage_bound',

    # Experiments
    'scaling_experiment',
    'ablation_experiment',
    'generate_instance',
    'build_planted_cache',
    'build_tie_cache',
    'build_adversarial_cache'
]
