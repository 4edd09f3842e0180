"""divlab: a numerical laboratory for worst-case quantum channel discrimination.

Layers:

- ``linalg``: dense Hermitian kernel (eigendecompositions, matrix functions
  and their directional derivatives, partial traces, fidelity, random
  ensembles).
- ``qobjects``: density operators, CP maps in Kraus/Choi/Stinespring form,
  named channels, JSON wire formats.
- ``divergences``: Umegaki / sandwiched / Petz / max / hypothesis-testing /
  measured divergences with optimality certificates.
- ``channel_div``: minimum output channel divergences, regularization
  brackets, chain-rule margins.
- ``adversary``: adaptive and non-adaptive strategy rollouts and the
  discrimination game.
- ``accumulation``: divergence accumulation bounds with explicit finite-size
  constants and the auxiliary inequalities behind them.
- ``experiments`` / ``cli``: reproducible sweeps and the command-line front
  end.
"""

from . import accumulation, adversary, channel_div, divergences, experiments, linalg, qobjects
from .divergences import (CertifiedValue, DivergenceSpec, dmax, hypothesis_testing,
                          measured_relative, measured_renyi, petz, sandwiched, umegaki)
from .channel_div import (MinOutputResult, RegularizationBracket, chain_rule_margin,
                          dmax_min_output, fidelity_min_output, image_support_function,
                          min_output, min_output_measured, min_output_same_input,
                          regularization_bracket)
from .adversary import (BetaBracket, GameResult, Strategy, beta_fixed, beta_game,
                        embedding_strategy, exponent_trend, mixture_strategy,
                        nonadaptive_rollout, rollout)
from .accumulation import (AccumulationReport, SequentialChannel, SigmaAlphaWitness,
                           check_condition, check_fidelity_bound, check_petz32_bound,
                           conditional_entropy, eat_corollary_check, hmax_witness,
                           reat_bound, sigma_alpha)
from .qobjects import (DensityOperator, QuantumMap, StinespringIsometry, choi,
                       gad_channel, identity_channel, kraus_from_choi, replacer_channel,
                       stinespring, tensor_map, unitary_channel)

__version__ = "0.1.0"
