"""gapcert: certified spectral-gap lower bounds for translation-invariant
frustration-free spin chains.

The pipeline: build an interaction term (``models``), pose the level-n gap
program over local generating terms (``lti``, ``sdp``), cross-validate with
classical finite-size criteria and their constructive witnesses
(``criteria``), harden solver output into strict certificates (``certify``),
and sanity-check everything against exact diagonalisation (``oracle``).
``grad`` differentiates the certified value over parent-Hamiltonian
deformations.
"""

from .certify import (CertificateRefused, GapCertificate, GroundProjector,
                      certified_solve, ground_projector, verify_certificate)
from .criteria import (FiniteSizeBound, InclusionReport, gm, inclusion_check,
                       knabe, martingale, martingale_eta, obc_gap,
                       witness_gm, witness_knabe, witness_martingale)
from .grad import AscentResult, ParamFamily, ascend_parent, gap_gradient
from .lti import (GaugeOperator, GeneratingTerm, TelescopeError, assemble_Q,
                  freedom_decompose, generating_term, lti_shift)
from .models import (LocalHamiltonian, ModelParams, aklt_term, block,
                     glauber_term, load_custom_term, potts_clock_term,
                     projectorize, save_custom_term, tfim_pair)
from .opalg import (DenseHermitian, SiteSpace, anticomm, embed_at, herm_basis,
                    min_eig, translate)
from .oracle import SpectralData, exact_sdp_consistency, spectrum
from .sdp import (LmiProblem, SdpSolution, SolveOpts, build_lmi,
                  check_slackness, lti_gap, solution_term, solve_dual_lti,
                  solve_lti)

__version__ = "0.1.0"
