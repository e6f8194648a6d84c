"""Sphere-packing bounds on the average-error exponent of two-user DM-MACs,
with exact oracles for small blocklengths."""
from .errors import (EnumerationCapError, HypothesisError, InvalidCodeError, MacspError,
                     RepairError, ValidationError)
from .probkit import CondPmf, JointPmf, Pmf, cond_kl, entropy, kl, mutual_info
from .typeclasses import JointType, SequenceType, VShell, type_class, type_of, vshell
from .macchannel import (DecodingPartition, ErrorReport, Mac, MultiUserCode, best_code_search,
                         evaluate, repair)
from .regions import RatePair, boundary, contains, max_sum_rate, pentagon, region_approx
from .exponents import (ExponentResult, VBadSpec, inner_min, sp_fixed_type, sp_thm2, sp_thm4,
                        transfer_bounds)
from .feasibility import UDecomposition, admissible_types, dominant_type, u_feasible
from .verify import ChainReport, extract_subcode_A3, verify_chain_A1, verify_identity_A2

__version__ = "0.1.0"
