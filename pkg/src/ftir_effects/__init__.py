"""Estimate template spectra, treatment effects and sparse modification patterns
from replicate FTIR measurements with multiplicative, offset and noise errors."""

from .baselines import MscFit, msc_correct
from .effect import BcdOptions, EffectFit, bcd_fit, rank1_step, refit_alignments
from .errors import (DegenerateSignal, EigenGapWarning, EmptyCandidates, FrameNotOrthonormal,
                     FtirError, NearZeroSlope)
from .simulate import (GenerativeParams, Law, builtin_pattern, builtin_template,
                       generate_posttreatment, generate_pretreatment)
from .sparsify import (Frame, SparsifiedPattern, evaluate_G, scan_landscape,
                       select_and_polish, sparsify)
from .spectra import (DEFAULT_GRID, Spectrum, SpectrumSet, WavenumberGrid, read_spectra,
                      validate_set)
from .template import (AffineAlignment, TemplateFit, aligned_signals, align_to_target,
                       build_quadratic_form, estimate_template)

__all__ = [
    "MscFit",
    "msc_correct",
    "BcdOptions",
    "EffectFit",
    "bcd_fit",
    "rank1_step",
    "refit_alignments",
    "DegenerateSignal",
    "EigenGapWarning",
    "EmptyCandidates",
    "FrameNotOrthonormal",
    "FtirError",
    "NearZeroSlope",
    "GenerativeParams",
    "Law",
    "builtin_pattern",
    "builtin_template",
    "generate_posttreatment",
    "generate_pretreatment",
    "Frame",
    "SparsifiedPattern",
    "evaluate_G",
    "scan_landscape",
    "select_and_polish",
    "sparsify",
    "DEFAULT_GRID",
    "Spectrum",
    "SpectrumSet",
    "WavenumberGrid",
    "read_spectra",
    "validate_set",
    "AffineAlignment",
    "TemplateFit",
    "aligned_signals",
    "align_to_target",
    "build_quadratic_form",
    "estimate_template",
]

__version__ = "0.1.0"
