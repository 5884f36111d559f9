"""Fetal ECG extraction from few abdominal channels via optimal shrinkage."""

__version__ = "0.1.0"

from .decompose import (
    CombinationGrid,
    DecomposeConfig,
    DecompositionError,
    DecompositionOutput,
    SegmentMatrix,
    beat_agreement,
    bsqi,
    decompose,
    estimate_component,
    linear_combinations,
    nonlocal_median,
    segment,
    select_best,
    stitch,
)
from .evaluate import EvalReport, MatchResult, aggregate, detect_pt, f1, mae, match_peaks, nmae, nmde
from .preprocess import FilterSpec, butterworth_lowpass, median_detrend, notch_filter, preprocess
from .records import PeakList, Record, load_record, resample, save_record
from .rpeak import (
    DeshapeParams,
    IhrCurve,
    TfPlane,
    beat_track,
    deshape_spectrogram,
    detect_rpeaks,
    energy_detector,
    extract_ihr,
    fuse_peaks,
    spectrogram,
)
from .shrinkage import DenoiseConfig, ShrinkageResult, estimate_noise, eta_star, optimal_shrink
from .simulate import (
    SimConfig,
    SimRecord,
    generate_dataset,
    generate_record,
    mix,
    project_vcg,
    synthetic_ecg_donor,
    synthetic_vcg_donor,
)
